//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 when a verification
//! check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coupled_aimd::config::ExperimentConfig;
use coupled_aimd::engine::run;
use coupled_aimd::experiment::run_montecarlo;
use coupled_aimd::output::{emit_csv, emit_json, emit_plot, CsvData, Plot, UtilizationSeries};
use coupled_aimd::policy::DropPolicy;
use coupled_aimd::verify::{compare_with_perron, verify_all, VerifySettings};
use coupled_aimd::{Error, Resource, ShareVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Default output directory when neither `--out` nor the config sets one.
const OUT_ENV: &str = "AIMD_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "aimd", version, about = "Coupled AIMD simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (TOML). Defaults to the four-agent study.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config and $AIMD_OUT_DIR.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One coupled run: trajectories, lifted-state snapshots, utilization plot.
    Simulate(Common),
    /// Ensemble moments over the configured number of replicas.
    Montecarlo(Common),
    /// Lifted-chain contraction and Barnsley checks.
    Verify(Common),
    /// Single-resource time averages against the Perron vector.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Largest accepted 1-norm gap.
        #[arg(long, default_value_t = 1e-2)]
        tolerance: f64,
    },
}

enum Failure {
    Invalid(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e)
    }
}

fn setup(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::table1(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    if let Some(t) = common.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok((cfg, out))
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = setup(common)?;
    let model = cfg.model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (xa, xb) = cfg.initial_states(&model, &mut rng)?;
    let (n, window) = (model.n(), model.window);
    let (pa, pb) = (model.params_a.clone(), model.params_b.clone());
    let res = run(model, xa, xb, cfg.meta_events, cfg.seed)?;
    emit_csv(CsvData::Trajectories { n, rows: &res.rows }, &out.join("trajectories.csv"))?;
    emit_csv(
        CsvData::Zeta {
            n,
            window,
            records: &res.records,
        },
        &out.join("zeta.csv"),
    )?;
    let util = UtilizationSeries::from_rows(&res.rows, &pa, &pb);
    emit_plot(Plot::Utilization(&util), &out.join("utilization.svg"))?;
    let last = res.records.last().expect("meta_events >= 1");
    emit_json(
        &json!({
            "seed": cfg.seed,
            "meta_events": cfg.meta_events,
            "final_psi": last.psi_a,
            "final_zeta": last.zeta.to_vector(),
        }),
        &out.join("simulate.json"),
    )?;
    println!("{} meta events, final time {:.6}, outputs in {}", res.records.len(), last.psi_a, out.display());
    Ok(())
}

fn montecarlo(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = setup(common)?;
    let res = run_montecarlo(&cfg)?;
    let n = res.moments_a.n;
    emit_csv(CsvData::Moments(&[&res.moments_a, &res.moments_b]), &out.join("moments.csv"))?;
    emit_csv(
        CsvData::Replicas {
            n,
            summaries: &res.summaries,
        },
        &out.join("replicas.csv"),
    )?;
    emit_plot(Plot::Moments(&res.moments_a), &out.join("moments_a.svg"))?;
    emit_plot(Plot::Moments(&res.moments_b), &out.join("moments_b.svg"))?;
    let summary = json!({
        "master_seed": res.master_seed,
        "replicas": res.replicas,
        "window": res.window,
        "meta_events": res.meta_events,
        "long_run_mean_a": res.long_run_mean(Resource::A),
        "long_run_mean_b": res.long_run_mean(Resource::B),
        "drift_a": res.drift(Resource::A),
        "drift_b": res.drift(Resource::B),
        "sync_audit": res.audit(),
    });
    emit_json(&summary, &out.join("montecarlo.json"))?;
    println!("{} replicas, outputs in {}", res.replicas, out.display());
    Ok(())
}

fn verify(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = setup(common)?;
    let r = cfg.validate()?;
    let report = verify_all(
        &r.params_a,
        &r.params_b,
        cfg.window,
        &r.policy,
        VerifySettings {
            gammas: cfg.verify.gammas,
            samples: cfg.verify.samples,
            pairs: cfg.verify.pairs,
            seed: cfg.seed,
        },
    )?;
    let path = out.join("verify.json");
    emit_json(&report, &path)?;
    println!(
        "nonexpansive {}  subspace {}  full-drop {} (max ratio {:.6} vs q {:.6})  barnsley {}",
        verdict(report.nonexpansive.pass),
        verdict(report.subspace.pass),
        verdict(report.full_drop.pass),
        report.full_drop.max_ratio,
        report.full_drop.bound,
        report.barnsley.as_ref().map_or("skipped", |b| verdict(b.pass)),
    );
    println!("report: {}", path.display());
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check("verification failed".into()))
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn oracle(common: &Common, tolerance: f64) -> Result<(), Failure> {
    let (cfg, out) = setup(common)?;
    let r = cfg.validate()?;
    let DropPolicy::Constant(c) = &r.policy else {
        return Err(Failure::Invalid(Error::InvalidParameter {
            field: "policy.kind".into(),
            reason: "the oracle needs a constant policy".into(),
        }));
    };
    let mut reports = Vec::new();
    let mut worst: f64 = 0.0;
    for (res, params, p) in [(Resource::A, &r.params_a, &c.a), (Resource::B, &r.params_b, &c.b)] {
        let cmp = compare_with_perron(params, p, ShareVector::uniform(params.n()), cfg.oracle_events, cfg.seed)?;
        println!("resource {res}");
        println!("  simulated {}", fmt_vec(&cmp.simulated));
        println!("  perron    {}", fmt_vec(&cmp.perron));
        println!("  l1 gap    {:.3e}", cmp.l1_gap);
        worst = worst.max(cmp.l1_gap);
        reports.push(json!({ "resource": res, "comparison": cmp }));
    }
    emit_json(&json!({ "tolerance": tolerance, "resources": reports }), &out.join("oracle.json"))?;
    if worst <= tolerance {
        Ok(())
    } else {
        Err(Failure::Check(format!("gap {worst:.3e} exceeds {tolerance:e}")))
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Montecarlo(c) => montecarlo(c),
        Command::Verify(c) => verify(c),
        Command::Oracle { common, tolerance } => oracle(common, *tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("verification failure: {msg}");
            ExitCode::from(2)
        }
    }
}
