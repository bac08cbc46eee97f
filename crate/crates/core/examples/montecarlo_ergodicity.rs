//! Ensemble statistics from two initial-condition regimes.
//!
//! Runs the four-agent study from demands drawn on `[0, 0.25]` and on
//! `[0.5, 0.75]`, compares the per-agent long-run means, and writes moment
//! CSVs and mean/variance band plots.
//!
//! Run with:
//!   cargo run --release --example montecarlo_ergodicity -- [out_dir]

use std::path::PathBuf;

use coupled_aimd::config::ExperimentConfig;
use coupled_aimd::experiment::run_montecarlo;
use coupled_aimd::output::{emit_csv, emit_plot, CsvData, Plot};
use coupled_aimd::{Resource, Result};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let low = ExperimentConfig::table1();
    let mut high = low.clone();
    high.initial.low = 0.5;
    high.initial.high = 0.75;

    let runs = [("low", run_montecarlo(&low)?), ("high", run_montecarlo(&high)?)];
    for c in Resource::BOTH {
        let (a, b) = (runs[0].1.long_run_mean(c), runs[1].1.long_run_mean(c));
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("resource {c}: low {a:.4?}\n            high {b:.4?}\n            max gap {gap:.2e}");
    }
    for (name, res) in &runs {
        for c in Resource::BOTH {
            let d = res.drift(c);
            println!("{name:>4} {c}: last-quartile drift mean {:.2e} variance {:.2e}", d.mean, d.variance);
            emit_plot(Plot::Moments(res.moments(c)), &out.join(format!("moments_{name}_{c}.svg")))?;
        }
        emit_csv(CsvData::Moments(&[&res.moments_a, &res.moments_b]), &out.join(format!("moments_{name}.csv")))?;
    }
    println!("outputs in {}", out.display());
    Ok(())
}
