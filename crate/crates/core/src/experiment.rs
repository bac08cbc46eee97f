//! Monte Carlo ensembles of the coupled system.
//!
//! Replica `i` runs with seed `master ^ i`. Replicas run in parallel in
//! fixed-size chunks and are folded into the moment accumulators in index
//! order, so the output does not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::engine::{CoupledModel, CoupledSim};
use crate::error::Result;
use crate::Resource;

/// Replicas simulated concurrently before being folded into the moments.
pub const CHUNK: usize = 32;

/// Per-event, per-agent ensemble mean and population variance of the shares
/// of one resource, aligned by capacity-event index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub resource: Resource,
    pub n: usize,
    pub replicas: usize,
    /// Row-major `events x n`.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl MomentSeries {
    pub fn events(&self) -> usize {
        self.mean.len() / self.n.max(1)
    }

    pub fn mean_at(&self, k: usize) -> &[f64] {
        &self.mean[k * self.n..(k + 1) * self.n]
    }

    pub fn variance_at(&self, k: usize) -> &[f64] {
        &self.variance[k * self.n..(k + 1) * self.n]
    }

    /// Series of one agent's mean.
    pub fn agent_mean(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.mean.iter().skip(i).step_by(self.n).copied()
    }

    pub fn agent_variance(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.variance.iter().skip(i).step_by(self.n).copied()
    }
}

/// Welford accumulator over vectors of fixed length.
#[derive(Debug, Clone)]
pub struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance (divides by the count).
    pub fn variance(&self) -> Vec<f64> {
        let c = self.count.max(1) as f64;
        self.m2.iter().map(|s| (s / c).max(0.0)).collect()
    }
}

/// Synchronization bookkeeping of one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SyncAudit {
    /// Meta events at which both clocks were not bit-identical.
    pub clock_mismatches: u64,
    /// Meta records without exactly `N` events per resource.
    pub window_size_errors: u64,
    /// Steps during which a frozen resource changed state.
    pub frozen_changes: u64,
}

impl SyncAudit {
    pub fn is_clean(&self) -> bool {
        self.clock_mismatches == 0 && self.window_size_errors == 0 && self.frozen_changes == 0
    }
}

/// Summary of one replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSummary {
    pub index: usize,
    pub seed: u64,
    /// Time average of the shares over all events, per resource.
    pub time_average_a: Vec<f64>,
    pub time_average_b: Vec<f64>,
    pub final_psi: f64,
    pub audit: SyncAudit,
}

/// Shares of one replica at every capacity event `0..=L N`, per resource.
#[derive(Debug, Clone)]
pub struct ReplicaTrajectory {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub summary: ReplicaSummary,
}

impl ReplicaTrajectory {
    pub fn shares(&self, c: Resource) -> &[Vec<f64>] {
        match c {
            Resource::A => &self.a,
            Resource::B => &self.b,
        }
    }
}

fn time_average(xs: &[Vec<f64>]) -> Vec<f64> {
    let mut w = Welford::new(xs.first().map_or(0, Vec::len));
    for x in xs {
        w.push(x);
    }
    w.mean().to_vec()
}

/// Runs replica `index` of `config`.
pub fn run_replica(config: &ExperimentConfig, model: &CoupledModel, index: usize) -> Result<ReplicaTrajectory> {
    let seed = config.seed ^ index as u64;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let (xa, xb) = config.initial_states(model, &mut init_rng)?;
    let window = model.window;
    let events = config.meta_events as usize * window + 1;
    let mut a = Vec::with_capacity(events);
    let mut b = Vec::with_capacity(events);
    a.push(xa.as_slice().to_vec());
    b.push(xb.as_slice().to_vec());
    // the initial draw consumed part of the stream; the event loop gets its own
    let mut sim = CoupledSim::new(model.clone(), xa, xb, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?.without_rows();
    let mut audit = SyncAudit {
        clock_mismatches: 0,
        window_size_errors: 0,
        frozen_changes: 0,
    };
    while sim.meta_index() < config.meta_events {
        let frozen = Resource::BOTH
            .into_iter()
            .find(|&c| sim.is_frozen(c))
            .map(|c| (c, sim.state(c).x.clone(), sim.state(c).psi.to_bits()));
        let step = sim.advance()?;
        if let Some((c, x, psi)) = &frozen {
            let st = sim.state(*c);
            // the meta event syncs the clock, and the optional global decrease moves x
            let moved = match step.meta {
                None => st.x != *x || st.psi.to_bits() != *psi,
                Some(_) => st.x != *x && !model.global_md,
            };
            audit.frozen_changes += u64::from(moved);
        }
        let st = sim.state(step.fired);
        match step.fired {
            Resource::A => a.push(st.x.as_slice().to_vec()),
            Resource::B => b.push(st.x.as_slice().to_vec()),
        }
        if let Some(rec) = step.meta {
            audit.clock_mismatches += u64::from(rec.psi_a.to_bits() != rec.psi_b.to_bits());
            audit.window_size_errors += u64::from(rec.events_a.len() != window || rec.events_b.len() != window);
        }
    }
    let summary = ReplicaSummary {
        index,
        seed,
        time_average_a: time_average(&a),
        time_average_b: time_average(&b),
        final_psi: sim.state(Resource::A).psi,
        audit,
    };
    Ok(ReplicaTrajectory { a, b, summary })
}

/// Ensemble statistics of a Monte Carlo experiment.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloResult {
    pub master_seed: u64,
    pub replicas: usize,
    pub window: usize,
    pub meta_events: u64,
    pub moments_a: MomentSeries,
    pub moments_b: MomentSeries,
    pub summaries: Vec<ReplicaSummary>,
}

impl MonteCarloResult {
    pub fn moments(&self, c: Resource) -> &MomentSeries {
        match c {
            Resource::A => &self.moments_a,
            Resource::B => &self.moments_b,
        }
    }

    /// Ensemble average of the per-replica time averages, per agent.
    pub fn long_run_mean(&self, c: Resource) -> Vec<f64> {
        let n = self.moments_a.n;
        let mut w = Welford::new(n);
        for s in &self.summaries {
            w.push(match c {
                Resource::A => &s.time_average_a,
                Resource::B => &s.time_average_b,
            });
        }
        w.mean().to_vec()
    }

    /// Largest last-quartile drift over agents of the mean and variance series.
    pub fn drift(&self, c: Resource) -> Drift {
        let m = self.moments(c);
        let mut out = Drift { mean: 0.0, variance: 0.0 };
        for i in 0..m.n {
            let mean: Vec<f64> = m.agent_mean(i).collect();
            let var: Vec<f64> = m.agent_variance(i).collect();
            out.mean = out.mean.max(quartile_drift(&mean));
            out.variance = out.variance.max(quartile_drift(&var));
        }
        out
    }

    pub fn audit(&self) -> SyncAudit {
        self.summaries.iter().fold(
            SyncAudit {
                clock_mismatches: 0,
                window_size_errors: 0,
                frozen_changes: 0,
            },
            |acc, s| SyncAudit {
                clock_mismatches: acc.clock_mismatches + s.audit.clock_mismatches,
                window_size_errors: acc.window_size_errors + s.audit.window_size_errors,
                frozen_changes: acc.frozen_changes + s.audit.frozen_changes,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Drift {
    pub mean: f64,
    pub variance: f64,
}

/// `|avg(last quarter) - avg(third quarter)|` of a series.
pub fn quartile_drift(series: &[f64]) -> f64 {
    let len = series.len();
    if len < 4 {
        return 0.0;
    }
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (avg(&series[3 * len / 4..]) - avg(&series[len / 2..3 * len / 4])).abs()
}

/// Runs `config.replicas` replicas and aggregates their moments.
pub fn run_montecarlo(config: &ExperimentConfig) -> Result<MonteCarloResult> {
    let model = config.model()?;
    let n = model.n();
    let events = config.meta_events as usize * config.window + 1;
    let mut acc_a: Vec<Welford> = (0..events).map(|_| Welford::new(n)).collect();
    let mut acc_b = acc_a.clone();
    let mut summaries = Vec::with_capacity(config.replicas);
    for start in (0..config.replicas).step_by(CHUNK) {
        let end = (start + CHUNK).min(config.replicas);
        let chunk: Vec<ReplicaTrajectory> = (start..end)
            .into_par_iter()
            .map(|i| run_replica(config, &model, i))
            .collect::<Result<_>>()?;
        for rep in chunk {
            for (acc, xs) in [(&mut acc_a, &rep.a), (&mut acc_b, &rep.b)] {
                for (w, x) in acc.iter_mut().zip(xs) {
                    w.push(x);
                }
            }
            summaries.push(rep.summary);
        }
    }
    let series = |resource, acc: &[Welford]| MomentSeries {
        resource,
        n,
        replicas: config.replicas,
        mean: acc.iter().flat_map(|w| w.mean().to_vec()).collect(),
        variance: acc.iter().flat_map(Welford::variance).collect(),
    };
    Ok(MonteCarloResult {
        master_seed: config.seed,
        replicas: config.replicas,
        window: config.window,
        meta_events: config.meta_events,
        moments_a: series(Resource::A, &acc_a),
        moments_b: series(Resource::B, &acc_b),
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::table1();
        cfg.meta_events = 20;
        cfg.replicas = 5;
        cfg
    }

    #[test]
    fn welford_matches_two_pass() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f64>> = (0..1000).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let mut w = Welford::new(3);
        data.iter().for_each(|x| w.push(x));
        for j in 0..3 {
            let mean = data.iter().map(|x| x[j]).sum::<f64>() / 1000.0;
            let var = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / 1000.0;
            assert_abs_diff_eq!(w.mean()[j], mean, epsilon = 1e-12);
            assert_abs_diff_eq!(w.variance()[j], var, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_replica_has_zero_variance() {
        let mut cfg = small();
        cfg.replicas = 1;
        let res = run_montecarlo(&cfg).unwrap();
        let model = cfg.model().unwrap();
        let rep = run_replica(&cfg, &model, 0).unwrap();
        assert_eq!(res.moments_a.events(), 20 * 5 + 1);
        for k in 0..res.moments_a.events() {
            assert_eq!(res.moments_a.mean_at(k), rep.a[k].as_slice());
            assert_eq!(res.moments_b.mean_at(k), rep.b[k].as_slice());
            assert!(res.moments_a.variance_at(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn replicas_use_xor_seeds() {
        let mut cfg = small();
        cfg.seed = 0b1010;
        let res = run_montecarlo(&cfg).unwrap();
        let seeds: Vec<u64> = res.summaries.iter().map(|s| s.seed).collect();
        assert_eq!(seeds, vec![10, 11, 8, 9, 14]);
    }

    #[test]
    fn deterministic_and_clean() {
        let cfg = small();
        let r1 = run_montecarlo(&cfg).unwrap();
        let r2 = run_montecarlo(&cfg).unwrap();
        assert_eq!(r1.moments_a, r2.moments_a);
        assert_eq!(r1.summaries, r2.summaries);
        assert!(r1.audit().is_clean());
        for k in 0..r1.moments_b.events() {
            assert_abs_diff_eq!(r1.moments_b.mean_at(k).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn global_decrease_keeps_audit_clean() {
        let mut cfg = small();
        cfg.global_md = true;
        let res = run_montecarlo(&cfg).unwrap();
        assert!(res.audit().is_clean());
    }

    #[test]
    fn quartile_drift_examples() {
        assert_eq!(quartile_drift(&[1.0; 8]), 0.0);
        assert_eq!(quartile_drift(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0]), 1.0);
        assert_eq!(quartile_drift(&[1.0]), 0.0);
    }
}
