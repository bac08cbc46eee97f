//! Numerical certificates for the lifted chain.
//!
//! * [`check_nonexpansive`]: every lifted transition is non-expansive in the
//!   block max 1-norm.
//! * [`check_subspace_invariance`]: vectors whose first blocks sum to zero
//!   stay that way.
//! * [`check_full_drop_contraction`]: on that subspace the all-full-drop
//!   window contracts by `q = max_c (1/N) sum_{i=1..N} beta_c^i`.
//! * [`check_barnsley`]: the average-contraction and overlap conditions of
//!   Barnsley's theorem, by exhaustive enumeration of pattern windows on
//!   small instances.
//! * [`perron_oracle`]: the stationary mean of a single resource under
//!   state-independent probabilities, as the simplex fixed point of the
//!   expected AIMD matrix.
//!
//! All sampling is seeded; workers own their generators and results are
//! merged by max/min reductions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::aimd::{build_aimd_matrix, contraction_factor, l1_norm, DropPattern, ResourceParams, ShareVector};
use crate::engine::single_resource_step;
use crate::engine::SingleResourceState;
use crate::error::{Error, Result};
use crate::lifted::{
    build_gamma, event_order, lifted_pattern_probability, norm_n1, GammaMatrix, LiftedState, PatternWindow,
    DENSE_LIMIT,
};
use crate::policy::{pattern_probability, AveragePolicy, ConstantPolicy, DropPolicy, PerAgentProbabilities};
use crate::Resource;

pub const NONEXPANSIVE_TOL: f64 = 1e-12;
pub const SUBSPACE_TOL: f64 = 1e-12;
pub const CONTRACTION_TOL: f64 = 1e-9;
/// Largest number of pattern windows [`check_barnsley`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 1 << 8;

/// Uniform (Dirichlet(1, ..., 1)) point of the simplex.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// A point of `Sigma_n^{2N}` with independent uniform blocks.
pub fn sample_lifted_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, window: usize) -> Vec<f64> {
    (0..2 * window).flat_map(|_| sample_simplex(rng, n)).collect()
}

/// The difference of two independent points of `Sigma_n^{2N}`; its first
/// blocks (indeed all blocks) sum to zero.
pub fn sample_subspace<R: Rng + ?Sized>(rng: &mut R, n: usize, window: usize) -> Vec<f64> {
    let x = sample_lifted_simplex(rng, n, window);
    let y = sample_lifted_simplex(rng, n, window);
    x.iter().zip(&y).map(|(a, b)| a - b).collect()
}

/// Pattern windows with independently uniform patterns and the event order
/// they induce from `x_a`, `x_b`.
pub fn sample_pattern_window<R: Rng + ?Sized>(
    rng: &mut R,
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    window: usize,
) -> PatternWindow {
    let n = params_a.n();
    let draw = |rng: &mut R| -> Vec<DropPattern> {
        (0..window)
            .map(|_| DropPattern::new((0..n).map(|_| rng.random::<bool>()).collect()))
            .collect()
    };
    let a = draw(rng);
    let b = draw(rng);
    let x = ShareVector::uniform(n);
    let order = event_order(params_a, params_b, &x, &x, &a, &b);
    PatternWindow { a, b, order }
}

fn size_guard(n: usize, window: usize) -> Result<()> {
    if n * window > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            what: "n * N",
            size: n * window,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

fn check_pair(params_a: &ResourceParams, params_b: &ResourceParams, window: usize) -> Result<usize> {
    if params_a.n() != params_b.n() {
        return Err(Error::DimensionMismatch {
            expected: params_a.n(),
            actual: params_b.n(),
        });
    }
    if window == 0 {
        return Err(Error::invalid("window", "must be at least 1"));
    }
    size_guard(params_a.n(), window)?;
    Ok(params_a.n())
}

/// Outcome of a norm-ratio check.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub check: &'static str,
    /// Largest observed `||Gamma v|| / ||v||`.
    pub max_ratio: f64,
    /// Bound the ratio is checked against (before tolerance).
    pub bound: f64,
    pub tolerance: f64,
    pub violations: usize,
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Outcome of the zero-sum subspace check.
#[derive(Debug, Clone, Serialize)]
pub struct SubspaceReport {
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Seeds one generator per work item so results do not depend on scheduling.
fn item_rng(seed: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item);
    rng
}

fn ratio(gamma: &GammaMatrix, v: &[f64], n: usize) -> Option<f64> {
    let denom = norm_n1(v, n).ok()?;
    if denom == 0.0 {
        return None;
    }
    Some(norm_n1(&gamma.apply_vec(v), n).ok()? / denom)
}

/// `||Gamma zeta|| <= ||zeta||` for `gammas` random transitions and
/// `samples` random vectors of `R^{2nN}` each.
pub fn check_nonexpansive(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    window: usize,
    gammas: usize,
    samples: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let n = check_pair(params_a, params_b, window)?;
    let results: Vec<(f64, usize)> = (0..gammas as u64)
        .into_par_iter()
        .map(|g| -> Result<(f64, usize)> {
            let mut rng = item_rng(seed, g);
            let pw = sample_pattern_window(&mut rng, params_a, params_b, window);
            let gamma = build_gamma(params_a, params_b, &pw)?;
            let mut worst = 0.0f64;
            let mut bad = 0;
            for _ in 0..samples {
                let v: Vec<f64> = (0..2 * n * window).map(|_| rng.random_range(-1.0..1.0)).collect();
                if let Some(r) = ratio(&gamma, &v, n) {
                    worst = worst.max(r);
                    bad += usize::from(r > 1.0 + NONEXPANSIVE_TOL);
                }
            }
            Ok((worst, bad))
        })
        .collect::<Result<_>>()?;
    let max_ratio = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let violations = results.iter().map(|r| r.1).sum();
    Ok(ContractionReport {
        check: "nonexpansive",
        max_ratio,
        bound: 1.0,
        tolerance: NONEXPANSIVE_TOL,
        violations,
        samples: gammas * samples,
        seed,
        pass: violations == 0,
    })
}

/// `e^T (Gamma zeta)_{c,1} = 0` whenever `e^T zeta_{c,1} = 0`.
pub fn check_subspace_invariance(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    window: usize,
    gammas: usize,
    samples: usize,
    seed: u64,
) -> Result<SubspaceReport> {
    let n = check_pair(params_a, params_b, window)?;
    let half = n * window;
    let residuals: Vec<f64> = (0..gammas as u64)
        .into_par_iter()
        .map(|g| -> Result<f64> {
            let mut rng = item_rng(seed, g);
            let pw = sample_pattern_window(&mut rng, params_a, params_b, window);
            let gamma = build_gamma(params_a, params_b, &pw)?;
            let mut worst = 0.0f64;
            for _ in 0..samples {
                let v = sample_subspace(&mut rng, n, window);
                let out = gamma.apply_vec(&v);
                for offset in [0, half] {
                    worst = worst.max(out[offset..offset + n].iter().sum::<f64>().abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let max_residual = residuals.into_iter().fold(0.0, f64::max);
    Ok(SubspaceReport {
        max_residual,
        tolerance: SUBSPACE_TOL,
        samples: gammas * samples,
        seed,
        pass: max_residual <= SUBSPACE_TOL,
    })
}

/// The full-drop contraction bound `q`, maximized over both resources, with
/// each resource represented by its largest decrease factor.
pub fn full_drop_bound(params_a: &ResourceParams, params_b: &ResourceParams, window: usize) -> Result<f64> {
    Ok(contraction_factor(params_a.max_beta(), window)?.max(contraction_factor(params_b.max_beta(), window)?))
}

/// `||Gamma_1 zeta|| <= q ||zeta||` on the zero-sum subspace.
pub fn check_full_drop_contraction(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    window: usize,
    samples: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let n = check_pair(params_a, params_b, window)?;
    let q = full_drop_bound(params_a, params_b, window)?;
    let gamma = build_gamma(params_a, params_b, &PatternWindow::full_drop(n, window))?;
    const CHUNK: usize = 1024;
    let chunks = samples.div_ceil(CHUNK);
    let results: Vec<(f64, usize)> = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = item_rng(seed, c);
            let count = CHUNK.min(samples - c as usize * CHUNK);
            let mut worst = 0.0f64;
            let mut bad = 0;
            for _ in 0..count {
                let v = sample_subspace(&mut rng, n, window);
                if let Some(r) = ratio(&gamma, &v, n) {
                    worst = worst.max(r);
                    bad += usize::from(r > q + CONTRACTION_TOL);
                }
            }
            (worst, bad)
        })
        .collect();
    let max_ratio = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let violations = results.iter().map(|r| r.1).sum();
    Ok(ContractionReport {
        check: "full_drop_contraction",
        max_ratio,
        bound: q,
        tolerance: CONTRACTION_TOL,
        violations,
        samples,
        seed,
        pass: violations == 0,
    })
}

/// Outcome of the Barnsley-condition check.
#[derive(Debug, Clone, Serialize)]
pub struct BarnsleyReport {
    pub q: f64,
    /// Smallest full-drop window probability over the sampled states.
    pub p_hat: f64,
    /// `floor^{2nN}`, valid for every state.
    pub p_hat_lower_bound: f64,
    /// `p_hat q + (1 - p_hat)`.
    pub r: f64,
    /// `p_hat^2`.
    pub delta: f64,
    /// Largest `sum_k p_k(zeta) ||Gamma_k (zeta - eta)|| / ||zeta - eta||`.
    pub max_average_ratio: f64,
    /// Smallest `sum_{k in C} p_k(zeta) p_k(eta)`.
    pub min_overlap: f64,
    /// Largest deviation of `sum_k p_k(zeta)` from one.
    pub max_probability_defect: f64,
    pub violations_a: usize,
    pub violations_b: usize,
    pub windows: usize,
    pub pairs: usize,
    pub seed: u64,
    pub pass_a: bool,
    pub pass_b: bool,
    pub pass: bool,
}

/// All pattern windows `(nu, mu)` for `n` agents and window `N`.
pub fn enumerate_windows(n: usize, window: usize) -> Result<Vec<(Vec<DropPattern>, Vec<DropPattern>)>> {
    let per_resource = 1usize
        .checked_shl((n * window) as u32)
        .filter(|_| n * window < usize::BITS as usize)
        .ok_or(Error::SizeGuard {
            what: "pattern windows",
            size: usize::MAX,
            limit: ENUMERATION_LIMIT,
        })?;
    let total = per_resource.saturating_mul(per_resource);
    if total > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            what: "pattern windows",
            size: total,
            limit: ENUMERATION_LIMIT,
        });
    }
    let seq = |code: usize| -> Vec<DropPattern> {
        (0..window)
            .map(|k| DropPattern::from_index(((code >> (k * n)) & ((1 << n) - 1)) as u64, n))
            .collect()
    };
    Ok((0..per_resource)
        .flat_map(|ca| (0..per_resource).map(move |cb| (ca, cb)))
        .map(|(ca, cb)| (seq(ca), seq(cb)))
        .collect())
}

/// Probabilities of every enumerated window from `zeta`; event orders are
/// derived from the window-opening states.
fn window_probabilities(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    zeta: &LiftedState,
    windows: &[(Vec<DropPattern>, Vec<DropPattern>)],
    policy: &dyn AveragePolicy,
) -> Result<Vec<f64>> {
    let xa = ShareVector::with_tolerance(zeta.block(Resource::A, 1).to_vec(), 1e-9)?;
    let xb = ShareVector::with_tolerance(zeta.block(Resource::B, 1).to_vec(), 1e-9)?;
    windows
        .iter()
        .map(|(a, b)| {
            let order = event_order(params_a, params_b, &xa, &xb, a, b);
            let pw = PatternWindow {
                a: a.clone(),
                b: b.clone(),
                order,
            };
            lifted_pattern_probability(params_a, params_b, zeta, &pw, policy)
        })
        .collect()
}

/// Checks both Barnsley conditions on `pairs` random pairs of lifted states
/// by enumerating every pattern window.
pub fn check_barnsley(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    policy: &dyn AveragePolicy,
    window: usize,
    pairs: usize,
    seed: u64,
) -> Result<BarnsleyReport> {
    let n = check_pair(params_a, params_b, window)?;
    let windows = enumerate_windows(n, window)?;
    let full = windows
        .iter()
        .position(|(a, b)| a.iter().chain(b).all(DropPattern::is_full))
        .expect("the full-drop window is enumerated");
    let gammas: Vec<GammaMatrix> = windows
        .iter()
        .map(|(a, b)| {
            build_gamma(
                params_a,
                params_b,
                &PatternWindow {
                    a: a.clone(),
                    b: b.clone(),
                    order: (0..window).flat_map(|_| [Resource::A, Resource::B]).collect(),
                },
            )
        })
        .collect::<Result<_>>()?;
    let q = full_drop_bound(params_a, params_b, window)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<(LiftedState, LiftedState)> = (0..pairs)
        .map(|_| -> Result<_> {
            let z = LiftedState::from_vector(n, window, &sample_lifted_simplex(&mut rng, n, window))?;
            let e = LiftedState::from_vector(n, window, &sample_lifted_simplex(&mut rng, n, window))?;
            Ok((z, e))
        })
        .collect::<Result<_>>()?;

    let probs: Vec<(Vec<f64>, Vec<f64>)> = states
        .par_iter()
        .map(|(z, e)| {
            Ok((
                window_probabilities(params_a, params_b, z, &windows, policy)?,
                window_probabilities(params_a, params_b, e, &windows, policy)?,
            ))
        })
        .collect::<Result<_>>()?;

    let p_hat = probs
        .iter()
        .flat_map(|(pz, pe)| [pz[full], pe[full]])
        .fold(1.0, f64::min);
    let r = p_hat * q + (1.0 - p_hat);
    let delta = p_hat * p_hat;
    let max_probability_defect = probs
        .iter()
        .flat_map(|(pz, pe)| [pz.iter().sum::<f64>(), pe.iter().sum::<f64>()])
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);

    struct PairOutcome {
        ratio: f64,
        overlap: f64,
        bad_a: bool,
        bad_b: bool,
    }
    let outcomes: Vec<PairOutcome> = states
        .par_iter()
        .zip(probs.par_iter())
        .map(|((z, e), (pz, pe))| {
            let diff: Vec<f64> = z.to_vector().iter().zip(e.to_vector()).map(|(a, b)| a - b).collect();
            let dist = norm_n1(&diff, n).expect("length is a multiple of n");
            let mut average = 0.0;
            let mut overlap = 0.0;
            for (k, gamma) in gammas.iter().enumerate() {
                let image = norm_n1(&gamma.apply_vec(&diff), n).expect("length is a multiple of n");
                average += pz[k] * image;
                if image <= r * dist {
                    overlap += pz[k] * pe[k];
                }
            }
            PairOutcome {
                ratio: if dist > 0.0 { average / dist } else { 0.0 },
                overlap,
                bad_a: average > r * dist + 1e-12,
                bad_b: overlap < delta,
            }
        })
        .collect();

    let violations_a = outcomes.iter().filter(|o| o.bad_a).count();
    let violations_b = outcomes.iter().filter(|o| o.bad_b).count();
    let pass_a = violations_a == 0 && r < 1.0;
    let pass_b = violations_b == 0 && delta > 0.0;
    Ok(BarnsleyReport {
        q,
        p_hat,
        p_hat_lower_bound: policy.probability_floor().powi((2 * n * window) as i32),
        r,
        delta,
        max_average_ratio: outcomes.iter().map(|o| o.ratio).fold(0.0, f64::max),
        min_overlap: outcomes.iter().map(|o| o.overlap).fold(f64::INFINITY, f64::min),
        max_probability_defect,
        violations_a,
        violations_b,
        windows: windows.len(),
        pairs,
        seed,
        pass_a,
        pass_b,
        pass: pass_a && pass_b,
    })
}

/// `sum_patterns P(pattern) A(pattern)`: the expected AIMD matrix under
/// independent responses.
pub fn mean_matrix(params: &ResourceParams, p: &PerAgentProbabilities) -> Result<DMatrix<f64>> {
    let n = params.n();
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: p.len(),
        });
    }
    if n > 16 {
        return Err(Error::SizeGuard {
            what: "agents",
            size: n,
            limit: 16,
        });
    }
    Ok(DropPattern::all(n).fold(DMatrix::zeros(n, n), |acc, pat| {
        let w = pattern_probability(p, &pat);
        acc + build_aimd_matrix(params, &pat) * w
    }))
}

pub const PERRON_RESIDUAL: f64 = 1e-12;
pub const PERRON_MAX_ITERATIONS: usize = 1_000_000;

/// Simplex fixed point of the expected AIMD matrix, by power iteration.
pub fn perron_oracle(params: &ResourceParams, p: &PerAgentProbabilities) -> Result<ShareVector> {
    let mean = mean_matrix(params, p)?;
    let n = params.n();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..PERRON_MAX_ITERATIONS {
        let y = &mean * &x;
        residual = (&y - &x).abs().sum();
        x = y;
        if residual <= PERRON_RESIDUAL {
            let sum = x.sum();
            return ShareVector::with_tolerance(x.iter().map(|v| v / sum).collect(), 1e-9);
        }
    }
    Err(Error::NoConvergence {
        iterations: PERRON_MAX_ITERATIONS,
        residual,
    })
}

/// Time average of a simulated single resource against its Perron vector.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub simulated: Vec<f64>,
    pub perron: Vec<f64>,
    pub l1_gap: f64,
    pub events: u64,
    pub seed: u64,
}

/// Simulates `events` capacity events under constant probabilities and
/// compares the time-averaged shares with [`perron_oracle`].
pub fn compare_with_perron(
    params: &ResourceParams,
    p: &PerAgentProbabilities,
    x0: ShareVector,
    events: u64,
    seed: u64,
) -> Result<OracleComparison> {
    let perron = perron_oracle(params, p)?;
    let policy = DropPolicy::Constant(ConstantPolicy::uniform(p.clone()));
    let mut state = SingleResourceState::new(x0, 1, seed);
    for _ in 0..events {
        single_resource_step(&mut state, params, &policy)?;
    }
    let simulated = state.long_term.mean().to_vec();
    Ok(OracleComparison {
        l1_gap: crate::aimd::l1_distance(&simulated, perron.as_slice()),
        simulated,
        perron: perron.into_vec(),
        events,
        seed,
    })
}

/// Full verification bundle for one coupled configuration.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub n: usize,
    pub window: usize,
    pub q_a: f64,
    pub q_b: f64,
    pub nonexpansive: ContractionReport,
    pub subspace: SubspaceReport,
    pub full_drop: ContractionReport,
    /// Present when the instance is small enough to enumerate.
    pub barnsley: Option<BarnsleyReport>,
    pub barnsley_skipped: Option<String>,
    pub pass: bool,
}

/// Sample counts for [`verify_all`].
#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub gammas: usize,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
}

/// Runs every lifted-chain check the instance admits.
pub fn verify_all(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    window: usize,
    policy: &DropPolicy,
    settings: VerifySettings,
) -> Result<VerificationReport> {
    let nonexpansive = check_nonexpansive(params_a, params_b, window, settings.gammas, settings.samples, settings.seed)?;
    let subspace =
        check_subspace_invariance(params_a, params_b, window, settings.gammas, settings.samples, settings.seed)?;
    let full_drop = check_full_drop_contraction(
        params_a,
        params_b,
        window,
        settings.gammas * settings.samples,
        settings.seed,
    )?;
    let n = params_a.n();
    let (barnsley, barnsley_skipped) = match policy.as_average_policy() {
        None => (None, Some("policy reads averages outside the lifted state".to_owned())),
        Some(_) if enumerate_windows(n, window).is_err() => (
            None,
            Some(format!("(2^n)^(2N) pattern windows exceed {ENUMERATION_LIMIT}")),
        ),
        Some(p) => (
            Some(check_barnsley(params_a, params_b, p, window, settings.pairs, settings.seed)?),
            None,
        ),
    };
    let pass = nonexpansive.pass && subspace.pass && full_drop.pass && barnsley.as_ref().is_none_or(|b| b.pass);
    Ok(VerificationReport {
        n,
        window,
        q_a: contraction_factor(params_a.max_beta(), window)?,
        q_b: contraction_factor(params_b.max_beta(), window)?,
        nonexpansive,
        subspace,
        full_drop,
        barnsley,
        barnsley_skipped,
        pass,
    })
}

/// `l1` norm helper re-exported for reports and examples.
pub fn l1(v: &[f64]) -> f64 {
    l1_norm(v)
}
