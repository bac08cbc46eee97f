//! Drop policies: per-agent probabilities of responding to a capacity event.
//!
//! Agents respond independently, so a per-agent probability vector induces
//! the product distribution over [`DropPattern`]s. Every policy output is
//! clamped to `[floor, 1]`, which keeps the full-drop pattern strictly
//! probable.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aimd::{DropPattern, ShareVector};
use crate::error::{Error, Result};
use crate::Resource;

/// Averages at or below this value make the utility-gradient rule undefined.
pub const DEGENERATE_AVERAGE: f64 = 1e-9;

pub const DEFAULT_FLOOR: f64 = 0.01;

/// Probability that each agent performs a multiplicative decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct PerAgentProbabilities(Vec<f64>);

impl PerAgentProbabilities {
    /// Clamps raw values into `[floor, 1]`.
    pub fn clamped(raw: impl IntoIterator<Item = f64>, floor: f64) -> Self {
        Self(
            raw.into_iter()
                .map(|p| if p.is_nan() { floor } else { p.clamp(floor, 1.0) })
                .collect(),
        )
    }

    /// Validates that every entry lies in `[floor, 1]`.
    pub fn new(p: Vec<f64>, floor: f64) -> Result<Self> {
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(floor..=1.0).contains(*v)) {
            return Err(Error::invalid(
                format!("probabilities[{i}]"),
                format!("{v} outside [{floor}, 1]"),
            ));
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Probability of the all-drop pattern.
    pub fn full_drop_probability(&self) -> f64 {
        self.0.iter().product()
    }
}

/// Probability of `pattern` when agents respond independently.
pub fn pattern_probability(p: &PerAgentProbabilities, pattern: &DropPattern) -> f64 {
    assert_eq!(p.len(), pattern.len());
    p.0.iter()
        .zip(pattern.as_slice())
        .map(|(&pi, &d)| if d { pi } else { 1.0 - pi })
        .product()
}

/// Draws one independent Bernoulli response per agent.
pub fn sample_pattern<R: Rng + ?Sized>(p: &PerAgentProbabilities, rng: &mut R) -> DropPattern {
    DropPattern::new(p.0.iter().map(|&pi| rng.random::<f64>() < pi).collect())
}

/// A utility `f_i(x_a, x_b)` with its partial derivatives.
pub trait Utility {
    fn value(&self, xa: f64, xb: f64) -> f64;
    fn partial(&self, resource: Resource, xa: f64, xb: f64) -> f64;
}

/// Built-in separable utilities `f(x_a, x_b) = g_a(x_a) + g_b(x_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `w_a x_a^2 + w_b x_b^2`
    Quadratic { weight_a: f64, weight_b: f64 },
    /// `-w_a ln x_a - w_b ln x_b`
    LogBarrier { weight_a: f64, weight_b: f64 },
    /// `(w_a x_a^g + w_b x_b^g) / g`, `g > 1`
    Power {
        gamma: f64,
        weight_a: f64,
        weight_b: f64,
    },
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        let (wa, wb) = match *self {
            UtilitySpec::Quadratic { weight_a, weight_b } | UtilitySpec::LogBarrier { weight_a, weight_b } => {
                (weight_a, weight_b)
            }
            UtilitySpec::Power {
                gamma,
                weight_a,
                weight_b,
            } => {
                if !(gamma.is_finite() && gamma > 1.0) {
                    return Err(Error::invalid("gamma", format!("must be > 1, got {gamma}")));
                }
                (weight_a, weight_b)
            }
        };
        for (field, w) in [("weight_a", wa), ("weight_b", wb)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(field, format!("must be > 0, got {w}")));
            }
        }
        Ok(())
    }
}

impl Utility for UtilitySpec {
    fn value(&self, xa: f64, xb: f64) -> f64 {
        match *self {
            UtilitySpec::Quadratic { weight_a, weight_b } => weight_a * xa * xa + weight_b * xb * xb,
            UtilitySpec::LogBarrier { weight_a, weight_b } => -weight_a * xa.ln() - weight_b * xb.ln(),
            UtilitySpec::Power {
                gamma,
                weight_a,
                weight_b,
            } => (weight_a * xa.powf(gamma) + weight_b * xb.powf(gamma)) / gamma,
        }
    }

    fn partial(&self, resource: Resource, xa: f64, xb: f64) -> f64 {
        let pick = |a: f64, b: f64| match resource {
            Resource::A => a,
            Resource::B => b,
        };
        match *self {
            UtilitySpec::Quadratic { weight_a, weight_b } => {
                2.0 * pick(weight_a * xa, weight_b * xb)
            }
            UtilitySpec::LogBarrier { weight_a, weight_b } => -pick(weight_a / xa, weight_b / xb),
            UtilitySpec::Power {
                gamma,
                weight_a,
                weight_b,
            } => pick(weight_a * xa.powf(gamma - 1.0), weight_b * xb.powf(gamma - 1.0)),
        }
    }
}

/// `p_i = xi / xt_ci * df_i/dx_c (xt_ai, xt_bi)`, clamped to `[floor, 1]`.
pub fn utility_gradient_policy<U: Utility>(
    avg_a: &[f64],
    avg_b: &[f64],
    utilities: &[U],
    xi: f64,
    floor: f64,
    resource: Resource,
) -> Result<PerAgentProbabilities> {
    let n = utilities.len();
    for len in [avg_a.len(), avg_b.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    let own = match resource {
        Resource::A => avg_a,
        Resource::B => avg_b,
    };
    let mut raw = Vec::with_capacity(n);
    for (i, f) in utilities.iter().enumerate() {
        if own[i] <= DEGENERATE_AVERAGE {
            return Err(Error::DegenerateAverage { agent: i, value: own[i] });
        }
        raw.push(xi / own[i] * f.partial(resource, avg_a[i], avg_b[i]));
    }
    Ok(PerAgentProbabilities::clamped(raw, floor))
}

/// Scaling constant placing the largest unclamped probability at 0.5 when
/// every agent holds `1/n` of both resources.
pub fn default_xi<U: Utility>(utilities: &[U], resource: Resource) -> Result<f64> {
    let u = 1.0 / utilities.len() as f64;
    let peak = utilities
        .iter()
        .map(|f| f.partial(resource, u, u) / u)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::invalid(
            "policy.xi",
            "utility gradients are not positive at the uniform allocation; set xi explicitly",
        ));
    }
    Ok(0.5 / peak)
}

/// The last `N` states of one resource and the last `N + 1` finite averages.
///
/// Before `N` states have been seen the average runs over the shorter prefix.
#[derive(Debug, Clone)]
pub struct AverageWindow {
    len: usize,
    states: VecDeque<Vec<f64>>,
    averages: VecDeque<Vec<f64>>,
}

impl AverageWindow {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "averaging window must hold at least one state");
        Self {
            len,
            states: VecDeque::with_capacity(len),
            averages: VecDeque::with_capacity(len + 1),
        }
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    /// Records the state at a new capacity event and refreshes the average.
    pub fn push(&mut self, x: &[f64]) {
        if self.states.len() == self.len {
            self.states.pop_front();
        }
        self.states.push_back(x.to_vec());
        let count = self.states.len() as f64;
        let mut avg = vec![0.0; x.len()];
        for s in &self.states {
            for (a, v) in avg.iter_mut().zip(s) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= count);
        if self.averages.len() == self.len + 1 {
            self.averages.pop_front();
        }
        self.averages.push_back(avg);
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Whether `N` states have been buffered.
    pub fn is_full(&self) -> bool {
        self.states.len() == self.len
    }

    /// Current finite average; panics before the first push.
    pub fn average(&self) -> &[f64] {
        self.averages.back().expect("average of an empty window")
    }

    /// Buffered states, oldest first.
    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + DoubleEndedIterator {
        self.states.iter().map(Vec::as_slice)
    }

    /// Up to `N + 1` most recent averages, oldest first.
    pub fn averages(&self) -> impl ExactSizeIterator<Item = &[f64]> + DoubleEndedIterator {
        self.averages.iter().map(Vec::as_slice)
    }
}

/// `p_i = (1/2N) (sum_{l=0..N} xt_a,i(k-l) + sum_{j=0..N} xt_b,i(k-j))`.
///
/// While fewer than `N + 1` averages are buffered, each resource's sum is
/// the mean of what is available scaled by `N + 1`.
pub fn window_mean_policy(
    win_a: &AverageWindow,
    win_b: &AverageWindow,
    window: usize,
    floor: f64,
) -> PerAgentProbabilities {
    let n = win_a.average().len();
    let mut total = vec![0.0; n];
    for win in [win_a, win_b] {
        let count = win.averages.len() as f64;
        let scale = (window + 1) as f64 / count;
        for avg in win.averages() {
            for (t, v) in total.iter_mut().zip(avg) {
                *t += v * scale;
            }
        }
    }
    let denom = 2.0 * window as f64;
    PerAgentProbabilities::clamped(total.into_iter().map(|t| t / denom), floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// State-independent per-agent probabilities, one list per resource.
    Constant {
        probabilities_a: Vec<f64>,
        probabilities_b: Vec<f64>,
    },
    /// Mean of the last `N + 1` finite averages of both resources.
    WindowMean,
    /// Gradient of per-agent utilities at the finite averages.
    UtilityGradient {
        utilities: Vec<UtilitySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

impl PolicySpec {
    pub fn window_mean() -> Self {
        Self {
            kind: PolicyKind::WindowMean,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn constant(pa: Vec<f64>, pb: Vec<f64>) -> Self {
        Self {
            kind: PolicyKind::Constant {
                probabilities_a: pa,
                probabilities_b: pb,
            },
            floor: DEFAULT_FLOOR,
        }
    }

    /// Checks the spec against `n` agents and resolves it into a policy.
    pub fn build(&self, n: usize, window: usize) -> Result<DropPolicy> {
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(Error::invalid("policy.floor", format!("must lie in (0, 1), got {}", self.floor)));
        }
        if window == 0 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        match &self.kind {
            PolicyKind::Constant {
                probabilities_a,
                probabilities_b,
            } => {
                let check = |field: &str, p: &[f64]| -> Result<PerAgentProbabilities> {
                    if p.len() != n {
                        return Err(Error::invalid(
                            format!("policy.{field}"),
                            format!("expected {n} entries, got {}", p.len()),
                        ));
                    }
                    PerAgentProbabilities::new(p.to_vec(), self.floor).map_err(|e| match e {
                        Error::InvalidParameter { field: f, reason } => {
                            Error::invalid(format!("policy.{field}{}", f.trim_start_matches("probabilities")), reason)
                        }
                        other => other,
                    })
                };
                Ok(DropPolicy::Constant(ConstantPolicy {
                    a: check("probabilities_a", probabilities_a)?,
                    b: check("probabilities_b", probabilities_b)?,
                }))
            }
            PolicyKind::WindowMean => Ok(DropPolicy::WindowMean {
                window,
                floor: self.floor,
            }),
            PolicyKind::UtilityGradient { utilities, xi } => {
                if utilities.len() != n {
                    return Err(Error::invalid(
                        "policy.utilities",
                        format!("expected {n} entries, got {}", utilities.len()),
                    ));
                }
                for (i, u) in utilities.iter().enumerate() {
                    u.validate().map_err(|e| match e {
                        Error::InvalidParameter { field, reason } => {
                            Error::invalid(format!("policy.utilities[{i}].{field}"), reason)
                        }
                        other => other,
                    })?;
                }
                let (xi_a, xi_b) = match xi {
                    Some(x) if x.is_finite() && *x > 0.0 => (*x, *x),
                    Some(x) => return Err(Error::invalid("policy.xi", format!("must be > 0, got {x}"))),
                    None => (
                        default_xi(utilities, Resource::A)?,
                        default_xi(utilities, Resource::B)?,
                    ),
                };
                Ok(DropPolicy::UtilityGradient(UtilityGradientPolicy {
                    utilities: utilities.clone(),
                    xi_a,
                    xi_b,
                    floor: self.floor,
                }))
            }
        }
    }
}

/// A policy that depends only on the current finite averages of both
/// resources, so it can be evaluated from the lifted state.
pub trait AveragePolicy: Sync {
    fn probabilities(&self, resource: Resource, avg_a: &[f64], avg_b: &[f64]) -> Result<PerAgentProbabilities>;

    /// Lower bound on every per-agent probability the policy can return.
    fn probability_floor(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    pub a: PerAgentProbabilities,
    pub b: PerAgentProbabilities,
}

impl ConstantPolicy {
    /// Same probabilities for both resources.
    pub fn uniform(p: PerAgentProbabilities) -> Self {
        Self { a: p.clone(), b: p }
    }
}

impl AveragePolicy for ConstantPolicy {
    fn probabilities(&self, resource: Resource, _: &[f64], _: &[f64]) -> Result<PerAgentProbabilities> {
        Ok(match resource {
            Resource::A => self.a.clone(),
            Resource::B => self.b.clone(),
        })
    }

    fn probability_floor(&self) -> f64 {
        self.a.as_slice().iter().chain(self.b.as_slice()).copied().fold(1.0, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityGradientPolicy {
    pub utilities: Vec<UtilitySpec>,
    pub xi_a: f64,
    pub xi_b: f64,
    pub floor: f64,
}

impl AveragePolicy for UtilityGradientPolicy {
    fn probabilities(&self, resource: Resource, avg_a: &[f64], avg_b: &[f64]) -> Result<PerAgentProbabilities> {
        let xi = match resource {
            Resource::A => self.xi_a,
            Resource::B => self.xi_b,
        };
        utility_gradient_policy(avg_a, avg_b, &self.utilities, xi, self.floor, resource)
    }

    fn probability_floor(&self) -> f64 {
        self.floor
    }
}

/// A resolved drop policy, evaluated by the event engine at every capacity event.
#[derive(Debug, Clone, PartialEq)]
pub enum DropPolicy {
    Constant(ConstantPolicy),
    WindowMean { window: usize, floor: f64 },
    UtilityGradient(UtilityGradientPolicy),
}

impl DropPolicy {
    pub fn probabilities(
        &self,
        resource: Resource,
        win_a: &AverageWindow,
        win_b: &AverageWindow,
    ) -> Result<PerAgentProbabilities> {
        match self {
            DropPolicy::Constant(c) => c.probabilities(resource, &[], &[]),
            DropPolicy::WindowMean { window, floor } => Ok(window_mean_policy(win_a, win_b, *window, *floor)),
            DropPolicy::UtilityGradient(u) => u.probabilities(resource, win_a.average(), win_b.average()),
        }
    }

    /// The place-dependent form of this policy, when it only needs current
    /// averages. The window-mean rule also reads older averages and has none.
    pub fn as_average_policy(&self) -> Option<&dyn AveragePolicy> {
        match self {
            DropPolicy::Constant(c) => Some(c),
            DropPolicy::UtilityGradient(u) => Some(u),
            DropPolicy::WindowMean { .. } => None,
        }
    }

    /// Lower bound on every per-agent probability.
    pub fn floor(&self) -> f64 {
        match self {
            DropPolicy::Constant(c) => c.probability_floor(),
            DropPolicy::WindowMean { floor, .. } => *floor,
            DropPolicy::UtilityGradient(u) => u.floor,
        }
    }
}

/// Running long-term average `(1/(k+1)) sum_{l<=k} x(l)` of a share stream.
#[derive(Debug, Clone, Default)]
pub struct LongTermAverage {
    count: u64,
    mean: Vec<f64>,
}

impl LongTermAverage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: &[f64]) {
        if self.count == 0 {
            self.mean = x.to_vec();
        } else {
            let k = (self.count + 1) as f64;
            for (m, v) in self.mean.iter_mut().zip(x) {
                *m += (v - *m) / k;
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn to_shares(&self) -> Option<ShareVector> {
        ShareVector::with_tolerance(self.mean.clone(), 1e-9).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn filled(window: usize, avg: &[f64]) -> AverageWindow {
        let mut w = AverageWindow::new(window);
        for _ in 0..window + 1 {
            w.push(avg);
        }
        w
    }

    #[test]
    fn window_mean_constant_averages() {
        let q = [0.25; 4];
        let p = window_mean_policy(&filled(5, &q), &filled(5, &q), 5, 0.01);
        for v in p.as_slice() {
            // 2 (N + 1) identical terms over 2N
            assert_abs_diff_eq!(*v, 0.25 * 6.0 / 5.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn window_mean_applies_floor_and_ceiling() {
        let x = [1.0, 0.0];
        let mut wa = AverageWindow::new(1);
        let mut wb = AverageWindow::new(1);
        wa.push(&x);
        wb.push(&x);
        let p = window_mean_policy(&wa, &wb, 1, 0.01);
        assert_eq!(p.as_slice(), &[1.0, 0.01]);
    }

    #[test]
    fn window_tracks_finite_average() {
        let mut w = AverageWindow::new(3);
        w.push(&[1.0, 0.0]);
        assert_eq!(w.average(), &[1.0, 0.0]);
        w.push(&[0.0, 1.0]);
        assert_eq!(w.average(), &[0.5, 0.5]);
        w.push(&[0.0, 1.0]);
        w.push(&[0.0, 1.0]);
        assert!(w.is_full());
        assert_eq!(w.average(), &[0.0, 1.0]);
        assert_eq!(w.averages().len(), 4);
    }

    struct Linear;

    impl Utility for Linear {
        fn value(&self, xa: f64, xb: f64) -> f64 {
            xa + xb
        }

        fn partial(&self, _: Resource, _: f64, _: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn quadratic_utility_gives_constant_probability() {
        let u = vec![UtilitySpec::Quadratic { weight_a: 0.5, weight_b: 0.5 }; 3];
        let avg = [0.2, 0.3, 0.5];
        let p = utility_gradient_policy(&avg, &avg, &u, 0.3, 0.01, Resource::A).unwrap();
        for v in p.as_slice() {
            assert_abs_diff_eq!(*v, 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_utility_and_clamp() {
        let u = [Linear, Linear];
        let avg = [0.5, 0.5];
        let p = utility_gradient_policy(&avg, &avg, &u, 0.1, 0.01, Resource::B).unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.2, epsilon = 1e-15);
        let p = utility_gradient_policy(&[0.9, 0.1], &avg, &u, 0.5, 0.01, Resource::A).unwrap();
        assert_eq!(p.as_slice()[1], 1.0);
        assert_abs_diff_eq!(p.as_slice()[0], 0.5 / 0.9, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_average_rejected() {
        let u = [Linear, Linear];
        let err = utility_gradient_policy(&[1.0, 0.0], &[0.5, 0.5], &u, 0.1, 0.01, Resource::A).unwrap_err();
        assert!(matches!(err, Error::DegenerateAverage { agent: 1, .. }));
    }

    #[test]
    fn builtin_partials_match_finite_differences() {
        let specs = [
            UtilitySpec::Quadratic { weight_a: 1.5, weight_b: 0.7 },
            UtilitySpec::LogBarrier { weight_a: 0.4, weight_b: 2.0 },
            UtilitySpec::Power { gamma: 2.5, weight_a: 1.0, weight_b: 3.0 },
        ];
        let h = 1e-6;
        for f in &specs {
            for (xa, xb) in [(0.2, 0.7), (0.55, 0.1)] {
                let da = (f.value(xa + h, xb) - f.value(xa - h, xb)) / (2.0 * h);
                let db = (f.value(xa, xb + h) - f.value(xa, xb - h)) / (2.0 * h);
                assert_abs_diff_eq!(f.partial(Resource::A, xa, xb), da, epsilon = 1e-6);
                assert_abs_diff_eq!(f.partial(Resource::B, xa, xb), db, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn default_xi_centres_initial_probabilities() {
        let u = vec![
            UtilitySpec::Quadratic { weight_a: 1.0, weight_b: 1.0 },
            UtilitySpec::Quadratic { weight_a: 3.0, weight_b: 1.0 },
        ];
        let xi = default_xi(&u, Resource::A).unwrap();
        let p = utility_gradient_policy(&[0.5, 0.5], &[0.5, 0.5], &u, xi, 0.01, Resource::A).unwrap();
        assert_abs_diff_eq!(p.as_slice()[1], 0.5, epsilon = 1e-15);
        let barrier = vec![UtilitySpec::LogBarrier { weight_a: 1.0, weight_b: 1.0 }; 2];
        assert!(default_xi(&barrier, Resource::A).is_err());
    }

    #[test]
    fn pattern_probability_examples() {
        let half = PerAgentProbabilities::new(vec![0.5, 0.5], 0.01).unwrap();
        assert_eq!(pattern_probability(&half, &DropPattern::full(2)), 0.25);
        let ones = PerAgentProbabilities::new(vec![1.0, 1.0], 0.01).unwrap();
        assert_eq!(pattern_probability(&ones, &DropPattern::full(2)), 1.0);
        for pat in DropPattern::all(2).filter(|p| !p.is_full()) {
            assert_eq!(pattern_probability(&ones, &pat), 0.0);
        }
        let p = PerAgentProbabilities::new(vec![0.3, 0.6], 0.01).unwrap();
        assert_abs_diff_eq!(
            pattern_probability(&p, &DropPattern::new(vec![true, false])),
            0.3 * 0.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pattern_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=10 {
            let p = PerAgentProbabilities::clamped((0..n).map(|_| rng.random::<f64>()), 0.01);
            let total: f64 = DropPattern::all(n).map(|pat| pattern_probability(&p, &pat)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert!(p.full_drop_probability() >= 0.01f64.powi(n as i32));
        }
    }

    #[test]
    fn sampling_always_full_with_unit_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PerAgentProbabilities::new(vec![1.0; 5], 0.01).unwrap();
        for _ in 0..1000 {
            assert!(sample_pattern(&p, &mut rng).is_full());
        }
    }

    #[test]
    fn sampling_frequencies_match_product_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let p = PerAgentProbabilities::new(vec![0.5, 0.5], 0.01).unwrap();
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_pattern(&p, &mut rng).index() as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn sampling_marginals_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probs = vec![0.01, 0.2, 0.5, 0.93];
        let p = PerAgentProbabilities::new(probs.clone(), 0.01).unwrap();
        let draws = 100_000;
        let mut hits = vec![0usize; probs.len()];
        let mut none = 0usize;
        for _ in 0..draws {
            let pat = sample_pattern(&p, &mut rng);
            for (i, h) in hits.iter_mut().enumerate() {
                *h += usize::from(pat.drops(i));
            }
            none += usize::from(pat.is_none());
        }
        for (h, pi) in hits.iter().zip(&probs) {
            let sigma = (pi * (1.0 - pi) / draws as f64).sqrt();
            assert!((*h as f64 / draws as f64 - pi).abs() <= 3.0 * sigma, "{hits:?}");
        }
        let p_none: f64 = probs.iter().map(|p| 1.0 - p).product();
        let sigma = (p_none * (1.0 - p_none) / draws as f64).sqrt();
        assert!((none as f64 / draws as f64 - p_none).abs() <= 3.0 * sigma);
    }

    #[test]
    fn long_term_average_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tracker = LongTermAverage::new();
        let mut rows = Vec::new();
        for _ in 0..10_000 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
            let x = ShareVector::from_demands(&raw).unwrap().into_vec();
            tracker.push(&x);
            rows.push(x);
        }
        for i in 0..3 {
            let batch = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
            assert_abs_diff_eq!(tracker.mean()[i], batch, epsilon = 1e-12);
        }
        let mut alt = LongTermAverage::new();
        for k in 0..1000 {
            alt.push(if k % 2 == 0 { &[1.0, 0.0] } else { &[0.0, 1.0] });
        }
        assert_abs_diff_eq!(alt.mean()[0], 0.5, epsilon = 1e-12);
        let mut constant = LongTermAverage::new();
        for _ in 0..10 {
            constant.push(&[0.3, 0.7]);
        }
        assert_abs_diff_eq!(constant.mean()[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn window_mean_is_lipschitz_off_the_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let window = 4;
        let bound = (window + 1) as f64 / (2 * window) as f64;
        for _ in 0..500 {
            let (mut a1, mut b1, mut a2, mut b2) = (
                AverageWindow::new(window),
                AverageWindow::new(window),
                AverageWindow::new(window),
                AverageWindow::new(window),
            );
            let mut dist = 0.0f64;
            for _ in 0..window + 1 {
                let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                    let raw: Vec<f64> = (0..3).map(|_| 0.2 + rng.random::<f64>()).collect();
                    ShareVector::from_demands(&raw).unwrap().into_vec()
                };
                let (xa, ya, xb, yb) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
                a1.push(&xa);
                a2.push(&ya);
                b1.push(&xb);
                b2.push(&yb);
            }
            for (u, v) in a1.averages().zip(a2.averages()).chain(b1.averages().zip(b2.averages())) {
                dist = dist.max(crate::aimd::l1_distance(u, v));
            }
            let p1 = window_mean_policy(&a1, &b1, window, 1e-6);
            let p2 = window_mean_policy(&a2, &b2, window, 1e-6);
            let diff = crate::aimd::l1_distance(p1.as_slice(), p2.as_slice());
            // each resource contributes at most (N+1)/(2N) times the largest average gap
            assert!(diff <= 2.0 * bound * dist + 1e-12);
        }
    }

    #[test]
    fn spec_build_validates_fields() {
        let spec = PolicySpec::constant(vec![0.5, 0.5], vec![0.5]);
        let err = spec.build(2, 3).unwrap_err().to_string();
        assert!(err.contains("policy.probabilities_b"), "{err}");
        let spec = PolicySpec::constant(vec![0.5, 0.001], vec![0.5, 0.5]);
        let err = spec.build(2, 3).unwrap_err().to_string();
        assert!(err.contains("policy.probabilities_a[1]"), "{err}");
        assert!(PolicySpec::window_mean().build(2, 0).is_err());
    }
}
