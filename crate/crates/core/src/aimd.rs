//! AIMD matrices, simplex states and inter-event times for a single resource.
//!
//! Between two capacity events every agent grows its share linearly at rate
//! `alpha_i`; at a capacity event the agents selected by a [`DropPattern`]
//! scale their share by `beta_i`. On the simplex of normalized shares the
//! map from one capacity event to the next is the column-stochastic matrix
//!
//! ```text
//! A = diag(b) + alpha (e - b)^T / sum(alpha),   b_i = beta_i if i drops, else 1
//! ```
//!
//! [`apply_aimd`] applies it in `O(n)` without materializing it;
//! [`build_aimd_matrix`] produces the dense form for verification paths.

use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for simplex membership and column sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Growth rate and multiplicative-decrease factor of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub alpha: f64,
    pub beta: f64,
}

impl AgentParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid("beta", format!("must lie in [0, 1), got {beta}")));
        }
        Ok(Self { alpha, beta })
    }
}

/// The agents sharing one resource, and the resource capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceParams {
    agents: Vec<AgentParams>,
    capacity: f64,
    alpha_sum: f64,
}

impl ResourceParams {
    pub fn new(agents: Vec<AgentParams>, capacity: f64) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::invalid("agents", "at least one agent is required"));
        }
        for (i, a) in agents.iter().enumerate() {
            AgentParams::new(a.alpha, a.beta).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => {
                    Error::invalid(format!("agents[{i}].{field}"), reason)
                }
                other => other,
            })?;
        }
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::invalid("capacity", format!("must be > 0, got {capacity}")));
        }
        let alpha_sum = agents.iter().map(|a| a.alpha).sum();
        Ok(Self {
            agents,
            capacity,
            alpha_sum,
        })
    }

    /// Builds parameters from parallel `alpha`/`beta` slices.
    pub fn from_slices(alpha: &[f64], beta: &[f64], capacity: f64) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len(),
                actual: beta.len(),
            });
        }
        let agents = alpha
            .iter()
            .zip(beta)
            .map(|(&alpha, &beta)| AgentParams { alpha, beta })
            .collect();
        Self::new(agents, capacity)
    }

    /// `n` identical agents.
    pub fn symmetric(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(vec![AgentParams::new(alpha, beta)?; n], 1.0)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha_sum
    }

    /// Largest multiplicative-decrease factor; the 1-norm contraction factor
    /// of the full-drop matrix on zero-sum vectors.
    pub fn max_beta(&self) -> f64 {
        self.agents.iter().map(|a| a.beta).fold(0.0, f64::max)
    }

    /// Decrease factor of agent `i` under `pattern`.
    #[inline]
    fn effective_beta(&self, pattern: &DropPattern, i: usize) -> f64 {
        if pattern.drops(i) {
            self.agents[i].beta
        } else {
            1.0
        }
    }
}

/// Which agents respond (multiplicatively decrease) at a capacity event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DropPattern(Vec<bool>);

impl DropPattern {
    pub fn new(drops: Vec<bool>) -> Self {
        Self(drops)
    }

    /// Every agent drops.
    pub fn full(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// No agent drops.
    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    /// Bit `i` of `index` set means agent `i` drops.
    pub fn from_index(index: u64, n: usize) -> Self {
        assert!(n <= 64, "pattern index only covers up to 64 agents");
        Self((0..n).map(|i| index >> i & 1 == 1).collect())
    }

    pub fn index(&self) -> u64 {
        assert!(self.0.len() <= 64);
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &d)| acc | (u64::from(d) << i))
    }

    /// All `2^n` patterns, ordered by [`DropPattern::index`].
    pub fn all(n: usize) -> impl Iterator<Item = DropPattern> {
        assert!(n < 64, "cannot enumerate patterns for {n} agents");
        (0..1u64 << n).map(move |idx| DropPattern::from_index(idx, n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn drops(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&d| d)
    }

    pub fn is_none(&self) -> bool {
        self.0.iter().all(|&d| !d)
    }
}

impl fmt::Display for DropPattern {
    /// One character per agent, agent 1 first: `1` drops, `0` does not.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &d in &self.0 {
            f.write_str(if d { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A point of the standard simplex: nonnegative shares summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareVector(Vec<f64>);

impl ShareVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(entries, SIMPLEX_TOL)
    }

    pub fn with_tolerance(entries: Vec<f64>, tol: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("shares", "empty share vector"));
        }
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -tol)
        {
            return Err(Error::invalid(format!("shares[{i}]"), format!("{v} is negative or not finite")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::invalid("shares", format!("entries sum to {sum}, not 1")));
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalizes nonnegative raw demands onto the simplex.
    pub fn from_demands(raw: &[f64]) -> Result<Self> {
        if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("demands[{i}]"), format!("{v} is negative or not finite")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("demands", "total demand must be positive"));
        }
        Ok(Self(raw.iter().map(|v| v / sum).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_distance(&self, other: &ShareVector) -> f64 {
        l1_distance(&self.0, &other.0)
    }
}

impl Index<usize> for ShareVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for ShareVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn check_pattern(params: &ResourceParams, pattern: &DropPattern) {
    assert_eq!(
        params.n(),
        pattern.len(),
        "drop pattern length does not match the number of agents"
    );
}

/// Dense AIMD matrix for `pattern`.
pub fn build_aimd_matrix(params: &ResourceParams, pattern: &DropPattern) -> DMatrix<f64> {
    check_pattern(params, pattern);
    let n = params.n();
    DMatrix::from_fn(n, n, |i, j| {
        let bj = params.effective_beta(pattern, j);
        let diag = if i == j { bj } else { 0.0 };
        diag + params.agents[i].alpha / params.alpha_sum * (1.0 - bj)
    })
}

/// Applies the AIMD matrix of `pattern` to an arbitrary vector in `O(n)`.
///
/// The map is linear, so this also serves zero-sum difference vectors.
pub fn apply_aimd_vec(params: &ResourceParams, pattern: &DropPattern, x: &[f64], out: &mut [f64]) {
    check_pattern(params, pattern);
    assert_eq!(x.len(), params.n());
    assert_eq!(out.len(), params.n());
    let mut released = 0.0;
    for (i, xi) in x.iter().enumerate() {
        released += (1.0 - params.effective_beta(pattern, i)) * xi;
    }
    let scale = released / params.alpha_sum;
    for (i, (o, xi)) in out.iter_mut().zip(x).enumerate() {
        *o = params.effective_beta(pattern, i) * xi + params.agents[i].alpha * scale;
    }
}

/// State at the next capacity event: `A(pattern) x`.
pub fn apply_aimd(params: &ResourceParams, pattern: &DropPattern, x: &ShareVector) -> ShareVector {
    let mut out = vec![0.0; x.len()];
    apply_aimd_vec(params, pattern, x.as_slice(), &mut out);
    ShareVector(out)
}

/// Time from a capacity event at shares `x` (fractions of capacity) until
/// additive growth after the decrease of `pattern` refills the resource.
pub fn inter_event_time(params: &ResourceParams, pattern: &DropPattern, x: &ShareVector) -> f64 {
    check_pattern(params, pattern);
    if pattern.is_none() {
        return 0.0;
    }
    let retained: f64 = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, xi)| params.effective_beta(pattern, i) * xi)
        .sum();
    (params.capacity * (1.0 - retained) / params.alpha_sum).max(0.0)
}

/// `(1/N) * sum_{i=1..N} beta^i`: the 1-norm contraction of the averaged
/// full-drop window blocks on zero-sum vectors.
pub fn contraction_factor(beta: f64, window: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid("beta", format!("must lie in [0, 1), got {beta}")));
    }
    if window == 0 {
        return Err(Error::invalid("window", "must be at least 1"));
    }
    let mut power = 1.0;
    let mut sum = 0.0;
    for _ in 0..window {
        power *= beta;
        sum += power;
    }
    Ok(sum / window as f64)
}

/// True iff every entry is `>= -tol` and every column sums to one within `tol`.
pub fn is_column_stochastic(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite() || *v < -tol) {
        return Ok(false);
    }
    Ok(m.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol))
}
