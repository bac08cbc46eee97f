//! The lifted chain on stacked partial averages.
//!
//! For window length `N` the lifted state of resource `c` at meta event `l` is
//!
//! ```text
//! z_c(l) = [ x(lN), (x(lN) + x(lN-1))/2, ..., (1/N) sum_{i<N} x(lN-i) ]
//! ```
//!
//! and `zeta = [z_a; z_b]` lives in `Sigma_n^{2N}`. One window of `N`
//! transitions per resource maps `zeta(l)` to `zeta(l+1)` through a block
//! diagonal matrix whose blocks have nonzero entries only in their first block
//! column: row block `k` is `(1/k) sum_{i<k} Phi(N - i)`, with `Phi(m)` the
//! product of the first `m` AIMD matrices of the window.

use nalgebra::{DMatrix, DVector};

use crate::aimd::{apply_aimd_vec, build_aimd_matrix, inter_event_time, DropPattern, ResourceParams, ShareVector};
use crate::error::{Error, Result};
use crate::policy::{pattern_probability, AveragePolicy};
use crate::Resource;

/// Largest `n * N` for which dense lifted matrices are materialized.
pub const DENSE_LIMIT: usize = 64;

/// Stacked partial averages `(z_a, z_b)`, each `N` blocks of `n` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    n: usize,
    window: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    initial_phase: bool,
}

impl LiftedState {
    pub fn from_parts(n: usize, window: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        for v in [&a, &b] {
            if v.len() != n * window {
                return Err(Error::DimensionMismatch {
                    expected: n * window,
                    actual: v.len(),
                });
            }
        }
        Ok(Self {
            n,
            window,
            a,
            b,
            initial_phase: false,
        })
    }

    /// Splits a stacked `2nN` vector.
    pub fn from_vector(n: usize, window: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 2 * n * window {
            return Err(Error::DimensionMismatch {
                expected: 2 * n * window,
                actual: v.len(),
            });
        }
        let (a, b) = v.split_at(n * window);
        Self::from_parts(n, window, a.to_vec(), b.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// True when fewer than `N` states were available to build the averages.
    pub fn is_initial_phase(&self) -> bool {
        self.initial_phase
    }

    pub fn half(&self, c: Resource) -> &[f64] {
        match c {
            Resource::A => &self.a,
            Resource::B => &self.b,
        }
    }

    /// Block `j` (1-based): the mean of the `j` most recent states.
    pub fn block(&self, c: Resource, j: usize) -> &[f64] {
        assert!((1..=self.window).contains(&j), "block index {j} out of 1..={}", self.window);
        &self.half(c)[(j - 1) * self.n..j * self.n]
    }

    /// `[z_a; z_b]` as one vector of length `2nN`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend_from_slice(&self.b);
        v
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &LiftedState) -> f64 {
        self.a
            .iter()
            .chain(&self.b)
            .zip(other.a.iter().chain(&other.b))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Whether every block lies on the simplex within `tol`.
    pub fn on_simplex(&self, tol: f64) -> bool {
        self.a
            .chunks(self.n)
            .chain(self.b.chunks(self.n))
            .all(|blk| blk.iter().all(|v| *v >= -tol) && (blk.iter().sum::<f64>() - 1.0).abs() <= tol)
    }
}

/// Partial averages over one resource's recent states (oldest first).
fn partial_averages(history: &[&[f64]], window: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * window);
    let mut sum = vec![0.0; n];
    let mut used = 0usize;
    let mut recent = history.iter().rev();
    for _ in 0..window {
        if let Some(x) = recent.next() {
            for (s, v) in sum.iter_mut().zip(x.iter()) {
                *s += v;
            }
            used += 1;
        }
        out.extend(sum.iter().map(|s| s / used as f64));
    }
    out
}

/// Builds `zeta` from the most recent states of each resource, oldest first.
///
/// With fewer than `N` states, block `j` averages over the available prefix
/// and the result is flagged as initial-phase.
pub fn build_zeta(history_a: &[&[f64]], history_b: &[&[f64]], window: usize) -> Result<LiftedState> {
    if window == 0 {
        return Err(Error::invalid("window", "must be at least 1"));
    }
    let n = match (history_a.last(), history_b.last()) {
        (Some(x), Some(y)) if x.len() == y.len() => x.len(),
        (Some(x), Some(y)) => {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            })
        }
        _ => return Err(Error::invalid("history", "at least one state per resource is required")),
    };
    let ha = &history_a[history_a.len().saturating_sub(window)..];
    let hb = &history_b[history_b.len().saturating_sub(window)..];
    let mut z = LiftedState::from_parts(n, window, partial_averages(ha, window, n), partial_averages(hb, window, n))?;
    z.initial_phase = ha.len() < window || hb.len() < window;
    Ok(z)
}

/// The drop patterns of one window for both resources, and the merged order
/// of the `2N` capacity events that close each transition.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternWindow {
    pub a: Vec<DropPattern>,
    pub b: Vec<DropPattern>,
    /// `order[t]` is the resource owning the `t`-th event of the window
    /// (events `lN+1 ..= lN+N` of each resource).
    pub order: Vec<Resource>,
}

impl PatternWindow {
    pub fn new(a: Vec<DropPattern>, b: Vec<DropPattern>, order: Vec<Resource>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::invalid("patterns", "both resources need the same nonzero number of patterns"));
        }
        let count_a = order.iter().filter(|r| **r == Resource::A).count();
        if order.len() != 2 * a.len() || count_a != a.len() {
            return Err(Error::invalid("order", "must contain exactly N events per resource"));
        }
        Ok(Self { a, b, order })
    }

    pub fn window(&self) -> usize {
        self.a.len()
    }

    pub fn patterns(&self, c: Resource) -> &[DropPattern] {
        match c {
            Resource::A => &self.a,
            Resource::B => &self.b,
        }
    }

    /// Every window uses the full-drop pattern.
    pub fn full_drop(n: usize, window: usize) -> Self {
        let order = (0..window).flat_map(|_| [Resource::A, Resource::B]).collect();
        Self {
            a: vec![DropPattern::full(n); window],
            b: vec![DropPattern::full(n); window],
            order,
        }
    }

    /// Number of events of `other` preceding the `k`-th event (1-based) of `c`.
    fn preceding(&self, c: Resource, k: usize) -> usize {
        let mut seen = 0usize;
        let mut other = 0usize;
        for r in &self.order {
            if *r == c {
                seen += 1;
                if seen == k {
                    return other;
                }
            } else {
                other += 1;
            }
        }
        unreachable!("order has fewer than {k} events for {c}")
    }
}

/// Orders the `2N` events of a window by their arrival times measured from
/// the meta event; ties go to resource `a`.
pub fn event_order(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    x_a: &ShareVector,
    x_b: &ShareVector,
    patterns_a: &[DropPattern],
    patterns_b: &[DropPattern],
) -> Vec<Resource> {
    let arrivals = |params: &ResourceParams, x: &ShareVector, pats: &[DropPattern]| {
        let mut t = 0.0;
        let mut x = x.clone();
        pats.iter()
            .map(|p| {
                t += inter_event_time(params, p, &x);
                x = crate::aimd::apply_aimd(params, p, &x);
                t
            })
            .collect::<Vec<f64>>()
    };
    let ta = arrivals(params_a, x_a, patterns_a);
    let tb = arrivals(params_b, x_b, patterns_b);
    let (mut i, mut j) = (0, 0);
    let mut order = Vec::with_capacity(ta.len() + tb.len());
    while i < ta.len() || j < tb.len() {
        if j == tb.len() || (i < ta.len() && ta[i] <= tb[j]) {
            order.push(Resource::A);
            i += 1;
        } else {
            order.push(Resource::B);
            j += 1;
        }
    }
    order
}

/// Block-diagonal transition of the lifted chain for one pattern window.
///
/// Stored as the `N` first-column blocks of each resource.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    n: usize,
    window: usize,
    blocks_a: Vec<DMatrix<f64>>,
    blocks_b: Vec<DMatrix<f64>>,
}

fn first_column_blocks(params: &ResourceParams, patterns: &[DropPattern]) -> Vec<DMatrix<f64>> {
    let n = params.n();
    let window = patterns.len();
    // phi[m] = A(m-1) ... A(0)
    let mut phi = Vec::with_capacity(window + 1);
    phi.push(DMatrix::<f64>::identity(n, n));
    for p in patterns {
        let next = build_aimd_matrix(params, p) * phi.last().unwrap();
        phi.push(next);
    }
    let mut blocks = Vec::with_capacity(window);
    let mut sum = DMatrix::<f64>::zeros(n, n);
    for k in 1..=window {
        sum += &phi[window + 1 - k];
        blocks.push(&sum / k as f64);
    }
    blocks
}

/// Assembles the lifted transition for `pw`.
pub fn build_gamma(params_a: &ResourceParams, params_b: &ResourceParams, pw: &PatternWindow) -> Result<GammaMatrix> {
    if params_a.n() != params_b.n() {
        return Err(Error::DimensionMismatch {
            expected: params_a.n(),
            actual: params_b.n(),
        });
    }
    Ok(GammaMatrix {
        n: params_a.n(),
        window: pw.window(),
        blocks_a: first_column_blocks(params_a, &pw.a),
        blocks_b: first_column_blocks(params_b, &pw.b),
    })
}

impl GammaMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Row block `k` (1-based) of the first block column for resource `c`.
    pub fn block(&self, c: Resource, k: usize) -> &DMatrix<f64> {
        match c {
            Resource::A => &self.blocks_a[k - 1],
            Resource::B => &self.blocks_b[k - 1],
        }
    }

    /// Applies the transition to any vector of length `2nN`.
    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let half = self.n * self.window;
        assert_eq!(v.len(), 2 * half, "lifted vector has the wrong length");
        let mut out = Vec::with_capacity(2 * half);
        for (blocks, z) in [(&self.blocks_a, &v[..half]), (&self.blocks_b, &v[half..])] {
            let z1 = DVector::from_column_slice(&z[..self.n]);
            for g in blocks {
                out.extend((g * &z1).iter());
            }
        }
        out
    }

    /// The dense `2nN x 2nN` matrix; only for small instances.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let size = self.n * self.window;
        if size > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                what: "n * N",
                size,
                limit: DENSE_LIMIT,
            });
        }
        let mut m = DMatrix::zeros(2 * size, 2 * size);
        for (offset, blocks) in [(0, &self.blocks_a), (size, &self.blocks_b)] {
            for (k, g) in blocks.iter().enumerate() {
                m.view_mut((offset + k * self.n, offset), (self.n, self.n)).copy_from(g);
            }
        }
        Ok(m)
    }
}

/// `Gamma * zeta` through the cached blocks.
pub fn step_lifted(zeta: &LiftedState, gamma: &GammaMatrix) -> Result<LiftedState> {
    if zeta.n != gamma.n || zeta.window != gamma.window {
        return Err(Error::DimensionMismatch {
            expected: gamma.n * gamma.window,
            actual: zeta.n * zeta.window,
        });
    }
    LiftedState::from_vector(zeta.n, zeta.window, &gamma.apply_vec(&zeta.to_vector()))
}

/// `Gamma * zeta` without any matrix: replays the window's transitions on
/// block 1 and averages the trailing states, in `O(N n)` per resource.
pub fn step_lifted_implicit(
    zeta: &LiftedState,
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    pw: &PatternWindow,
) -> LiftedState {
    let (n, window) = (zeta.n, zeta.window);
    let advance = |params: &ResourceParams, c: Resource| {
        let mut states = Vec::with_capacity(window);
        let mut x = zeta.block(c, 1).to_vec();
        for p in pw.patterns(c) {
            let mut y = vec![0.0; n];
            apply_aimd_vec(params, p, &x, &mut y);
            states.push(y.clone());
            x = y;
        }
        let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        partial_averages(&refs, window, n)
    };
    LiftedState {
        n,
        window,
        a: advance(params_a, Resource::A),
        b: advance(params_b, Resource::B),
        initial_phase: false,
    }
}

/// Finite average `x~_c(lN + k)` rebuilt from `zeta(l)` and the window's
/// patterns: `((N-k)/N) z_{c,N-k} + (1/N) sum_{i<k} Phi(i+1) z_{c,1}`.
///
/// `k` ranges over `0..=N`; `k = N` is the average closing the window.
pub fn reconstruct_running_average(
    params: &ResourceParams,
    zeta: &LiftedState,
    patterns: &[DropPattern],
    k: usize,
    c: Resource,
) -> Result<Vec<f64>> {
    let (n, window) = (zeta.n, zeta.window);
    if k > window || patterns.len() < k {
        return Err(Error::invalid("k", format!("must satisfy k <= N = {window} and k <= #patterns")));
    }
    let mut out = vec![0.0; n];
    if k < window {
        let w = (window - k) as f64 / window as f64;
        for (o, v) in out.iter_mut().zip(zeta.block(c, window - k)) {
            *o = w * v;
        }
    }
    let mut x = zeta.block(c, 1).to_vec();
    let mut y = vec![0.0; n];
    for p in &patterns[..k] {
        apply_aimd_vec(params, p, &x, &mut y);
        std::mem::swap(&mut x, &mut y);
        for (o, v) in out.iter_mut().zip(&x) {
            *o += v / window as f64;
        }
    }
    Ok(out)
}

/// Probability of the pattern window `pw` from lifted state `zeta`.
///
/// Each of the `2N` drop decisions is evaluated at the finite averages
/// current when it is taken: the window-opening decisions at `z_{a,N}`,
/// `z_{b,N}`, later ones at the averages rebuilt from `zeta` and the events
/// that precede them in `pw.order`.
pub fn lifted_pattern_probability(
    params_a: &ResourceParams,
    params_b: &ResourceParams,
    zeta: &LiftedState,
    pw: &PatternWindow,
    policy: &dyn AveragePolicy,
) -> Result<f64> {
    let window = zeta.window;
    if pw.window() != window {
        return Err(Error::DimensionMismatch {
            expected: window,
            actual: pw.window(),
        });
    }
    let mut averages = [Vec::with_capacity(window + 1), Vec::with_capacity(window + 1)];
    for (c, params) in [(Resource::A, params_a), (Resource::B, params_b)] {
        for k in 0..=window {
            averages[c.index()].push(reconstruct_running_average(params, zeta, pw.patterns(c), k, c)?);
        }
    }
    let mut prob = 1.0;
    for c in Resource::BOTH {
        for (k, pattern) in pw.patterns(c).iter().enumerate() {
            let other_events = if k == 0 { 0 } else { pw.preceding(c, k) };
            let (ia, ib) = match c {
                Resource::A => (k, other_events),
                Resource::B => (other_events, k),
            };
            let p = policy.probabilities(c, &averages[0][ia], &averages[1][ib])?;
            prob *= pattern_probability(&p, pattern);
            if prob == 0.0 {
                return Ok(0.0);
            }
        }
    }
    Ok(prob)
}

/// `max` over `n`-blocks of the block 1-norm.
pub fn norm_n1(v: &[f64], n: usize) -> Result<f64> {
    if n == 0 || !v.len().is_multiple_of(n) {
        return Err(Error::invalid("vector", format!("length {} is not a multiple of n = {n}", v.len())));
    }
    Ok(v.chunks(n)
        .map(crate::aimd::l1_norm)
        .fold(0.0, f64::max))
}
