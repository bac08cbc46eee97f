//! Event-time simulation.
//!
//! [`SingleResourceState`] runs one resource as a place-dependent iterated
//! function system. [`CoupledSim`] runs two resources that share the agents
//! and synchronize: once a resource has seen `N` capacity events since the
//! last meta event it holds its shares until the other resource has seen `N`
//! as well. Both clocks are then set to the same meta-event time
//! `psi(lN) + tau_l`, `tau_l` being the longer of the two window durations.
//!
//! Drop decisions are taken when a resource reaches capacity, from the finite
//! averages current at that instant. The decision at the event that closes a
//! window is deferred to the meta event, so both resources open a window from
//! full-window averages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aimd::{apply_aimd, inter_event_time, DropPattern, ResourceParams, ShareVector};
use crate::error::{Error, Result};
use crate::lifted::{build_zeta, LiftedState, PatternWindow};
use crate::policy::{sample_pattern, AverageWindow, DropPolicy, LongTermAverage};
use crate::Resource;

/// Shares at the first capacity event reached from raw demands.
///
/// Demands below capacity grow additively until the resource is full;
/// demands at or above capacity are scaled down onto the simplex.
pub fn first_capacity_state(params: &ResourceParams, demands: &[f64]) -> Result<ShareVector> {
    if demands.len() != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n(),
            actual: demands.len(),
        });
    }
    let total: f64 = demands.iter().sum();
    let t = ((params.capacity() - total) / params.alpha_sum()).max(0.0);
    let grown: Vec<f64> = demands
        .iter()
        .zip(params.agents())
        .map(|(d, a)| d + a.alpha * t)
        .collect();
    ShareVector::from_demands(&grown)
}

/// A single resource driven by a drop policy.
#[derive(Debug, Clone)]
pub struct SingleResourceState {
    pub x: ShareVector,
    /// Index of the capacity event at which `x` was observed.
    pub k: u64,
    pub time: f64,
    pub window: AverageWindow,
    pub long_term: LongTermAverage,
    rng: ChaCha8Rng,
}

impl SingleResourceState {
    pub fn new(x0: ShareVector, window: usize, seed: u64) -> Self {
        let mut w = AverageWindow::new(window);
        w.push(x0.as_slice());
        let mut long_term = LongTermAverage::new();
        long_term.push(x0.as_slice());
        Self {
            x: x0,
            k: 0,
            time: 0.0,
            window: w,
            long_term,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// One capacity event: sample a pattern at the current averages and move to
/// the next capacity event. Two-resource policies see this resource on both
/// sides. Returns the applied pattern.
pub fn single_resource_step(
    state: &mut SingleResourceState,
    params: &ResourceParams,
    policy: &DropPolicy,
) -> Result<DropPattern> {
    let p = policy.probabilities(Resource::A, &state.window, &state.window)?;
    let pattern = sample_pattern(&p, &mut state.rng);
    state.time += inter_event_time(params, &pattern, &state.x);
    state.x = apply_aimd(params, &pattern, &state.x);
    state.k += 1;
    state.window.push(state.x.as_slice());
    state.long_term.push(state.x.as_slice());
    Ok(pattern)
}

/// Time average `(1/(k+1)) sum_j phi(x(j))` along a trajectory.
pub fn ergodic_average<'a, I, F>(trajectory: I, phi: F) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
    F: Fn(&[f64]) -> f64,
{
    let mut mean = 0.0;
    let mut count = 0u64;
    for x in trajectory {
        count += 1;
        mean += (phi(x) - mean) / count as f64;
    }
    if count == 0 {
        return Err(Error::invalid("trajectory", "empty trajectory"));
    }
    Ok(mean)
}

/// Static description of a coupled system.
#[derive(Debug, Clone)]
pub struct CoupledModel {
    pub params_a: ResourceParams,
    pub params_b: ResourceParams,
    /// Averaging window `N`, also the number of events per meta window.
    pub window: usize,
    pub policy: DropPolicy,
    /// Apply one extra sampled decrease per resource at each meta event.
    /// Off by default; runs with it enabled do not follow the lifted chain.
    pub global_md: bool,
}

impl CoupledModel {
    pub fn new(params_a: ResourceParams, params_b: ResourceParams, window: usize, policy: DropPolicy) -> Result<Self> {
        if params_a.n() != params_b.n() {
            return Err(Error::invalid(
                "resource_b",
                format!("has {} agents, resource_a has {}", params_b.n(), params_a.n()),
            ));
        }
        if window == 0 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        Ok(Self {
            params_a,
            params_b,
            window,
            policy,
            global_md: false,
        })
    }

    pub fn n(&self) -> usize {
        self.params_a.n()
    }

    pub fn params(&self, c: Resource) -> &ResourceParams {
        match c {
            Resource::A => &self.params_a,
            Resource::B => &self.params_b,
        }
    }
}

/// One transition of a window: the pattern applied at a capacity event, the
/// time until the next one, and the shares there.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEvent {
    pub pattern: DropPattern,
    pub inter_event_time: f64,
    pub post: ShareVector,
}

/// Everything that happened in one synchronization window.
#[derive(Debug, Clone)]
pub struct MetaEventRecord {
    /// Index `l` of the window that just closed.
    pub l: u64,
    /// Window duration `tau_l`.
    pub tau: f64,
    /// Synchronized clock `psi_a((l+1)N) = psi_b((l+1)N)`.
    pub psi_a: f64,
    pub psi_b: f64,
    pub events_a: Vec<WindowEvent>,
    pub events_b: Vec<WindowEvent>,
    /// Resource owning each of the `2N` in-window capacity events, in order.
    pub order: Vec<Resource>,
    /// Lifted state at the close of the window.
    pub zeta: LiftedState,
    /// Patterns of the optional global decrease.
    pub global_md: Option<(DropPattern, DropPattern)>,
}

impl MetaEventRecord {
    pub fn events(&self, c: Resource) -> &[WindowEvent] {
        match c {
            Resource::A => &self.events_a,
            Resource::B => &self.events_b,
        }
    }

    pub fn pattern_window(&self) -> PatternWindow {
        PatternWindow {
            a: self.events_a.iter().map(|e| e.pattern.clone()).collect(),
            b: self.events_b.iter().map(|e| e.pattern.clone()).collect(),
            order: self.order.clone(),
        }
    }
}

/// One row of the per-capacity-event trajectory stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub resource: Resource,
    /// Capacity-event index `k` of this resource.
    pub event: u64,
    /// Window `l` that the transition out of this event belongs to.
    pub window: u64,
    /// Wall-clock time at which the resource reached capacity.
    pub arrival: f64,
    /// Model clock `psi(k)`; differs from `arrival` only for an event that
    /// closed a window and waited for the meta event.
    pub psi: f64,
    /// Pattern applied at this event.
    pub pattern: DropPattern,
    /// Shares `x(k)` at the event, before the decrease.
    pub shares: ShareVector,
}

#[derive(Debug, Clone)]
struct Pending {
    duration: f64,
    next: ShareVector,
}

/// Per-resource state of the synchronized loop.
#[derive(Debug, Clone)]
pub struct ResourceState {
    /// Shares at the latest capacity event.
    pub x: ShareVector,
    pub event_index: u64,
    pub events_in_window: usize,
    /// Time of the latest capacity event (model clock).
    pub psi: f64,
    pub arrival: f64,
    pub window: AverageWindow,
    pending: Option<Pending>,
    history: Vec<WindowEvent>,
}

impl ResourceState {
    fn new(x0: ShareVector, window: usize) -> Self {
        let mut w = AverageWindow::new(window);
        w.push(x0.as_slice());
        Self {
            x: x0,
            event_index: 0,
            events_in_window: 0,
            psi: 0.0,
            arrival: 0.0,
            window: w,
            pending: None,
            history: Vec::with_capacity(window),
        }
    }

    fn next_time(&self) -> f64 {
        self.psi + self.pending.as_ref().map_or(0.0, |p| p.duration)
    }
}

/// What a call to [`CoupledSim::advance`] did.
#[derive(Debug, Clone)]
pub struct Advance {
    pub fired: Resource,
    pub meta: Option<MetaEventRecord>,
}

/// The synchronized two-resource event loop.
#[derive(Debug, Clone)]
pub struct CoupledSim {
    model: CoupledModel,
    a: ResourceState,
    b: ResourceState,
    meta_index: u64,
    meta_psi: f64,
    order: Vec<Resource>,
    zeta: LiftedState,
    rng: ChaCha8Rng,
    record_rows: bool,
    rows: Vec<TrajectoryRow>,
}

impl CoupledSim {
    /// Starts both resources at a capacity event at time zero.
    pub fn new(model: CoupledModel, x_a: ShareVector, x_b: ShareVector, seed: u64) -> Result<Self> {
        for (c, x) in [(Resource::A, &x_a), (Resource::B, &x_b)] {
            if x.len() != model.n() {
                return Err(Error::invalid(
                    format!("initial.{c}"),
                    format!("expected {} shares, got {}", model.n(), x.len()),
                ));
            }
        }
        let window = model.window;
        let zeta = build_zeta(&[x_a.as_slice()], &[x_b.as_slice()], window)?;
        let mut sim = Self {
            a: ResourceState::new(x_a, window),
            b: ResourceState::new(x_b, window),
            model,
            meta_index: 0,
            meta_psi: 0.0,
            order: Vec::with_capacity(2 * window),
            zeta,
            rng: ChaCha8Rng::seed_from_u64(seed),
            record_rows: true,
            rows: Vec::new(),
        };
        sim.decide(Resource::A)?;
        sim.decide(Resource::B)?;
        Ok(sim)
    }

    /// Stops buffering [`TrajectoryRow`]s.
    pub fn without_rows(mut self) -> Self {
        self.record_rows = false;
        self.rows.clear();
        self
    }

    pub fn model(&self) -> &CoupledModel {
        &self.model
    }

    pub fn state(&self, c: Resource) -> &ResourceState {
        match c {
            Resource::A => &self.a,
            Resource::B => &self.b,
        }
    }

    fn state_mut(&mut self, c: Resource) -> &mut ResourceState {
        match c {
            Resource::A => &mut self.a,
            Resource::B => &mut self.b,
        }
    }

    pub fn meta_index(&self) -> u64 {
        self.meta_index
    }

    /// Lifted state at the latest meta event (or the start).
    pub fn zeta(&self) -> &LiftedState {
        &self.zeta
    }

    pub fn is_frozen(&self, c: Resource) -> bool {
        self.state(c).events_in_window == self.model.window
    }

    /// Drains buffered trajectory rows.
    pub fn take_rows(&mut self) -> Vec<TrajectoryRow> {
        std::mem::take(&mut self.rows)
    }

    /// Samples the decrease at the current capacity event of `c`.
    fn decide(&mut self, c: Resource) -> Result<()> {
        let p = self.model.policy.probabilities(c, &self.a.window, &self.b.window)?;
        let pattern = sample_pattern(&p, &mut self.rng);
        let params = self.model.params(c);
        let st = match c {
            Resource::A => &self.a,
            Resource::B => &self.b,
        };
        let duration = inter_event_time(params, &pattern, &st.x);
        let next = apply_aimd(params, &pattern, &st.x);
        if self.record_rows {
            let row = TrajectoryRow {
                resource: c,
                event: st.event_index,
                window: self.meta_index,
                arrival: st.arrival,
                psi: st.psi,
                pattern: pattern.clone(),
                shares: st.x.clone(),
            };
            self.rows.push(row);
        }
        let st = self.state_mut(c);
        st.history.push(WindowEvent {
            pattern,
            inter_event_time: duration,
            post: next.clone(),
        });
        st.pending = Some(Pending { duration, next });
        Ok(())
    }

    /// Fires the next capacity event; runs the meta event when it completes
    /// both windows.
    pub fn advance(&mut self) -> Result<Advance> {
        let window = self.model.window;
        let fired = match (self.a.events_in_window < window, self.b.events_in_window < window) {
            (true, true) if self.a.next_time() <= self.b.next_time() => Resource::A,
            (true, true) => Resource::B,
            (true, false) => Resource::A,
            (false, true) => Resource::B,
            (false, false) => unreachable!("both resources frozen outside a meta event"),
        };
        let st = self.state_mut(fired);
        let pending = st.pending.take().expect("unfrozen resource without a pending decision");
        st.psi += pending.duration;
        st.arrival = st.psi;
        st.x = pending.next;
        st.event_index += 1;
        st.events_in_window += 1;
        st.window.push(st.x.as_slice());
        let frozen = st.events_in_window == window;
        self.order.push(fired);
        if !frozen {
            self.decide(fired)?;
            return Ok(Advance { fired, meta: None });
        }
        if self.a.events_in_window == window && self.b.events_in_window == window {
            let record = self.meta_event()?;
            return Ok(Advance {
                fired,
                meta: Some(record),
            });
        }
        Ok(Advance { fired, meta: None })
    }

    fn meta_event(&mut self) -> Result<MetaEventRecord> {
        let window_sum = |h: &[WindowEvent]| h.iter().map(|e| e.inter_event_time).sum::<f64>();
        let mut tau = window_sum(&self.a.history).max(window_sum(&self.b.history));
        let psi = self.meta_psi + tau;
        self.a.psi = psi;
        self.b.psi = psi;

        let states_a: Vec<&[f64]> = self.a.window.states().collect();
        let states_b: Vec<&[f64]> = self.b.window.states().collect();
        let zeta = build_zeta(&states_a, &states_b, self.model.window)?;

        let mut global = None;
        if self.model.global_md {
            let pa = self.model.policy.probabilities(Resource::A, &self.a.window, &self.b.window)?;
            let pb = self.model.policy.probabilities(Resource::B, &self.a.window, &self.b.window)?;
            let pat_a = sample_pattern(&pa, &mut self.rng);
            let pat_b = sample_pattern(&pb, &mut self.rng);
            let ta = inter_event_time(&self.model.params_a, &pat_a, &self.a.x);
            let tb = inter_event_time(&self.model.params_b, &pat_b, &self.b.x);
            self.a.x = apply_aimd(&self.model.params_a, &pat_a, &self.a.x);
            self.b.x = apply_aimd(&self.model.params_b, &pat_b, &self.b.x);
            let extra = ta.max(tb);
            tau += extra;
            self.a.psi += extra;
            self.b.psi += extra;
            global = Some((pat_a, pat_b));
        }

        let record = MetaEventRecord {
            l: self.meta_index,
            tau,
            psi_a: self.a.psi,
            psi_b: self.b.psi,
            events_a: std::mem::take(&mut self.a.history),
            events_b: std::mem::take(&mut self.b.history),
            order: std::mem::take(&mut self.order),
            zeta: zeta.clone(),
            global_md: global,
        };
        self.meta_psi = self.a.psi;
        self.meta_index += 1;
        self.zeta = zeta;
        self.a.events_in_window = 0;
        self.b.events_in_window = 0;
        self.decide(Resource::A)?;
        self.decide(Resource::B)?;
        Ok(record)
    }

    /// Advances until the next meta event.
    pub fn run_window(&mut self) -> Result<MetaEventRecord> {
        loop {
            if let Some(record) = self.advance()?.meta {
                return Ok(record);
            }
        }
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub initial_zeta: LiftedState,
    pub records: Vec<MetaEventRecord>,
    /// Trajectory rows in emission order; rows for the decisions that open
    /// window `L` are included.
    pub rows: Vec<TrajectoryRow>,
}

impl RunOutput {
    /// Shares of `c` at each of its capacity events, by event index.
    pub fn shares(&self, c: Resource) -> impl Iterator<Item = &ShareVector> {
        self.rows.iter().filter(move |r| r.resource == c).map(|r| &r.shares)
    }
}

/// Runs `meta_events` synchronization windows from the given capacity-event
/// states.
pub fn run(model: CoupledModel, x_a: ShareVector, x_b: ShareVector, meta_events: u64, seed: u64) -> Result<RunOutput> {
    let mut sim = CoupledSim::new(model, x_a, x_b, seed)?;
    let initial_zeta = sim.zeta().clone();
    let mut records = Vec::with_capacity(meta_events as usize);
    for _ in 0..meta_events {
        records.push(sim.run_window()?);
    }
    Ok(RunOutput {
        initial_zeta,
        records,
        rows: sim.take_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ConstantPolicy, PerAgentProbabilities, PolicySpec};
    use approx::assert_abs_diff_eq;

    fn symmetric_model(n: usize, window: usize, p: f64) -> CoupledModel {
        let params = ResourceParams::symmetric(n, 1.0, 0.5).unwrap();
        let policy = DropPolicy::Constant(ConstantPolicy::uniform(
            PerAgentProbabilities::new(vec![p; n], 0.01).unwrap(),
        ));
        CoupledModel::new(params.clone(), params, window, policy).unwrap()
    }

    fn table1_model(window: usize) -> CoupledModel {
        let a = ResourceParams::from_slices(&[0.01, 0.08, 0.61, 0.045], &[0.95, 0.9, 0.85, 0.75], 1.0).unwrap();
        let b = ResourceParams::from_slices(&[0.07, 0.08, 0.025, 0.02], &[0.65, 0.7, 0.8, 0.85], 1.0).unwrap();
        let policy = PolicySpec::window_mean().build(4, window).unwrap();
        CoupledModel::new(a, b, window, policy).unwrap()
    }

    #[test]
    fn first_capacity_state_grows_or_scales() {
        let p = ResourceParams::from_slices(&[1.0, 3.0], &[0.5, 0.5], 1.0).unwrap();
        let x = first_capacity_state(&p, &[0.1, 0.1]).unwrap();
        // t = 0.8 / 4 = 0.2
        assert_abs_diff_eq!(x.as_slice(), &[0.3, 0.7][..], epsilon = 1e-15);
        let x = first_capacity_state(&p, &[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(x.as_slice(), &[0.25, 0.75][..], epsilon = 1e-15);
    }

    #[test]
    fn full_drop_orbit_converges_to_uniform() {
        let params = ResourceParams::symmetric(3, 0.4, 0.6).unwrap();
        let policy = DropPolicy::Constant(ConstantPolicy::uniform(
            PerAgentProbabilities::new(vec![1.0; 3], 0.01).unwrap(),
        ));
        let mut st = SingleResourceState::new(ShareVector::new(vec![0.9, 0.1, 0.0]).unwrap(), 2, 1);
        for _ in 0..200 {
            assert!(single_resource_step(&mut st, &params, &policy).unwrap().is_full());
        }
        assert_abs_diff_eq!(st.x.as_slice(), ShareVector::uniform(3).as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn single_resource_two_agent_time_average() {
        let params = ResourceParams::symmetric(2, 1.0, 0.5).unwrap();
        let policy = DropPolicy::Constant(ConstantPolicy::uniform(
            PerAgentProbabilities::new(vec![0.5, 0.5], 0.01).unwrap(),
        ));
        let mut st = SingleResourceState::new(ShareVector::new(vec![1.0, 0.0]).unwrap(), 1, 77);
        for _ in 0..100_000 {
            single_resource_step(&mut st, &params, &policy).unwrap();
        }
        assert_abs_diff_eq!(st.long_term.mean()[0], 0.5, epsilon = 1e-2);
    }

    #[test]
    fn single_resource_is_deterministic() {
        let params = ResourceParams::from_slices(&[0.2, 0.5, 0.3], &[0.4, 0.7, 0.9], 1.0).unwrap();
        let policy = PolicySpec::window_mean().build(3, 4).unwrap();
        let go = || {
            let mut st = SingleResourceState::new(ShareVector::uniform(3), 4, 9);
            (0..500)
                .map(|_| {
                    single_resource_step(&mut st, &params, &policy).unwrap();
                    st.x.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn ergodic_average_examples() {
        let traj = [[0.2, 0.8]; 5];
        let refs = traj.iter().map(|x| x.as_slice());
        assert_eq!(ergodic_average(refs.clone(), |x| x[1]).unwrap(), 0.8);
        assert_eq!(ergodic_average(refs, |_| 1.0).unwrap(), 1.0);
        assert!(ergodic_average(std::iter::empty(), |_| 1.0).is_err());
    }

    #[test]
    fn records_have_exactly_n_events_and_synced_clocks() {
        let out = run(
            table1_model(5),
            ShareVector::uniform(4),
            ShareVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap(),
            200,
            3,
        )
        .unwrap();
        assert_eq!(out.records.len(), 200);
        let mut prev = 0.0;
        for r in &out.records {
            assert_eq!(r.events_a.len(), 5);
            assert_eq!(r.events_b.len(), 5);
            assert_eq!(r.order.len(), 10);
            assert_eq!(r.psi_a.to_bits(), r.psi_b.to_bits());
            let sa: f64 = r.events_a.iter().map(|e| e.inter_event_time).sum();
            let sb: f64 = r.events_b.iter().map(|e| e.inter_event_time).sum();
            assert_abs_diff_eq!(r.tau, sa.max(sb), epsilon = 1e-12);
            assert_eq!((prev + r.tau).to_bits(), r.psi_a.to_bits());
            prev = r.psi_a;
        }
    }

    #[test]
    fn faster_resource_freezes_until_meta() {
        let mut sim = CoupledSim::new(table1_model(5), ShareVector::uniform(4), ShareVector::uniform(4), 12).unwrap();
        let mut frozen_at: [Option<ShareVector>; 2] = [None, None];
        let mut saw_freeze = false;
        for _ in 0..2000 {
            let adv = sim.advance().unwrap();
            for c in Resource::BOTH {
                if let Some(x) = &frozen_at[c.index()] {
                    if adv.meta.is_none() {
                        assert_eq!(&sim.state(c).x, x);
                        saw_freeze = true;
                    }
                }
            }
            if adv.meta.is_some() {
                frozen_at = [None, None];
            } else if sim.is_frozen(adv.fired) {
                assert_eq!(sim.state(adv.fired).events_in_window, 5);
                frozen_at[adv.fired.index()] = Some(sim.state(adv.fired).x.clone());
            }
            for c in Resource::BOTH {
                assert!(sim.state(c).events_in_window <= 5);
            }
        }
        assert!(saw_freeze);
    }

    #[test]
    fn identical_resources_never_diverge() {
        let out = run(symmetric_model(3, 4, 1.0), ShareVector::uniform(3), ShareVector::uniform(3), 50, 1).unwrap();
        for r in &out.records {
            let sa: f64 = r.events_a.iter().map(|e| e.inter_event_time).sum();
            assert_eq!(r.tau, sa);
            assert_eq!(r.zeta.half(Resource::A), r.zeta.half(Resource::B));
        }
    }

    #[test]
    fn unit_window_lifted_state_is_raw_state() {
        let out = run(
            symmetric_model(2, 1, 0.5),
            ShareVector::new(vec![0.9, 0.1]).unwrap(),
            ShareVector::new(vec![0.2, 0.8]).unwrap(),
            20,
            4,
        )
        .unwrap();
        for r in &out.records {
            assert_eq!(r.zeta.block(Resource::A, 1), r.events_a[0].post.as_slice());
            assert_eq!(r.zeta.block(Resource::B, 1), r.events_b[0].post.as_slice());
        }
    }

    #[test]
    fn zero_meta_events_keeps_initial_state() {
        let out = run(symmetric_model(2, 3, 0.5), ShareVector::uniform(2), ShareVector::uniform(2), 0, 4).unwrap();
        assert!(out.records.is_empty());
        assert!(out.initial_zeta.is_initial_phase());
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.rows[0].event, 0);
    }

    #[test]
    fn replaying_patterns_reproduces_states() {
        let out = run(table1_model(3), ShareVector::uniform(4), ShareVector::uniform(4), 30, 8).unwrap();
        let model = table1_model(3);
        let mut x = [ShareVector::uniform(4), ShareVector::uniform(4)];
        for r in &out.records {
            for c in Resource::BOTH {
                for e in r.events(c) {
                    x[c.index()] = apply_aimd(model.params(c), &e.pattern, &x[c.index()]);
                    assert!(x[c.index()].l1_distance(&e.post) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn capacity_is_reached_at_every_event() {
        let model = table1_model(5);
        let out = run(model.clone(), ShareVector::uniform(4), ShareVector::uniform(4), 50, 21).unwrap();
        for r in &out.records {
            for c in Resource::BOTH {
                let mut x = out.rows.iter().find(|row| row.resource == c && row.window == r.l).unwrap().shares.clone();
                for e in r.events(c) {
                    let params = model.params(c);
                    let absolute: f64 = params
                        .agents()
                        .iter()
                        .enumerate()
                        .map(|(i, a)| {
                            let b = if e.pattern.drops(i) { a.beta } else { 1.0 };
                            (b * x[i] * params.capacity()) + a.alpha * e.inter_event_time
                        })
                        .sum();
                    assert_abs_diff_eq!(absolute, params.capacity(), epsilon = 1e-9);
                    x = e.post.clone();
                }
            }
        }
    }

    #[test]
    fn rejects_mismatched_resources() {
        let a = ResourceParams::symmetric(2, 1.0, 0.5).unwrap();
        let b = ResourceParams::symmetric(3, 1.0, 0.5).unwrap();
        let policy = PolicySpec::window_mean().build(2, 2).unwrap();
        assert!(CoupledModel::new(a.clone(), b, 2, policy.clone()).is_err());
        assert!(CoupledModel::new(a.clone(), a, 0, policy).is_err());
    }
}
