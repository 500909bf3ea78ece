//! Hybrid executions: continuous integration between guard crossings,
//! discrete transitions at localized crossing times, Zeno suspicion and
//! reach-set bookkeeping.
//!
//! An [`Execution`] is a list of closed intervals `[tau_i, tau_i']` with
//! `tau_i' = tau_{i+1}`. The partition is constant on each interval; the
//! field is sampled at every accepted step. Consecutive intervals are joined
//! by a [`Transition`] whose event maps the last state of one interval onto
//! the first state of the next through the transition and reset functions.

use std::collections::{BTreeMap, HashSet};

use log::warn;

use crate::automaton::{
    apply_reset, apply_transition, build_rhs_into, check_invariants, eval_guards, Dspdha, Event,
    EventId, FlowKind, Guard, GuardDirection, InvariantViolation, ResetKind,
};
use crate::error::{Error, Result};
use crate::mesh::{DiscretePartition, DiscreteState, FieldValues, ModeId};
use crate::schemes::{characteristic_shift, commensurate_hops};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Integrator {
    Euler,
    Rk4,
    /// Exact whole-cell transport along characteristics (advection-only automata).
    Characteristic,
}

impl Integrator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Rk4 => "rk4",
            Self::Characteristic => "characteristic",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            "characteristic" => Ok(Self::Characteristic),
            other => Err(Error::InvalidArgument(format!("unknown integrator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub integrator: Integrator,
    pub t_end: f64,
    /// Bisection stops once the crossing is bracketed this tightly in time;
    /// crossings this close to the earliest one fire together.
    pub event_tolerance: f64,
    pub zeno_window: f64,
    pub zeno_count: usize,
    pub max_transitions: usize,
}

impl SimOptions {
    pub fn new(dt: f64, integrator: Integrator, t_end: f64) -> Self {
        Self {
            dt,
            integrator,
            t_end,
            event_tolerance: 1e-9,
            zeno_window: 1e-6,
            zeno_count: 1000,
            max_transitions: 1_000_000,
        }
    }

    /// Rejects options the automaton cannot be run with.
    pub fn check(&self, a: &Dspdha) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if !(self.event_tolerance > 0.0) {
            return Err(Error::InvalidArgument("event tolerance must be positive".into()));
        }
        match self.integrator {
            Integrator::Euler => {
                if let Some(limit) = cfl_limit(a) {
                    if self.dt > limit * (1.0 + 1e-12) {
                        return Err(Error::StepSize(format!(
                            "CFL condition violated: explicit euler needs dt <= h^2/(2 alpha) = {limit}, got dt = {}",
                            self.dt
                        )));
                    }
                }
            }
            Integrator::Rk4 => {}
            Integrator::Characteristic => {
                if a.has_diffusion() {
                    return Err(Error::UnsupportedCombination(
                        "the characteristic integrator needs advection-only modes".into(),
                    ));
                }
                if a.merge_rule.is_none() {
                    return Err(Error::UnsupportedCombination(
                        "the characteristic integrator needs a merge rule".into(),
                    ));
                }
                commensurate_hops(&a.mode_speeds(), self.dt, a.mesh.spacing())?;
                let steps = self.t_end / self.dt;
                if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                    return Err(Error::StepSize(format!(
                        "t_end {} is not a whole number of steps of {}",
                        self.t_end, self.dt
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Largest stable explicit-euler step, `h^2 / (2 max alpha)`, when any mode diffuses.
pub fn cfl_limit(a: &Dspdha) -> Option<f64> {
    let alpha = a.max_alpha();
    (a.has_diffusion() && alpha > 0.0).then(|| {
        let h = a.mesh.spacing();
        h * h / (2.0 * alpha)
    })
}

/// One explicit step of `du/dt = rhs(state, t)`; the partition is unchanged.
pub fn integrate_step<F>(
    rhs: F,
    s: &DiscreteState,
    t: f64,
    dt: f64,
    integrator: Integrator,
) -> Result<FieldValues>
where
    F: Fn(&DiscreteState, f64) -> Vec<f64>,
{
    let u = s.field.values();
    let with = |v: Vec<f64>| DiscreteState {
        partition: s.partition.clone(),
        field: FieldValues::new(v),
    };
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { u.iter().zip(k).map(|(u, k)| u + a * k).collect() };
    match integrator {
        Integrator::Euler => {
            let k1 = rhs(s, t);
            Ok(FieldValues::new(axpy(dt, &k1)))
        }
        Integrator::Rk4 => {
            let k1 = rhs(s, t);
            let k2 = rhs(&with(axpy(dt / 2.0, &k1)), t + dt / 2.0);
            let k3 = rhs(&with(axpy(dt / 2.0, &k2)), t + dt / 2.0);
            let k4 = rhs(&with(axpy(dt, &k3)), t + dt);
            Ok(FieldValues::new(
                (0..u.len())
                    .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect(),
            ))
        }
        Integrator::Characteristic => Err(Error::UnsupportedCombination(
            "the characteristic backend is not an ODE integrator".into(),
        )),
    }
}

/// Step of the automaton's own flow, checking the CFL bound for euler.
pub fn automaton_step(
    a: &Dspdha,
    s: &DiscreteState,
    t: f64,
    dt: f64,
    integrator: Integrator,
) -> Result<FieldValues> {
    if integrator == Integrator::Euler {
        if let Some(limit) = cfl_limit(a) {
            if dt > limit * (1.0 + 1e-12) {
                return Err(Error::StepSize(format!(
                    "CFL condition violated: dt = {dt} > {limit}"
                )));
            }
        }
    }
    let m = a.mesh.len();
    integrate_step(
        |st, tt| {
            let mut out = vec![0.0; m];
            build_rhs_into(a, &st.partition, st.field.values(), tt, &mut out);
            out
        },
        s,
        t,
        dt,
        integrator,
    )
}

/// Earliest time in `[t, t + dt]` at which `guard` holds along `u_of_t`.
///
/// Returns `t` if the guard already holds there and `None` if it does not
/// hold at `t + dt`. Otherwise bisects until the bracket is at most `tol`
/// wide and returns its right end, where the guard holds.
pub fn locate_crossing<F>(u_of_t: F, t: f64, dt: f64, guard: &Guard, tol: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    if guard.satisfied(u_of_t(t)) {
        return Some(t);
    }
    let end = t + dt;
    if !guard.satisfied(u_of_t(end)) {
        return None;
    }
    let (mut lo, mut hi) = (t, end);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if guard.satisfied(u_of_t(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub field: FieldValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionInterval {
    pub start: f64,
    pub end: f64,
    pub partition: DiscretePartition,
    pub samples: Vec<Sample>,
}

impl ExecutionInterval {
    pub fn first_state(&self) -> DiscreteState {
        DiscreteState {
            partition: self.partition.clone(),
            field: self.samples[0].field.clone(),
        }
    }

    pub fn last_state(&self) -> DiscreteState {
        DiscreteState {
            partition: self.partition.clone(),
            field: self.samples[self.samples.len() - 1].field.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionCause {
    /// A guard became true inside a step; the time was localized by bisection.
    Crossing,
    /// A guard already held when the interval opened.
    Immediate,
    /// A guard became true across a discrete transport step.
    Jump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub event: Event,
    pub cause: TransitionCause,
}

/// Two transported parcels meeting in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedCollision {
    pub t: f64,
    pub index: usize,
    pub absorbed: f64,
    pub from_mode: ModeId,
    pub into_mode: ModeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    MaxTransitions,
    Zeno,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTimeTrajectory {
    pub intervals: Vec<(f64, f64)>,
    pub last_closed: bool,
}

impl HybridTimeTrajectory {
    /// `tau_i <= tau_i'` and `tau_i' = tau_{i+1}` throughout.
    pub fn is_well_formed(&self) -> bool {
        !self.intervals.is_empty()
            && self.intervals.iter().all(|(a, b)| a <= b)
            && self.intervals.windows(2).all(|w| w[0].1 == w[1].0)
    }

    /// `sum (tau_i' - tau_i)`
    pub fn total_duration(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub intervals: Vec<ExecutionInterval>,
    /// `transitions[i]` joins `intervals[i]` to `intervals[i + 1]`.
    pub transitions: Vec<Transition>,
    pub collisions: Vec<TimedCollision>,
    pub invariant_violations: Vec<(f64, InvariantViolation)>,
    pub stop: StopReason,
    pub last_closed: bool,
}

impl Execution {
    pub fn trajectory(&self) -> HybridTimeTrajectory {
        HybridTimeTrajectory {
            intervals: self.intervals.iter().map(|iv| (iv.start, iv.end)).collect(),
            last_closed: self.last_closed,
        }
    }

    pub fn transition_times(&self) -> Vec<f64> {
        self.transitions.iter().map(|tr| tr.time).collect()
    }

    pub fn initial_state(&self) -> DiscreteState {
        self.intervals[0].first_state()
    }

    pub fn final_state(&self) -> DiscreteState {
        self.intervals[self.intervals.len() - 1].last_state()
    }

    pub fn end_time(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].end
    }

    /// All samples in time order, each paired with its interval index.
    pub fn samples(&self) -> impl Iterator<Item = (usize, &DiscretePartition, &Sample)> {
        self.intervals
            .iter()
            .enumerate()
            .flat_map(|(k, iv)| iv.samples.iter().map(move |s| (k, &iv.partition, s)))
    }

    /// State at the last sample with time `<= t`.
    pub fn state_at(&self, t: f64) -> Option<DiscreteState> {
        let mut best = None;
        for (_, p, s) in self.samples() {
            if s.t <= t {
                best = Some((p, s));
            } else {
                break;
            }
        }
        best.map(|(p, s)| DiscreteState {
            partition: p.clone(),
            field: s.field.clone(),
        })
    }

    /// Checks the trajectory shape and that every interval boundary is
    /// related by the transition and reset functions. Returns all problems.
    pub fn verify(&self, a: &Dspdha) -> Vec<String> {
        let mut problems = Vec::new();
        let m = a.mesh.len();
        if self.intervals.len() != self.transitions.len() + 1 {
            problems.push(format!(
                "{} intervals for {} transitions",
                self.intervals.len(),
                self.transitions.len()
            ));
            return problems;
        }
        if !self.trajectory().is_well_formed() {
            problems.push("hybrid time trajectory is not well formed".into());
        }
        if self.initial_state() != a.init {
            problems.push("execution does not start in the initial state".into());
        }
        for (k, iv) in self.intervals.iter().enumerate() {
            if iv.partition.len() != m {
                problems.push(format!("interval {k}: partition has {} entries", iv.partition.len()));
            }
            if iv.samples.is_empty() {
                problems.push(format!("interval {k} has no samples"));
                continue;
            }
            if iv.samples[0].t != iv.start || iv.samples[iv.samples.len() - 1].t != iv.end {
                problems.push(format!("interval {k}: samples do not span [{}, {}]", iv.start, iv.end));
            }
            if iv.samples.windows(2).any(|w| w[0].t > w[1].t) {
                problems.push(format!("interval {k}: sample times decrease"));
            }
            if iv.samples.iter().any(|s| s.field.len() != m) {
                problems.push(format!("interval {k}: sample with wrong length"));
            }
        }
        for (k, tr) in self.transitions.iter().enumerate() {
            let (before, after) = (&self.intervals[k], &self.intervals[k + 1]);
            if tr.time != before.end || tr.time != after.start {
                problems.push(format!("transition {k} at {} does not join its intervals", tr.time));
            }
            if before.samples.is_empty() || after.samples.is_empty() {
                continue;
            }
            let pre = before.last_state();
            if apply_transition(a, &pre, &tr.event) != after.partition {
                problems.push(format!("transition {k}: partition is not phi_d of the previous state"));
            }
            if apply_reset(a, &pre, &tr.event) != after.samples[0].field {
                problems.push(format!("transition {k}: field is not R_d of the previous state"));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecutionClass {
    Finite,
    Infinite,
    ZenoSuspect { tau_infinity: f64 },
}

/// Classifies transition times. Zeno is suspected when `zeno_count`
/// consecutive transitions fall inside `zeno_window`, or when the trailing
/// `zeno_count` transitions contract geometrically (the second half spans
/// less than a thousandth of the first half). Otherwise the run is finite
/// if it ends in a closed interval and infinite (truncated) if not.
pub fn classify_transition_times(times: &[f64], last_closed: bool, opts: &SimOptions) -> ExecutionClass {
    let n = opts.zeno_count.max(2);
    if times.len() >= n {
        for w in times.windows(n) {
            if w[n - 1] - w[0] < opts.zeno_window {
                return ExecutionClass::ZenoSuspect {
                    tau_infinity: w[n - 1],
                };
            }
        }
        let tail = &times[times.len() - n..];
        let mid = n / 2;
        let first = tail[mid] - tail[0];
        let second = tail[n - 1] - tail[mid];
        if first > 0.0 && second < 1e-3 * first {
            let last_gap = tail[n - 1] - tail[n - 2];
            let steps = (n - 1 - mid) as f64;
            let ratio = if second > 0.0 {
                (second / first).powf(1.0 / steps)
            } else {
                0.0
            };
            let tau_infinity = if ratio > 0.0 && ratio < 1.0 {
                tail[n - 1] + last_gap * ratio / (1.0 - ratio)
            } else {
                tail[n - 1]
            };
            return ExecutionClass::ZenoSuspect { tau_infinity };
        }
    }
    if last_closed {
        ExecutionClass::Finite
    } else {
        ExecutionClass::Infinite
    }
}

pub fn classify_execution(x: &Execution, opts: &SimOptions) -> ExecutionClass {
    classify_transition_times(&x.transition_times(), x.last_closed, opts)
}

/// Sampled under-approximation of the reach set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachRecord {
    /// Distinct partitions in order of first visit.
    pub partitions: Vec<DiscretePartition>,
    pub final_state: DiscreteState,
    pub samples: Option<Vec<DiscreteState>>,
}

impl ReachRecord {
    pub fn contains_partition(&self, p: &DiscretePartition) -> bool {
        self.partitions.contains(p)
    }
}

pub fn reach_record(x: &Execution) -> ReachRecord {
    let mut seen = HashSet::new();
    let mut partitions = Vec::new();
    for iv in &x.intervals {
        if seen.insert(&iv.partition) {
            partitions.push(iv.partition.clone());
        }
    }
    ReachRecord {
        partitions,
        final_state: x.final_state(),
        samples: None,
    }
}

/// [`reach_record`] plus every sampled `(p_d, u_d)`.
pub fn reach_record_with_samples(x: &Execution) -> ReachRecord {
    let mut r = reach_record(x);
    r.samples = Some(
        x.samples()
            .map(|(_, p, s)| DiscreteState {
                partition: p.clone(),
                field: s.field.clone(),
            })
            .collect(),
    );
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralReport {
    pub deterministic_sufficient: bool,
    pub nonblocking_sufficient: bool,
    pub notes: Vec<String>,
}

/// Guard satisfaction set as `(lo, lo_closed, hi, hi_closed)`.
fn guard_set(g: &Guard) -> (f64, bool, f64, bool) {
    match g.direction {
        GuardDirection::Rising => (g.threshold, true, f64::INFINITY, false),
        GuardDirection::Falling => (f64::NEG_INFINITY, false, g.threshold, true),
        GuardDirection::StrictlyBelow => (f64::NEG_INFINITY, false, g.threshold, false),
    }
}

fn sets_overlap(a: (f64, bool, f64, bool), b: (f64, bool, f64, bool)) -> bool {
    let (lo, lo_closed) = if a.0 > b.0 || (a.0 == b.0 && !a.1) { (a.0, a.1) } else { (b.0, b.1) };
    let (hi, hi_closed) = if a.2 < b.2 || (a.2 == b.2 && !a.3) { (a.2, a.3) } else { (b.2, b.3) };
    lo < hi || (lo == hi && lo_closed && hi_closed)
}

/// Sufficient conditions for determinism and non-blocking.
///
/// Deterministic: per mode, guards of distinct events have disjoint
/// satisfaction sets, no `(mode, event)` pair has two guards, and resets are
/// single-valued. Non-blocking: every flow is globally Lipschitz in the
/// field (all supported flows are linear with field-independent sources)
/// and every value outside a mode invariant enables some guard of that mode.
pub fn structural_checks(a: &Dspdha) -> StructuralReport {
    let mut notes = Vec::new();
    let mut deterministic = true;
    for (q, mode) in a.modes.iter().enumerate() {
        let guards: Vec<&Guard> = a.guards_from(ModeId(q)).collect();
        for (i, g1) in guards.iter().enumerate() {
            for g2 in &guards[i + 1..] {
                if g1.event == g2.event {
                    if g1.target != g2.target {
                        deterministic = false;
                        notes.push(format!(
                            "mode '{}': event '{}' has two guards with different targets",
                            mode.name,
                            a.event_name(g1.event)
                        ));
                    }
                } else if sets_overlap(guard_set(g1), guard_set(g2)) {
                    deterministic = false;
                    notes.push(format!(
                        "mode '{}': events '{}' and '{}' can be enabled together",
                        mode.name,
                        a.event_name(g1.event),
                        a.event_name(g2.event)
                    ));
                }
            }
        }
    }
    for (i, r1) in a.resets.iter().enumerate() {
        for r2 in &a.resets[i + 1..] {
            if r1.mode == r2.mode && r1.event == r2.event && r1.kind != r2.kind {
                deterministic = false;
                notes.push(format!(
                    "mode '{}': event '{}' has conflicting resets",
                    a.mode_name(r1.mode),
                    a.event_name(r1.event)
                ));
            }
        }
    }
    if a.resets.iter().all(|r| r.kind == ResetKind::Identity) {
        notes.push("all resets are the identity".into());
    }

    let mut nonblocking = true;
    notes.push("all flows are linear in the field, hence globally Lipschitz".into());
    for (q, mode) in a.modes.iter().enumerate() {
        let Some(inv) = mode.invariant else { continue };
        let guards: Vec<&Guard> = a.guards_from(ModeId(q)).collect();
        let above_escapes = !inv.hi.is_finite()
            || guards
                .iter()
                .any(|g| g.direction == GuardDirection::Rising && g.threshold <= inv.hi);
        let below_escapes = !inv.lo.is_finite()
            || guards.iter().any(|g| match g.direction {
                GuardDirection::Falling | GuardDirection::StrictlyBelow => g.threshold >= inv.lo,
                GuardDirection::Rising => false,
            });
        if !(above_escapes && below_escapes) {
            nonblocking = false;
            notes.push(format!(
                "mode '{}': the field can leave [{}, {}] with no guard enabled",
                mode.name, inv.lo, inv.hi
            ));
        }
    }
    StructuralReport {
        deterministic_sufficient: deterministic,
        nonblocking_sufficient: nonblocking,
        notes,
    }
}

/// Narrowest hysteresis band between a guard and a guard leading back.
fn narrowest_band(a: &Dspdha) -> Option<f64> {
    let mut band: Option<f64> = None;
    for g1 in &a.guards {
        for g2 in &a.guards {
            if g1.source == g2.target && g1.target == g2.source {
                let w = (g1.threshold - g2.threshold).abs();
                if w > 0.0 {
                    band = Some(band.map_or(w, |b| b.min(w)));
                }
            }
        }
    }
    band
}

struct Recorder<'a> {
    a: &'a Dspdha,
    opts: &'a SimOptions,
    exec: Execution,
    state: DiscreteState,
}

impl<'a> Recorder<'a> {
    fn new(a: &'a Dspdha, opts: &'a SimOptions) -> Self {
        let state = a.init.clone();
        let exec = Execution {
            intervals: vec![ExecutionInterval {
                start: 0.0,
                end: 0.0,
                partition: state.partition.clone(),
                samples: vec![Sample {
                    t: 0.0,
                    field: state.field.clone(),
                }],
            }],
            transitions: Vec::new(),
            collisions: Vec::new(),
            invariant_violations: Vec::new(),
            stop: StopReason::Horizon,
            last_closed: true,
        };
        let mut rec = Self { a, opts, exec, state };
        rec.check_invariants(0.0);
        rec
    }

    fn check_invariants(&mut self, t: f64) {
        for v in check_invariants(self.a, &self.state) {
            self.exec.invariant_violations.push((t, v));
        }
    }

    fn current(&mut self) -> &mut ExecutionInterval {
        let n = self.exec.intervals.len();
        &mut self.exec.intervals[n - 1]
    }

    fn push_sample(&mut self, t: f64, field: FieldValues) -> Result<()> {
        if let Some(index) = field.first_non_finite() {
            return Err(Error::Divergence { index, t });
        }
        self.state.field = field;
        let sample = Sample {
            t,
            field: self.state.field.clone(),
        };
        let iv = self.current();
        iv.end = t;
        iv.samples.push(sample);
        self.check_invariants(t);
        Ok(())
    }

    /// Fires `event` at time `t`. Returns a stop reason if a limit was hit.
    fn fire(&mut self, t: f64, event: Event, cause: TransitionCause) -> Option<StopReason> {
        let partition = apply_transition(self.a, &self.state, &event);
        let field = apply_reset(self.a, &self.state, &event);
        self.exec.transitions.push(Transition {
            time: t,
            event,
            cause,
        });
        self.state = DiscreteState { partition, field };
        self.exec.intervals.push(ExecutionInterval {
            start: t,
            end: t,
            partition: self.state.partition.clone(),
            samples: vec![Sample {
                t,
                field: self.state.field.clone(),
            }],
        });
        self.check_invariants(t);

        let n = self.exec.transitions.len();
        let window = self.opts.zeno_count.max(2);
        if n >= window
            && t - self.exec.transitions[n - window].time < self.opts.zeno_window
        {
            return Some(StopReason::Zeno);
        }
        (n >= self.opts.max_transitions).then_some(StopReason::MaxTransitions)
    }

    /// Fires every guard that currently holds, one event at a time, until none does.
    fn fire_enabled(&mut self, t: f64, cause: TransitionCause) -> Option<StopReason> {
        loop {
            let hits = eval_guards(self.a, &self.state);
            let first = hits.iter().map(|h| h.event).min()?;
            let mut indices: Vec<usize> = hits
                .iter()
                .filter(|h| h.event == first)
                .map(|h| h.index)
                .collect();
            indices.dedup();
            if let Some(stop) = self.fire(t, Event { id: first, indices }, cause) {
                return Some(stop);
            }
        }
    }

    fn finish(mut self, stop: StopReason) -> Execution {
        self.exec.stop = stop;
        self.exec.last_closed = stop == StopReason::Horizon;
        self.exec
    }
}

/// Runs the automaton from its initial state to `opts.t_end`.
pub fn simulate(a: &Dspdha, opts: &SimOptions) -> Result<(Execution, ReachRecord)> {
    a.validate().into_result()?;
    opts.check(a)?;
    let exec = match opts.integrator {
        Integrator::Characteristic => run_characteristic(a, opts)?,
        Integrator::Euler | Integrator::Rk4 => run_continuous(a, opts)?,
    };
    let reach = reach_record(&exec);
    Ok((exec, reach))
}

fn run_continuous(a: &Dspdha, opts: &SimOptions) -> Result<Execution> {
    let mut rec = Recorder::new(a, opts);
    if let Some(stop) = rec.fire_enabled(0.0, TransitionCause::Immediate) {
        return Ok(rec.finish(stop));
    }
    if let Some(band) = narrowest_band(a) {
        let rhs = crate::automaton::build_rhs(a, &rec.state, 0.0)?;
        let peak = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak * opts.dt >= band / 2.0 {
            warn!(
                "dt = {} may step across the guard band of width {band} (max |rhs| = {peak})",
                opts.dt
            );
        }
    }

    let t_end = opts.t_end;
    let tol = opts.event_tolerance;
    let slack = 1e-12 * t_end.max(1.0);
    let mut t = 0.0;
    while t_end - t > slack {
        let h = if t + opts.dt >= t_end - slack { t_end - t } else { opts.dt };
        let next = automaton_step(a, &rec.state, t, h, opts.integrator)?;
        if let Some(index) = next.first_non_finite() {
            return Err(Error::Divergence { index, t: t + h });
        }

        // (time, event, index) for every guard that became true during the step
        let mut crossings: Vec<(f64, EventId, usize)> = Vec::new();
        for (i, (&q, &u_next)) in rec
            .state
            .partition
            .modes()
            .iter()
            .zip(next.values())
            .enumerate()
        {
            for g in a.guards_from(q) {
                if !g.satisfied(u_next) {
                    continue;
                }
                let state = &rec.state;
                let sampler = |s: f64| {
                    if s == t {
                        state.field.values()[i]
                    } else {
                        automaton_step(a, state, t, s - t, opts.integrator)
                            .map(|u| u.values()[i])
                            .unwrap_or(f64::NAN)
                    }
                };
                if let Some(tau) = locate_crossing(sampler, t, h, g, tol) {
                    crossings.push((tau, g.event, i));
                }
            }
        }

        if crossings.is_empty() {
            t += h;
            rec.push_sample(t, next)?;
            continue;
        }

        let tau = crossings.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        if tau > t {
            let u = automaton_step(a, &rec.state, t, tau - t, opts.integrator)?;
            t = tau;
            rec.push_sample(t, u)?;
        }
        let mut groups: BTreeMap<EventId, Vec<usize>> = BTreeMap::new();
        for &(time, e, i) in &crossings {
            if time <= tau + tol {
                groups.entry(e).or_default().push(i);
            }
        }
        for (id, mut indices) in groups {
            indices.sort_unstable();
            indices.dedup();
            if let Some(stop) = rec.fire(t, Event { id, indices }, TransitionCause::Crossing) {
                return Ok(rec.finish(stop));
            }
        }
        if let Some(stop) = rec.fire_enabled(t, TransitionCause::Immediate) {
            return Ok(rec.finish(stop));
        }
    }
    Ok(rec.finish(StopReason::Horizon))
}

fn run_characteristic(a: &Dspdha, opts: &SimOptions) -> Result<Execution> {
    let rule = a.merge_rule.ok_or_else(|| {
        Error::UnsupportedCombination("the characteristic integrator needs a merge rule".into())
    })?;
    if let Some(q) = a.modes.iter().find(|m| !matches!(m.flow.kind, FlowKind::Advection { .. })) {
        return Err(Error::UnsupportedCombination(format!(
            "mode '{}' is not a transport mode",
            q.name
        )));
    }
    let speeds = a.mode_speeds();
    let mut rec = Recorder::new(a, opts);
    if let Some(stop) = rec.fire_enabled(0.0, TransitionCause::Immediate) {
        return Ok(rec.finish(stop));
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    for k in 0..steps {
        let t0 = k as f64 * opts.dt;
        let t1 = (k + 1) as f64 * opts.dt;
        let outcome = characteristic_shift(&rec.state, opts.dt, &speeds, &a.mesh, rule)?;
        rec.exec.collisions.extend(outcome.collisions.into_iter().map(|c| TimedCollision {
            t: t0 + c.offset,
            index: c.index,
            absorbed: c.absorbed,
            from_mode: c.from_mode,
            into_mode: c.into_mode,
        }));
        // the partition follows the guards, evaluated on the transported field
        rec.push_sample(t1, outcome.state.field)?;
        if let Some(stop) = rec.fire_enabled(t1, TransitionCause::Jump) {
            return Ok(rec.finish(stop));
        }
    }
    Ok(rec.finish(StopReason::Horizon))
}
