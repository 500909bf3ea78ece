//! The discrete-space hybrid automaton and its discrete semantics.
//!
//! A [`Dspdha`] bundles the modes with their semi-discrete flows, the guards
//! that move individual grid points between modes, the resets applied on a
//! transition and the initial state. [`ModelDescription`] is the continuous
//! model it is obtained from by [`discretize_model`].

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{
    discretize_domain, partition_from_regions, DiscreteDomain, DiscretePartition, DiscreteState,
    DiscretizationRecord, FieldValues, Interval, ModeId, RegionSpec, SpaceDomain,
};
use crate::schemes::{
    second_difference_at, upwind_difference_at, BoundaryCondition, Boundaries, MergeRule,
    StencilKind, WindDirection,
};

/// Source term as a function of position and time.
#[derive(Clone)]
pub struct SourceFn(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for SourceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SourceFn(..)")
    }
}

impl PartialEq for SourceFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum SourceTerm {
    #[default]
    Zero,
    AffineInX {
        slope: f64,
        intercept: f64,
    },
    /// One value per grid point.
    Tabulated(Vec<f64>),
    Function(SourceFn),
}

impl SourceTerm {
    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(SourceFn(Arc::new(f)))
    }

    #[inline]
    pub fn eval(&self, i: usize, x: f64, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::AffineInX { slope, intercept } => slope * x + intercept,
            Self::Tabulated(v) => v[i],
            Self::Function(f) => (f.0)(x, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    /// `u_t = alpha u_xx + source`
    Diffusion { alpha: f64 },
    /// `u_t + speed u_x = source`
    Advection { speed: f64 },
}

impl FlowKind {
    pub fn default_stencil(&self) -> StencilKind {
        match *self {
            Self::Diffusion { .. } => StencilKind::SecondCentral,
            Self::Advection { speed } if speed >= 0.0 => {
                StencilKind::FirstUpwind(WindDirection::Forward)
            }
            Self::Advection { .. } => StencilKind::FirstUpwind(WindDirection::Backward),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub source: SourceTerm,
    pub boundaries: Boundaries,
}

/// Box `[lo, hi]` the field must stay in while a point is in the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInvariant {
    pub lo: f64,
    pub hi: f64,
}

impl ModeInvariant {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub name: String,
    pub flow: FlowSpec,
    pub invariant: Option<ModeInvariant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub usize);

/// An event together with the grid points it fires at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GuardDirection {
    /// `u >= threshold`
    Rising,
    /// `u <= threshold`
    Falling,
    /// `u < threshold`
    StrictlyBelow,
}

impl GuardDirection {
    #[inline]
    pub fn satisfied(self, u: f64, threshold: f64) -> bool {
        match self {
            Self::Rising => u >= threshold,
            Self::Falling => u <= threshold,
            Self::StrictlyBelow => u < threshold,
        }
    }
}

/// Pointwise threshold guard attached to one source mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guard {
    pub source: ModeId,
    pub event: EventId,
    pub direction: GuardDirection,
    pub threshold: f64,
    pub target: ModeId,
}

impl Guard {
    #[inline]
    pub fn satisfied(&self, u: f64) -> bool {
        self.direction.satisfied(u, self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResetKind {
    Identity,
    SetTo(f64),
    /// Snap the value onto the threshold of the guard that fired.
    ClampToThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetRule {
    pub mode: ModeId,
    pub event: EventId,
    pub kind: ResetKind,
}

/// A discrete-space partial differential hybrid automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct Dspdha {
    pub modes: Vec<Mode>,
    pub events: Vec<String>,
    pub mesh: DiscreteDomain,
    pub guards: Vec<Guard>,
    pub resets: Vec<ResetRule>,
    pub init: DiscreteState,
    pub record: DiscretizationRecord,
    /// Collision rule for exact transport; only the characteristic backend reads it.
    pub merge_rule: Option<MergeRule>,
}

impl Dspdha {
    pub fn mode_id(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m.name == name).map(ModeId)
    }

    pub fn event_id(&self, name: &str) -> Option<EventId> {
        self.events.iter().position(|e| e == name).map(EventId)
    }

    pub fn mode_name(&self, q: ModeId) -> &str {
        &self.modes[q.0].name
    }

    pub fn event_name(&self, e: EventId) -> &str {
        &self.events[e.0]
    }

    /// Guards attached to `mode`.
    pub fn guards_from(&self, mode: ModeId) -> impl Iterator<Item = &Guard> {
        self.guards.iter().filter(move |g| g.source == mode)
    }

    /// The transition function restricted to one point: the mode a point in
    /// `mode` moves to when `event` fires there.
    pub fn transition_target(&self, mode: ModeId, event: EventId) -> Option<ModeId> {
        self.guards
            .iter()
            .find(|g| g.source == mode && g.event == event)
            .map(|g| g.target)
    }

    pub fn has_diffusion(&self) -> bool {
        self.modes
            .iter()
            .any(|m| matches!(m.flow.kind, FlowKind::Diffusion { .. }))
    }

    pub fn max_alpha(&self) -> f64 {
        self.modes
            .iter()
            .filter_map(|m| match m.flow.kind {
                FlowKind::Diffusion { alpha } => Some(alpha),
                FlowKind::Advection { .. } => None,
            })
            .fold(0.0, f64::max)
    }

    /// Signed transport speed per mode (zero for diffusion modes).
    pub fn mode_speeds(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| match m.flow.kind {
                FlowKind::Advection { speed } => speed,
                FlowKind::Diffusion { .. } => 0.0,
            })
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

fn check_dims(a: &Dspdha, s: &DiscreteState) -> Result<()> {
    let m = a.mesh.len();
    for found in [s.partition.len(), s.field.len()] {
        if found != m {
            return Err(Error::DimensionMismatch { expected: m, found });
        }
    }
    Ok(())
}

/// Method-of-lines right-hand side `du_d/dt`. Point `i` uses the flow of its
/// own mode; stencil neighbours are read from the shared field whatever
/// their mode.
pub fn build_rhs(a: &Dspdha, s: &DiscreteState, t: f64) -> Result<Vec<f64>> {
    check_dims(a, s)?;
    let mut out = vec![0.0; a.mesh.len()];
    build_rhs_into(a, &s.partition, s.field.values(), t, &mut out);
    Ok(out)
}

/// Allocation-free form of [`build_rhs`]; dimensions are assumed checked.
pub(crate) fn build_rhs_into(
    a: &Dspdha,
    p: &DiscretePartition,
    u: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let h = a.mesh.spacing();
    let xs = a.mesh.points();
    for (i, du) in out.iter_mut().enumerate() {
        let flow = &a.modes[p.get(i).0].flow;
        let transport = match flow.kind {
            FlowKind::Diffusion { alpha } => alpha * second_difference_at(u, i, h, &flow.boundaries),
            FlowKind::Advection { speed } if speed != 0.0 => {
                -speed * upwind_difference_at(u, i, h, speed, &flow.boundaries)
            }
            FlowKind::Advection { .. } => 0.0,
        };
        *du = transport + flow.source.eval(i, xs[i], t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardHit {
    pub event: EventId,
    pub index: usize,
    /// Position of the guard in [`Dspdha::guards`].
    pub guard: usize,
}

/// Every satisfied guard, tested against the mode each point currently has.
pub fn eval_guards(a: &Dspdha, s: &DiscreteState) -> Vec<GuardHit> {
    let mut hits = Vec::new();
    for (i, (&q, &u)) in s
        .partition
        .modes()
        .iter()
        .zip(s.field.values())
        .enumerate()
    {
        for (k, g) in a.guards.iter().enumerate() {
            if g.source == q && g.satisfied(u) {
                hits.push(GuardHit {
                    event: g.event,
                    index: i,
                    guard: k,
                });
            }
        }
    }
    hits
}

/// Points listed in the event switch to the guard target of their current
/// mode; everything else (including events with no matching guard) is left
/// alone.
pub fn apply_transition(a: &Dspdha, s: &DiscreteState, e: &Event) -> DiscretePartition {
    let mut p = s.partition.clone();
    for &i in &e.indices {
        if i >= p.len() {
            continue;
        }
        if let Some(target) = a.transition_target(p.get(i), e.id) {
            p.modes_mut()[i] = target;
        }
    }
    p
}

pub fn apply_reset(a: &Dspdha, s: &DiscreteState, e: &Event) -> FieldValues {
    let mut u = s.field.clone();
    for &i in &e.indices {
        if i >= u.len() {
            continue;
        }
        let q = s.partition.get(i);
        let Some(rule) = a.resets.iter().find(|r| r.mode == q && r.event == e.id) else {
            continue;
        };
        match rule.kind {
            ResetKind::Identity => {}
            ResetKind::SetTo(v) => u.values_mut()[i] = v,
            ResetKind::ClampToThreshold => {
                if let Some(g) = a.guards.iter().find(|g| g.source == q && g.event == e.id) {
                    u.values_mut()[i] = g.threshold;
                }
            }
        }
    }
    u
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantViolation {
    pub index: usize,
    pub mode: ModeId,
    pub value: f64,
    pub bounds: ModeInvariant,
}

pub fn check_invariants(a: &Dspdha, s: &DiscreteState) -> Vec<InvariantViolation> {
    s.partition
        .modes()
        .iter()
        .zip(s.field.values())
        .enumerate()
        .filter_map(|(index, (&mode, &value))| {
            let bounds = a.modes.get(mode.0)?.invariant?;
            (!bounds.contains(value)).then_some(InvariantViolation {
                index,
                mode,
                value,
                bounds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for failure in &self.failures {
            writeln!(f, "  - {failure}")?;
        }
        Ok(())
    }
}

fn check_modes(modes: &[Mode], m: Option<usize>, out: &mut Vec<String>) {
    if modes.is_empty() {
        out.push("automaton declares no modes".into());
    }
    for (k, mode) in modes.iter().enumerate() {
        if modes[..k].iter().any(|o| o.name == mode.name) {
            out.push(format!("mode name '{}' declared twice", mode.name));
        }
        match mode.flow.kind {
            FlowKind::Diffusion { alpha } => {
                if !(alpha >= 0.0) || !alpha.is_finite() {
                    out.push(format!("mode '{}': diffusivity {alpha} must be finite and >= 0", mode.name));
                }
                let b = mode.flow.boundaries;
                if b.left == BoundaryCondition::Outflow || b.right == BoundaryCondition::Outflow {
                    out.push(format!(
                        "mode '{}': outflow boundary is not supported with diffusion",
                        mode.name
                    ));
                }
            }
            FlowKind::Advection { speed } => {
                if !speed.is_finite() {
                    out.push(format!("mode '{}': speed {speed} is not finite", mode.name));
                }
            }
        }
        for bc in [mode.flow.boundaries.left, mode.flow.boundaries.right] {
            if let BoundaryCondition::Dirichlet(c) = bc {
                if !c.is_finite() {
                    out.push(format!("mode '{}': dirichlet value {c} is not finite", mode.name));
                }
            }
        }
        if let (SourceTerm::Tabulated(v), Some(m)) = (&mode.flow.source, m) {
            if v.len() != m {
                out.push(format!(
                    "mode '{}': tabulated source has {} values for {m} grid points",
                    mode.name,
                    v.len()
                ));
            }
        }
        if let Some(inv) = mode.invariant {
            if !(inv.lo <= inv.hi) {
                out.push(format!(
                    "mode '{}': invariant box [{}, {}] is empty",
                    mode.name, inv.lo, inv.hi
                ));
            }
        }
    }
}

fn check_guards_and_resets(
    n_modes: usize,
    events: &[String],
    guards: &[Guard],
    resets: &[ResetRule],
    merge_rule: Option<MergeRule>,
    out: &mut Vec<String>,
) {
    for (k, e) in events.iter().enumerate() {
        if events[..k].contains(e) {
            out.push(format!("event '{e}' declared twice"));
        }
    }
    for (k, g) in guards.iter().enumerate() {
        if g.source.0 >= n_modes {
            out.push(format!("guard {k}: source mode {} is not declared", g.source));
        }
        if g.target.0 >= n_modes {
            out.push(format!("guard {k}: target mode {} is not declared", g.target));
        }
        if g.event.0 >= events.len() {
            out.push(format!("guard {k}: event {} is not declared", g.event.0));
        }
        if g.source == g.target {
            out.push(format!("guard {k}: source and target are both {}", g.source));
        }
        if !g.threshold.is_finite() {
            out.push(format!("guard {k}: threshold {} is not finite", g.threshold));
        }
    }
    for (k, r) in resets.iter().enumerate() {
        if r.mode.0 >= n_modes {
            out.push(format!("reset {k}: mode {} is not declared", r.mode));
        }
        if r.event.0 >= events.len() {
            out.push(format!("reset {k}: event {} is not declared", r.event.0));
        }
    }
    if let Some(rule) = merge_rule {
        for q in [rule.absorbing, rule.vacant] {
            if q.0 >= n_modes {
                out.push(format!("merge rule refers to undeclared mode {q}"));
            }
        }
    }
}

/// Structural validation; collects every failure rather than stopping at the first.
pub fn validate(a: &Dspdha) -> ValidationReport {
    let mut failures = Vec::new();
    let m = a.mesh.len();
    check_modes(&a.modes, Some(m), &mut failures);
    check_guards_and_resets(
        a.modes.len(),
        &a.events,
        &a.guards,
        &a.resets,
        a.merge_rule,
        &mut failures,
    );
    if a.init.partition.len() != m {
        failures.push(format!(
            "initial partition has {} entries for {m} grid points",
            a.init.partition.len()
        ));
    }
    if a.init.field.len() != m {
        failures.push(format!(
            "initial field has {} values for {m} grid points",
            a.init.field.len()
        ));
    }
    if let Some(q) = a.init.partition.modes().iter().find(|q| q.0 >= a.modes.len()) {
        failures.push(format!("initial partition uses undeclared mode {q}"));
    }
    if let Some(i) = a.init.field.first_non_finite() {
        failures.push(format!("initial field is not finite at index {i}"));
    }
    if failures.is_empty() {
        for v in check_invariants(a, &a.init) {
            failures.push(format!(
                "initial value {} at index {} violates the invariant [{}, {}] of mode '{}'",
                v.value,
                v.index,
                v.bounds.lo,
                v.bounds.hi,
                a.mode_name(v.mode)
            ));
        }
    }
    ValidationReport { failures }
}

/// Continuous description of a mode: the PDE kind and source, independent of any grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDescription {
    pub name: String,
    pub kind: FlowKind,
    pub source: SourceTerm,
    pub invariant: Option<ModeInvariant>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialField {
    Constant(f64),
    /// `(x, u)` pairs, linearly interpolated and held constant beyond the ends.
    Samples(Vec<(f64, f64)>),
    /// Piecewise-constant values on intervals, `background` elsewhere.
    Pieces {
        pieces: Vec<(Interval, f64)>,
        background: f64,
    },
}

impl InitialField {
    pub fn sample(&self, x: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Samples(pts) => {
                let Some(first) = pts.first() else {
                    return 0.0;
                };
                if x <= first.0 {
                    return first.1;
                }
                for w in pts.windows(2) {
                    let ((x0, u0), (x1, u1)) = (w[0], w[1]);
                    if x <= x1 {
                        if x1 == x0 {
                            return u1;
                        }
                        return u0 + (u1 - u0) * (x - x0) / (x1 - x0);
                    }
                }
                pts[pts.len() - 1].1
            }
            Self::Pieces { pieces, background } => pieces
                .iter()
                .find(|(iv, _)| iv.contains(x))
                .map_or(*background, |(_, v)| *v),
        }
    }
}

/// Continuous hybrid model: domain, per-mode PDEs, region-based initial
/// partition, initial field, guards and resets.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescription {
    pub name: String,
    pub domain: SpaceDomain,
    pub modes: Vec<ModeDescription>,
    pub events: Vec<String>,
    pub boundaries: Boundaries,
    pub regions: RegionSpec,
    pub init: InitialField,
    pub guards: Vec<Guard>,
    pub resets: Vec<ResetRule>,
    pub merge_rule: Option<MergeRule>,
}

impl ModelDescription {
    /// Every semantic problem in the description.
    pub fn check(&self) -> Vec<String> {
        let mut out = self.check_structure();
        out.extend(self.regions.check_covers(self.domain));
        out
    }

    fn check_structure(&self) -> Vec<String> {
        let mut out = Vec::new();
        let modes: Vec<Mode> = self
            .modes
            .iter()
            .map(|d| Mode {
                name: d.name.clone(),
                flow: FlowSpec {
                    kind: d.kind,
                    source: d.source.clone(),
                    boundaries: self.boundaries,
                },
                invariant: d.invariant,
            })
            .collect();
        check_modes(&modes, None, &mut out);
        check_guards_and_resets(
            modes.len(),
            &self.events,
            &self.guards,
            &self.resets,
            self.merge_rule,
            &mut out,
        );
        for (k, r) in self.regions.regions().iter().enumerate() {
            if r.mode.0 >= modes.len() {
                out.push(format!("region {k} refers to undeclared mode {}", r.mode));
            }
        }
        out
    }

    pub fn mode_id(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m.name == name).map(ModeId)
    }

    /// Grid-point count giving spacing `h` over the domain.
    pub fn points_for_spacing(&self, h: f64) -> Result<usize> {
        let cells = self.domain.length() / h;
        let n = cells.round();
        if !(h > 0.0) || (cells - n).abs() > 1e-9 * cells.max(1.0) || n < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "spacing {h} does not divide the domain length {}",
                self.domain.length()
            )));
        }
        Ok(n as usize + 1)
    }
}

/// Semi-discretizes `model` on a uniform grid of `m` points using each mode's
/// natural stencil. Ends with a Dirichlet condition are held as ghost values
/// and do not carry unknowns.
pub fn discretize_model(model: &ModelDescription, m: usize) -> Result<Dspdha> {
    discretize_model_with(model, m, None)
}

/// As [`discretize_model`], with an explicit stencil per mode.
pub fn discretize_model_with(
    model: &ModelDescription,
    m: usize,
    stencils: Option<&[StencilKind]>,
) -> Result<Dspdha> {
    let problems = model.check_structure();
    if !problems.is_empty() {
        return Err(Error::Validation(ValidationReport { failures: problems }));
    }
    let coverage = model.regions.check_covers(model.domain);
    if !coverage.is_empty() {
        return Err(Error::PartitionInvalid(coverage.join("; ")));
    }
    let stencils: Vec<StencilKind> = match stencils {
        Some(s) => {
            if s.len() != model.modes.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} stencils given for {} modes",
                    s.len(),
                    model.modes.len()
                )));
            }
            for (mode, st) in model.modes.iter().zip(s) {
                if *st != mode.kind.default_stencil() {
                    return Err(Error::UnsupportedCombination(format!(
                        "stencil {} cannot discretize mode '{}' ({:?})",
                        st.name(),
                        mode.name,
                        mode.kind
                    )));
                }
            }
            s.to_vec()
        }
        None => model.modes.iter().map(|d| d.kind.default_stencil()).collect(),
    };

    let full = discretize_domain(model.domain, m)?;
    let drop_left = matches!(model.boundaries.left, BoundaryCondition::Dirichlet(_));
    let drop_right = matches!(model.boundaries.right, BoundaryCondition::Dirichlet(_));
    if m < 2 + usize::from(drop_left) + usize::from(drop_right) {
        return Err(Error::InvalidArgument(format!(
            "m = {m} leaves fewer than 2 unknowns after removing dirichlet ends"
        )));
    }
    let mesh = full.trimmed(drop_left, drop_right)?;
    let partition = partition_from_regions(&model.regions, &mesh)?;
    let field = FieldValues::new(mesh.points().iter().map(|&x| model.init.sample(x)).collect());

    let mut names: Vec<&str> = Vec::new();
    for st in &stencils {
        if !names.contains(&st.name()) {
            names.push(st.name());
        }
    }
    let record = DiscretizationRecord {
        scheme_name: names.join("+"),
        h: full.spacing(),
        m,
        source_model: model.name.clone(),
    };
    let modes = model
        .modes
        .iter()
        .map(|d| Mode {
            name: d.name.clone(),
            flow: FlowSpec {
                kind: d.kind,
                source: d.source.clone(),
                boundaries: model.boundaries,
            },
            invariant: d.invariant,
        })
        .collect();

    let a = Dspdha {
        modes,
        events: model.events.clone(),
        mesh,
        guards: model.guards.clone(),
        resets: model.resets.clone(),
        init: DiscreteState::new(partition, field)?,
        record,
        merge_rule: model.merge_rule,
    };
    a.validate().into_result()?;
    Ok(a)
}
