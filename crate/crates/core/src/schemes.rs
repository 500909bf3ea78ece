//! Finite-difference stencils, order reduction and exact transport on the grid.
//!
//! Boundary conditions are realized with ghost values: the field is extended
//! by one virtual cell at each end and the interior stencil is applied
//! unchanged at every point.

use crate::error::{Error, Result};
use crate::mesh::{DiscreteDomain, DiscreteState, FieldValues, ModeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// Fixed value outside the grid.
    Dirichlet(f64),
    /// Ghost equals the nearest interior value (`u_0 = u_1`).
    Mirror,
    /// Zero gradient; mass leaving the grid is discarded.
    Outflow,
}

impl BoundaryCondition {
    fn ghost(self, edge_value: f64) -> f64 {
        match self {
            Self::Dirichlet(c) => c,
            Self::Mirror | Self::Outflow => edge_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundaries {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

impl Boundaries {
    pub fn both(bc: BoundaryCondition) -> Self {
        Self { left: bc, right: bc }
    }

    fn check_finite(&self) -> Result<()> {
        for bc in [self.left, self.right] {
            if let BoundaryCondition::Dirichlet(c) = bc {
                if !c.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "dirichlet value must be finite, got {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn has_outflow(&self) -> bool {
        self.left == BoundaryCondition::Outflow || self.right == BoundaryCondition::Outflow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilKind {
    SecondCentral,
    FirstUpwind(WindDirection),
}

impl StencilKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SecondCentral => "second_central",
            Self::FirstUpwind(WindDirection::Forward) => "first_upwind(forward)",
            Self::FirstUpwind(WindDirection::Backward) => "first_upwind(backward)",
        }
    }

    /// Inverse of [`StencilKind::name`].
    pub fn from_name(name: &str) -> Option<Self> {
        [
            Self::SecondCentral,
            Self::FirstUpwind(WindDirection::Forward),
            Self::FirstUpwind(WindDirection::Backward),
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

#[inline]
fn left_neighbor(u: &[f64], i: usize, bc: &Boundaries) -> f64 {
    if i == 0 {
        bc.left.ghost(u[0])
    } else {
        u[i - 1]
    }
}

#[inline]
fn right_neighbor(u: &[f64], i: usize, bc: &Boundaries) -> f64 {
    if i + 1 == u.len() {
        bc.right.ghost(u[i])
    } else {
        u[i + 1]
    }
}

/// Central second difference at one point, `(g_{i-1} - 2 u_i + g_{i+1}) / h^2`.
#[inline]
pub(crate) fn second_difference_at(u: &[f64], i: usize, h: f64, bc: &Boundaries) -> f64 {
    (left_neighbor(u, i, bc) - 2.0 * u[i] + right_neighbor(u, i, bc)) / (h * h)
}

/// One-sided first difference taken against the wind at one point.
#[inline]
pub(crate) fn upwind_difference_at(u: &[f64], i: usize, h: f64, speed: f64, bc: &Boundaries) -> f64 {
    if speed > 0.0 {
        (u[i] - left_neighbor(u, i, bc)) / h
    } else {
        (right_neighbor(u, i, bc) - u[i]) / h
    }
}

pub fn second_difference(u: &FieldValues, h: f64, bc: Boundaries) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    bc.check_finite()?;
    if bc.has_outflow() {
        return Err(Error::UnsupportedCombination(
            "outflow boundary with the second central stencil".into(),
        ));
    }
    let u = u.values();
    Ok((0..u.len()).map(|i| second_difference_at(u, i, h, &bc)).collect())
}

/// Upwind approximation of `u_x`: backward difference for positive speed,
/// forward difference for negative speed.
pub fn upwind_first_difference(
    u: &FieldValues,
    h: f64,
    speed: f64,
    bc: Boundaries,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    if speed == 0.0 || !speed.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "upwind differencing needs a finite nonzero speed, got {speed}"
        )));
    }
    bc.check_finite()?;
    let u = u.values();
    Ok((0..u.len())
        .map(|i| upwind_difference_at(u, i, h, speed, &bc))
        .collect())
}

/// How parcels that meet in one cell during a characteristic shift combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeRule {
    /// A collision involving this mode leaves the combined cell in this mode.
    pub absorbing: ModeId,
    /// Mode given to cells left empty.
    pub vacant: ModeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collision {
    /// Offset from the start of the step at which the parcels met.
    pub offset: f64,
    pub index: usize,
    pub absorbed: f64,
    pub from_mode: ModeId,
    pub into_mode: ModeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOutcome {
    pub state: DiscreteState,
    pub collisions: Vec<Collision>,
    /// Total field mass carried out through either end.
    pub exited: f64,
}

/// Whole-cell hop count of each mode over `dt`.
pub fn commensurate_hops(speeds: &[f64], dt: f64, h: f64) -> Result<Vec<i64>> {
    speeds
        .iter()
        .enumerate()
        .map(|(q, &v)| {
            let travel = v * dt;
            let k = (travel / h).round();
            if !travel.is_finite() || (travel - k * h).abs() > 1e-9 * h {
                Err(Error::StepSize(format!(
                    "mode {q}: speed {v} times dt {dt} is not a whole number of cells of width {h}"
                )))
            } else {
                Ok(k as i64)
            }
        })
        .collect()
}

/// Moves every occupied cell along its mode's characteristic by a whole
/// number of cells.
///
/// `speeds[q]` is the signed speed of mode `q`. The step is split into ticks
/// in which the fastest mode advances one cell and slower modes advance on an
/// evenly spread subset of ticks. Within a tick, modes moving left go first,
/// then modes moving right. A parcel landing on an occupied cell merges with
/// it per `rule`; parcels pushed past either end are discarded.
pub fn characteristic_shift(
    state: &DiscreteState,
    dt: f64,
    speeds: &[f64],
    mesh: &DiscreteDomain,
    rule: MergeRule,
) -> Result<ShiftOutcome> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be non-negative, got {dt}")));
    }
    let m = state.len();
    if mesh.len() != m {
        return Err(Error::DimensionMismatch {
            expected: mesh.len(),
            found: m,
        });
    }
    if let Some(q) = state.partition.modes().iter().find(|q| q.0 >= speeds.len()) {
        return Err(Error::InvalidArgument(format!("no speed given for mode {q}")));
    }
    let hops = commensurate_hops(speeds, dt, mesh.spacing())?;
    let ticks = hops.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0);

    let mut values = state.field.clone().into_inner();
    let mut modes = state.partition.clone();
    let mut collisions = Vec::new();
    let mut exited = 0.0;

    let mut order: Vec<usize> = (0..speeds.len()).filter(|&q| hops[q] != 0).collect();
    order.sort_by_key(|&q| (hops[q] > 0, q));

    let mut moved = vec![false; m];
    let mut lifted = Vec::with_capacity(m);
    for s in 0..ticks {
        moved.iter_mut().for_each(|f| *f = false);
        let offset = dt * (s + 1) as f64 / ticks as f64;
        for &q in &order {
            let k = hops[q].unsigned_abs();
            if k * (s + 1) / ticks == k * s / ticks {
                continue;
            }
            let mode = ModeId(q);
            let dir: isize = if hops[q] > 0 { 1 } else { -1 };
            lifted.clear();
            for i in 0..m {
                if values[i] != 0.0 && modes.get(i) == mode && !moved[i] {
                    lifted.push((i, values[i]));
                    values[i] = 0.0;
                    modes.modes_mut()[i] = rule.vacant;
                }
            }
            for &(i, v) in &lifted {
                let j = i as isize + dir;
                if j < 0 || j >= m as isize {
                    exited += v;
                    continue;
                }
                let j = j as usize;
                if values[j] != 0.0 {
                    let occupant = modes.get(j);
                    let into = if mode == rule.absorbing || occupant == rule.absorbing {
                        rule.absorbing
                    } else {
                        occupant
                    };
                    if into != mode {
                        collisions.push(Collision {
                            offset,
                            index: j,
                            absorbed: v,
                            from_mode: mode,
                            into_mode: into,
                        });
                    } else if occupant != into {
                        collisions.push(Collision {
                            offset,
                            index: j,
                            absorbed: values[j],
                            from_mode: occupant,
                            into_mode: into,
                        });
                    }
                    values[j] += v;
                    modes.modes_mut()[j] = into;
                    moved[j] = moved[j] || into == mode;
                } else {
                    values[j] = v;
                    modes.modes_mut()[j] = mode;
                    moved[j] = true;
                }
            }
        }
    }

    Ok(ShiftOutcome {
        state: DiscreteState::new(modes, FieldValues::new(values))?,
        collisions,
        exited,
    })
}

/// Right-hand side of one equation in a first-order-in-time system.
#[derive(Debug, Clone, PartialEq)]
pub enum FirstOrderRhs<F> {
    /// `d/dt y_k = y_next`
    Chain { next: usize },
    /// `d/dt y_k = f(u, u_x, u_xx, ..., t)`
    Closure(F),
}

/// `u^{(n)} = f` rewritten as `u' = v_1, v_1' = v_2, ..., v_{n-1}' = f`.
/// Variable 0 is `u`, variable `k` is `v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderSystem<F> {
    equations: Vec<FirstOrderRhs<F>>,
}

impl<F> FirstOrderSystem<F> {
    pub fn order(&self) -> usize {
        self.equations.len()
    }

    pub fn equations(&self) -> &[FirstOrderRhs<F>] {
        &self.equations
    }

    pub fn closure(&self) -> &F {
        match self.equations.last() {
            Some(FirstOrderRhs::Closure(f)) => f,
            _ => unreachable!("order_reduce always ends with the closure"),
        }
    }

    /// Number of scalar ODEs after semi-discretization over `m` points.
    pub fn scalar_ode_count(&self, m: usize) -> usize {
        self.order() * m
    }
}

pub fn order_reduce<F>(n: usize, rhs: F) -> Result<FirstOrderSystem<F>> {
    if n < 1 {
        return Err(Error::InvalidArgument("time derivative order must be at least 1".into()));
    }
    let mut equations: Vec<FirstOrderRhs<F>> =
        (1..n).map(|next| FirstOrderRhs::Chain { next }).collect();
    equations.push(FirstOrderRhs::Closure(rhs));
    Ok(FirstOrderSystem { equations })
}

/// `f = a u_xx + b u_x + c u`, applied to the zeroth variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOperator {
    pub uxx: f64,
    pub ux: f64,
    pub u: f64,
}

/// A reduced system laid out over a grid: unknowns are stored variable-major,
/// `y[k * m + i]` is variable `k` at grid point `i`.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    system: FirstOrderSystem<LinearOperator>,
    m: usize,
    h: f64,
    boundaries: Boundaries,
}

impl SemiDiscreteSystem {
    pub fn dimension(&self) -> usize {
        self.system.order() * self.m
    }

    pub fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: y.len(),
            });
        }
        let m = self.m;
        let u = &y[..m];
        let mut out = vec![0.0; y.len()];
        for (k, eq) in self.system.equations().iter().enumerate() {
            let dst = &mut out[k * m..(k + 1) * m];
            match eq {
                FirstOrderRhs::Chain { next } => {
                    dst.copy_from_slice(&y[next * m..(next + 1) * m]);
                }
                FirstOrderRhs::Closure(op) => {
                    for (i, d) in dst.iter_mut().enumerate() {
                        let mut v = op.u * u[i];
                        if op.uxx != 0.0 {
                            v += op.uxx * second_difference_at(u, i, self.h, &self.boundaries);
                        }
                        if op.ux != 0.0 {
                            // u_t = ux * u_x transports with speed -ux
                            v += op.ux * upwind_difference_at(u, i, self.h, -op.ux, &self.boundaries);
                        }
                        *d = v;
                    }
                }
            }
        }
        Ok(out)
    }
}

impl FirstOrderSystem<LinearOperator> {
    pub fn semi_discretize(
        &self,
        mesh: &DiscreteDomain,
        boundaries: Boundaries,
    ) -> Result<SemiDiscreteSystem> {
        boundaries.check_finite()?;
        if self.closure().uxx != 0.0 && boundaries.has_outflow() {
            return Err(Error::UnsupportedCombination(
                "outflow boundary with the second central stencil".into(),
            ));
        }
        Ok(SemiDiscreteSystem {
            system: self.clone(),
            m: mesh.len(),
            h: mesh.spacing(),
            boundaries,
        })
    }
}
