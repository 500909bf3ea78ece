//! Built-in models: the heated rod and the two-mode traffic road.

use crate::automaton::{
    discretize_model, Dspdha, FlowKind, Guard, GuardDirection, InitialField, ModeDescription,
    ModelDescription, ResetKind, ResetRule, EventId, SourceTerm,
};
use crate::error::{Error, Result};
use crate::executor::{Integrator, SimOptions};
use crate::mesh::{Interval, ModeId, Region, RegionSpec, SpaceDomain};
use crate::schemes::{BoundaryCondition, Boundaries, MergeRule};

/// Rod on `[0, length]` with a heater at every grid point. In mode ON the
/// heater adds `amplitude * (length - x)`; ends are held at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaterConfig {
    pub length: f64,
    pub h: f64,
    pub alpha: f64,
    pub amplitude: f64,
    /// An OFF point at or below this value switches ON.
    pub on_below: f64,
    /// An ON point at or above this value switches OFF.
    pub off_above: f64,
    pub initial: f64,
}

impl Default for HeaterConfig {
    fn default() -> Self {
        Self {
            length: 10.0,
            h: 1.0,
            alpha: 1.0,
            amplitude: 1.0,
            on_below: 0.4,
            off_above: 0.7,
            initial: 0.2,
        }
    }
}

impl HeaterConfig {
    /// Unknowns between the two fixed ends.
    pub fn interior_points(&self) -> usize {
        (self.length / self.h).round() as usize - 1
    }
}

pub const HEATER_ON: ModeId = ModeId(0);
pub const HEATER_OFF: ModeId = ModeId(1);

pub fn heater_description(cfg: &HeaterConfig) -> Result<ModelDescription> {
    if !(0.0 < cfg.on_below && cfg.on_below < cfg.off_above) {
        return Err(Error::InvalidArgument(format!(
            "heater thresholds need 0 < on_below < off_above, got {} and {}",
            cfg.on_below, cfg.off_above
        )));
    }
    let domain = SpaceDomain::new(0.0, cfg.length)?;
    let (turn_off, turn_on) = (EventId(0), EventId(1));
    Ok(ModelDescription {
        name: "heater".into(),
        domain,
        modes: vec![
            ModeDescription {
                name: "ON".into(),
                kind: FlowKind::Diffusion { alpha: cfg.alpha },
                source: SourceTerm::AffineInX {
                    slope: -cfg.amplitude,
                    intercept: cfg.amplitude * cfg.length,
                },
                invariant: None,
            },
            ModeDescription {
                name: "OFF".into(),
                kind: FlowKind::Diffusion { alpha: cfg.alpha },
                source: SourceTerm::Zero,
                invariant: None,
            },
        ],
        events: vec!["turn_off".into(), "turn_on".into()],
        boundaries: Boundaries::both(BoundaryCondition::Dirichlet(0.0)),
        regions: RegionSpec::single(domain, HEATER_ON),
        init: InitialField::Constant(cfg.initial),
        guards: vec![
            Guard {
                source: HEATER_ON,
                event: turn_off,
                direction: GuardDirection::Rising,
                threshold: cfg.off_above,
                target: HEATER_OFF,
            },
            Guard {
                source: HEATER_OFF,
                event: turn_on,
                direction: GuardDirection::Falling,
                threshold: cfg.on_below,
                target: HEATER_ON,
            },
        ],
        resets: vec![
            ResetRule {
                mode: HEATER_ON,
                event: turn_off,
                kind: ResetKind::Identity,
            },
            ResetRule {
                mode: HEATER_OFF,
                event: turn_on,
                kind: ResetKind::Identity,
            },
        ],
        merge_rule: None,
    })
}

pub fn heater_model(cfg: &HeaterConfig) -> Result<Dspdha> {
    let model = heater_description(cfg)?;
    discretize_model(&model, model.points_for_spacing(cfg.h)?)
}

/// Road on `[0, length]`. Free traffic moves right at `v_free`, congestion
/// moves left at `v_congested`; a cell switches to congestion once its
/// density reaches `critical`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub length: f64,
    pub h: f64,
    pub v_free: f64,
    pub v_congested: f64,
    /// Jam density of the triangular flux; carried for completeness, the
    /// transport dynamics do not use it.
    pub omega: f64,
    pub critical: f64,
    /// Inclusive `(first, last)` cell centres of each initial congested block.
    pub congested_blocks: Vec<(f64, f64)>,
    pub congested_density: f64,
    /// Inclusive `(first, last)` cell centres of each initial free-flow platoon.
    pub free_platoons: Vec<(f64, f64)>,
    pub free_density: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            length: 10.0,
            h: 0.1,
            v_free: 3.0,
            v_congested: 1.0,
            omega: 4.0,
            critical: 1.0,
            congested_blocks: vec![(1.0, 1.2), (3.5, 3.7)],
            congested_density: 1.0,
            free_platoons: vec![(1.5, 1.6), (3.9, 4.0)],
            free_density: 0.5,
        }
    }
}

impl TrafficConfig {
    /// Options stepping one congested cell per step.
    pub fn sim_options(&self, t_end: f64) -> SimOptions {
        SimOptions::new(self.h / self.v_congested, Integrator::Characteristic, t_end)
    }

    fn cell_interval(&self, (first, last): (f64, f64)) -> Interval {
        Interval::half_open(first - self.h / 2.0, last + self.h / 2.0)
    }
}

pub const TRAFFIC_FREE: ModeId = ModeId(0);
pub const TRAFFIC_CONGESTED: ModeId = ModeId(1);

pub fn traffic_description(cfg: &TrafficConfig) -> Result<ModelDescription> {
    if !(cfg.v_free > 0.0 && cfg.v_congested > 0.0 && cfg.critical > 0.0) {
        return Err(Error::InvalidArgument(
            "traffic speeds and critical density must be positive".into(),
        ));
    }
    if !(cfg.free_density < cfg.critical && cfg.congested_density >= cfg.critical) {
        return Err(Error::InvalidArgument(format!(
            "free density {} must be below and congested density {} at or above the critical density {}",
            cfg.free_density, cfg.congested_density, cfg.critical
        )));
    }
    let domain = SpaceDomain::new(0.0, cfg.length)?;

    let mut jams: Vec<Interval> = cfg
        .congested_blocks
        .iter()
        .map(|&b| cfg.cell_interval(b))
        .collect();
    jams.sort_by(|a, b| a.lower.total_cmp(&b.lower));
    let mut regions = Vec::new();
    let mut cursor = domain.lower();
    for jam in &jams {
        let lower = jam.lower.max(domain.lower());
        if lower > cursor {
            regions.push(Region {
                interval: Interval::half_open(cursor, lower),
                mode: TRAFFIC_FREE,
            });
        }
        let upper = jam.upper.min(domain.upper());
        regions.push(Region {
            interval: Interval {
                lower,
                upper,
                closed_lower: true,
                closed_upper: upper == domain.upper(),
            },
            mode: TRAFFIC_CONGESTED,
        });
        cursor = upper;
    }
    if cursor < domain.upper() {
        regions.push(Region {
            interval: Interval::closed(cursor, domain.upper()),
            mode: TRAFFIC_FREE,
        });
    }

    let pieces = jams
        .iter()
        .map(|iv| (*iv, cfg.congested_density))
        .chain(
            cfg.free_platoons
                .iter()
                .map(|&p| (cfg.cell_interval(p), cfg.free_density)),
        )
        .collect();

    let (congest, release) = (EventId(0), EventId(1));
    Ok(ModelDescription {
        name: "traffic".into(),
        domain,
        modes: vec![
            ModeDescription {
                name: "free".into(),
                kind: FlowKind::Advection { speed: cfg.v_free },
                source: SourceTerm::Zero,
                invariant: None,
            },
            ModeDescription {
                name: "congested".into(),
                kind: FlowKind::Advection {
                    speed: -cfg.v_congested,
                },
                source: SourceTerm::Zero,
                invariant: None,
            },
        ],
        events: vec!["congest".into(), "release".into()],
        boundaries: Boundaries::both(BoundaryCondition::Outflow),
        regions: RegionSpec::new(regions),
        init: InitialField::Pieces {
            pieces,
            background: 0.0,
        },
        guards: vec![
            Guard {
                source: TRAFFIC_FREE,
                event: congest,
                direction: GuardDirection::Rising,
                threshold: cfg.critical,
                target: TRAFFIC_CONGESTED,
            },
            Guard {
                source: TRAFFIC_CONGESTED,
                event: release,
                direction: GuardDirection::StrictlyBelow,
                threshold: cfg.critical,
                target: TRAFFIC_FREE,
            },
        ],
        resets: vec![
            ResetRule {
                mode: TRAFFIC_FREE,
                event: congest,
                kind: ResetKind::Identity,
            },
            ResetRule {
                mode: TRAFFIC_CONGESTED,
                event: release,
                kind: ResetKind::Identity,
            },
        ],
        merge_rule: Some(MergeRule {
            absorbing: TRAFFIC_CONGESTED,
            vacant: TRAFFIC_FREE,
        }),
    })
}

pub fn traffic_model(cfg: &TrafficConfig) -> Result<Dspdha> {
    let model = traffic_description(cfg)?;
    discretize_model(&model, model.points_for_spacing(cfg.h)?)
}

/// Looks up a built-in model by name with default parameters.
pub fn builtin(name: &str) -> Option<Dspdha> {
    match name {
        "heater" => heater_model(&HeaterConfig::default()).ok(),
        "traffic" => traffic_model(&TrafficConfig::default()).ok(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::build_rhs;

    #[test]
    fn heater_defaults() {
        let a = heater_model(&HeaterConfig::default()).unwrap();
        assert_eq!(a.modes.len(), 2);
        assert_eq!(a.mesh.len(), 9);
        assert_eq!(a.mesh.points()[0], 1.0);
        assert!(a.init.partition.modes().iter().all(|q| *q == HEATER_ON));
        assert!(a.init.field.values().iter().all(|v| *v == 0.2));
        let src = &a.modes[HEATER_ON.0].flow.source;
        assert_eq!(src.eval(2, 3.0, 0.0), 7.0);
        let thresholds: Vec<f64> = a.guards.iter().map(|g| g.threshold).collect();
        assert_eq!(thresholds, vec![0.7, 0.4]);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn heater_rhs_positive_at_start() {
        let a = heater_model(&HeaterConfig::default()).unwrap();
        assert!(build_rhs(&a, &a.init, 0.0).unwrap().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn heater_coarse_grid() {
        let cfg = HeaterConfig { h: 2.0, ..HeaterConfig::default() };
        let a = heater_model(&cfg).unwrap();
        assert_eq!(a.mesh.points(), &[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(cfg.interior_points(), 4);
    }

    #[test]
    fn heater_rejects_inverted_band() {
        let cfg = HeaterConfig { on_below: 0.8, ..HeaterConfig::default() };
        assert!(heater_model(&cfg).is_err());
    }

    #[test]
    fn traffic_defaults() {
        let cfg = TrafficConfig::default();
        assert_eq!((cfg.v_free, cfg.v_congested, cfg.omega, cfg.critical), (3.0, 1.0, 4.0, 1.0));
        let a = traffic_model(&cfg).unwrap();
        assert_eq!(a.mesh.len(), 101);
        let jammed = a.init.partition.indices_of(TRAFFIC_CONGESTED);
        let xs: Vec<f64> = jammed.iter().map(|&i| a.mesh.points()[i]).collect();
        assert_eq!(xs, vec![1.0, 1.1, 1.2, 3.5, 3.6, 3.7]);
        assert!(jammed.iter().all(|&i| a.init.field.values()[i] == 1.0));
        let occupied_free: Vec<usize> = (0..101)
            .filter(|&i| a.init.field.values()[i] > 0.0 && a.init.partition.get(i) == TRAFFIC_FREE)
            .collect();
        assert_eq!(occupied_free, vec![15, 16, 39, 40]);
        assert_eq!(a.mode_speeds(), vec![3.0, -1.0]);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn builtins_by_name() {
        assert!(builtin("heater").is_some());
        assert!(builtin("traffic").is_some());
        assert!(builtin("glacier").is_none());
    }
}
