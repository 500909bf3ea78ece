//! JSON model files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "rod",
//!   "domain": { "lower": 0.0, "upper": 1.0 },
//!   "modes": [{ "name": "rod", "flow": { "kind": "diffusion", "alpha": 1.0 } }],
//!   "boundary": { "left": { "dirichlet": 0.0 }, "right": "mirror" },
//!   "regions": [{ "interval": [0.0, 1.0], "closed_left": true, "closed_right": true, "mode": "rod" }],
//!   "init": { "constant": 0.2 },
//!   "guards": [],
//!   "resets": [],
//!   "discretization": { "m": 11 }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use pdha_core::automaton::{
    FlowKind, Guard, GuardDirection, InitialField, ModeDescription, ModeInvariant,
    ModelDescription, ResetKind, ResetRule, EventId, SourceTerm,
};
use pdha_core::mesh::{Interval, ModeId, Region, RegionSpec, SpaceDomain};
use pdha_core::schemes::{BoundaryCondition, Boundaries, MergeRule, StencilKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model:\n  {}", .0.join("\n  "))]
    Semantic(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    pub name: String,
    pub domain: DomainFile,
    pub modes: Vec<ModeFile>,
    /// Defaults to the event names used by guards and resets, in order of appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<String>>,
    pub boundary: BoundaryFile,
    pub regions: Vec<RegionFile>,
    pub init: InitFile,
    #[serde(default)]
    pub guards: Vec<GuardFile>,
    #[serde(default)]
    pub resets: Vec<ResetFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<DiscretizationFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFile {
    pub name: String,
    pub flow: FlowFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<InvariantFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowFile {
    Diffusion {
        alpha: f64,
        #[serde(default, skip_serializing_if = "SourceFile::is_zero")]
        source: SourceFile,
    },
    Advection {
        speed: f64,
        #[serde(default, skip_serializing_if = "SourceFile::is_zero")]
        source: SourceFile,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceFile {
    #[default]
    Zero,
    /// `slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// One value per unknown.
    Tabulated(Vec<f64>),
}

impl SourceFile {
    fn is_zero(&self) -> bool {
        *self == Self::Zero
    }
}

/// Missing bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BcFile {
    Dirichlet(f64),
    Mirror,
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryFile {
    pub left: BcFile,
    pub right: BcFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub interval: [f64; 2],
    #[serde(default = "yes")]
    pub closed_left: bool,
    #[serde(default)]
    pub closed_right: bool,
    pub mode: String,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceFile {
    pub interval: [f64; 2],
    #[serde(default = "yes")]
    pub closed_left: bool,
    #[serde(default)]
    pub closed_right: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitFile {
    Constant(f64),
    /// `[x, u]` pairs, linearly interpolated.
    Samples(Vec<[f64; 2]>),
    Pieces {
        pieces: Vec<PieceFile>,
        #[serde(default)]
        background: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionFile {
    /// `u >= threshold`
    Rising,
    /// `u <= threshold`
    Falling,
    /// `u < threshold`
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardFile {
    pub mode: String,
    pub event: String,
    pub direction: DirectionFile,
    pub threshold: f64,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ResetKindFile {
    Identity,
    SetTo(f64),
    ClampToThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetFile {
    pub mode: String,
    pub event: String,
    pub kind: ResetKindFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeFile {
    pub absorbing: String,
    pub vacant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// One stencil name per mode; each mode's natural stencil when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Vec<String>>,
}

/// Grid resolution requested by a model file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Points(usize),
    Spacing(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub model: ModelDescription,
    pub resolution: Option<Resolution>,
    pub stencils: Option<Vec<StencilKind>>,
}

impl LoadedModel {
    /// Grid-point count, with `m` taking precedence over the file.
    pub fn points(&self, m: Option<usize>) -> pdha_core::Result<usize> {
        match (m, self.resolution) {
            (Some(m), _) | (None, Some(Resolution::Points(m))) => Ok(m),
            (None, Some(Resolution::Spacing(h))) => self.model.points_for_spacing(h),
            (None, None) => Err(pdha_core::Error::InvalidArgument(
                "no grid resolution: give --m or a discretization entry".into(),
            )),
        }
    }
}

pub fn load_model(path: &Path) -> Result<ModelDescription, LoadError> {
    load_model_file(path).map(|l| l.model)
}

pub fn load_model_file(path: &Path) -> Result<LoadedModel, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<LoadedModel, LoadError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_model()
}

fn interval(iv: [f64; 2], closed_left: bool, closed_right: bool) -> Interval {
    Interval {
        lower: iv[0],
        upper: iv[1],
        closed_lower: closed_left,
        closed_upper: closed_right,
    }
}

fn bc_from(b: BcFile) -> BoundaryCondition {
    match b {
        BcFile::Dirichlet(c) => BoundaryCondition::Dirichlet(c),
        BcFile::Mirror => BoundaryCondition::Mirror,
        BcFile::Outflow => BoundaryCondition::Outflow,
    }
}

fn bc_to(b: BoundaryCondition) -> BcFile {
    match b {
        BoundaryCondition::Dirichlet(c) => BcFile::Dirichlet(c),
        BoundaryCondition::Mirror => BcFile::Mirror,
        BoundaryCondition::Outflow => BcFile::Outflow,
    }
}

impl ModelFile {
    /// Converts to a checked model description, reporting every problem found.
    pub fn into_model(self) -> Result<LoadedModel, LoadError> {
        let mut problems = Vec::new();
        if self.schema != SCHEMA_VERSION {
            problems.push(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema
            ));
        }
        let names: Vec<&str> = self.modes.iter().map(|m| m.name.as_str()).collect();
        let mut mode = |name: &str, place: String| match names.iter().position(|n| *n == name) {
            Some(q) => ModeId(q),
            None => {
                problems.push(format!("{place} refers to undeclared mode '{name}'"));
                ModeId(usize::MAX)
            }
        };

        let regions: Vec<Region> = self
            .regions
            .iter()
            .enumerate()
            .map(|(k, r)| Region {
                interval: interval(r.interval, r.closed_left, r.closed_right),
                mode: mode(&r.mode, format!("region {k}")),
            })
            .collect();
        let guards_modes: Vec<(ModeId, ModeId)> = self
            .guards
            .iter()
            .enumerate()
            .map(|(k, g)| (mode(&g.mode, format!("guard {k}")), mode(&g.target, format!("guard {k} target"))))
            .collect();
        let reset_modes: Vec<ModeId> = self
            .resets
            .iter()
            .enumerate()
            .map(|(k, r)| mode(&r.mode, format!("reset {k}")))
            .collect();
        let merge_rule = self.merge.as_ref().map(|m| MergeRule {
            absorbing: mode(&m.absorbing, "merge rule".into()),
            vacant: mode(&m.vacant, "merge rule".into()),
        });

        let events: Vec<String> = match &self.events {
            Some(e) => e.clone(),
            None => {
                let mut out: Vec<String> = Vec::new();
                let used = self.guards.iter().map(|g| &g.event).chain(self.resets.iter().map(|r| &r.event));
                for e in used {
                    if !out.contains(e) {
                        out.push(e.clone());
                    }
                }
                out
            }
        };
        let mut event = |name: &str, place: String| match events.iter().position(|e| e == name) {
            Some(k) => EventId(k),
            None => {
                problems.push(format!("{place} refers to undeclared event '{name}'"));
                EventId(usize::MAX)
            }
        };
        let guards: Vec<Guard> = self
            .guards
            .iter()
            .zip(guards_modes)
            .enumerate()
            .map(|(k, (g, (source, target)))| Guard {
                source,
                event: event(&g.event, format!("guard {k}")),
                direction: match g.direction {
                    DirectionFile::Rising => GuardDirection::Rising,
                    DirectionFile::Falling => GuardDirection::Falling,
                    DirectionFile::Below => GuardDirection::StrictlyBelow,
                },
                threshold: g.threshold,
                target,
            })
            .collect();
        let resets: Vec<ResetRule> = self
            .resets
            .iter()
            .zip(reset_modes)
            .enumerate()
            .map(|(k, (r, mode))| ResetRule {
                mode,
                event: event(&r.event, format!("reset {k}")),
                kind: match r.kind {
                    ResetKindFile::Identity => ResetKind::Identity,
                    ResetKindFile::SetTo(v) => ResetKind::SetTo(v),
                    ResetKindFile::ClampToThreshold => ResetKind::ClampToThreshold,
                },
            })
            .collect();

        let modes: Vec<ModeDescription> = self
            .modes
            .iter()
            .map(|m| {
                let (kind, source) = match &m.flow {
                    FlowFile::Diffusion { alpha, source } => (FlowKind::Diffusion { alpha: *alpha }, source),
                    FlowFile::Advection { speed, source } => (FlowKind::Advection { speed: *speed }, source),
                };
                ModeDescription {
                    name: m.name.clone(),
                    kind,
                    source: match source {
                        SourceFile::Zero => SourceTerm::Zero,
                        SourceFile::Affine { slope, intercept } => SourceTerm::AffineInX {
                            slope: *slope,
                            intercept: *intercept,
                        },
                        SourceFile::Tabulated(v) => SourceTerm::Tabulated(v.clone()),
                    },
                    invariant: m.invariant.map(|i| ModeInvariant {
                        lo: i.lo.unwrap_or(f64::NEG_INFINITY),
                        hi: i.hi.unwrap_or(f64::INFINITY),
                    }),
                }
            })
            .collect();

        let init = match &self.init {
            InitFile::Constant(c) => InitialField::Constant(*c),
            InitFile::Samples(s) => InitialField::Samples(s.iter().map(|p| (p[0], p[1])).collect()),
            InitFile::Pieces { pieces, background } => InitialField::Pieces {
                pieces: pieces
                    .iter()
                    .map(|p| (interval(p.interval, p.closed_left, p.closed_right), p.value))
                    .collect(),
                background: *background,
            },
        };

        let (resolution, stencils) = match &self.discretization {
            None => (None, None),
            Some(d) => {
                let resolution = match (d.m, d.h) {
                    (Some(_), Some(_)) => {
                        problems.push("discretization gives both m and h".into());
                        None
                    }
                    (Some(m), None) => Some(Resolution::Points(m)),
                    (None, Some(h)) => Some(Resolution::Spacing(h)),
                    (None, None) => None,
                };
                let stencils = d.scheme.as_ref().map(|names| {
                    names
                        .iter()
                        .filter_map(|n| {
                            let s = StencilKind::from_name(n);
                            if s.is_none() {
                                problems.push(format!("unknown stencil '{n}'"));
                            }
                            s
                        })
                        .collect::<Vec<_>>()
                });
                (resolution, stencils)
            }
        };

        let domain = match SpaceDomain::new(self.domain.lower, self.domain.upper) {
            Ok(d) => Some(d),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        let Some(domain) = domain else {
            return Err(LoadError::Semantic(problems));
        };
        let model = ModelDescription {
            name: self.name.clone(),
            domain,
            modes,
            events,
            boundaries: Boundaries {
                left: bc_from(self.boundary.left),
                right: bc_from(self.boundary.right),
            },
            regions: RegionSpec::new(regions),
            init,
            guards,
            resets,
            merge_rule,
        };
        if problems.is_empty() {
            // unresolved names are already reported; avoid repeating them
            problems.extend(model.check());
        }
        if !problems.is_empty() {
            return Err(LoadError::Semantic(problems));
        }
        Ok(LoadedModel {
            model,
            resolution,
            stencils,
        })
    }

    /// Serializable form of a model description.
    pub fn from_model(
        model: &ModelDescription,
        resolution: Option<Resolution>,
        stencils: Option<&[StencilKind]>,
    ) -> Result<Self, String> {
        let mode_name = |q: ModeId| -> Result<String, String> {
            model
                .modes
                .get(q.0)
                .map(|m| m.name.clone())
                .ok_or_else(|| format!("undeclared mode {q}"))
        };
        let event_name = |e: EventId| -> Result<String, String> {
            model
                .events
                .get(e.0)
                .cloned()
                .ok_or_else(|| format!("undeclared event {}", e.0))
        };
        let finite = |v: f64| v.is_finite().then_some(v);

        let mut modes = Vec::new();
        for m in &model.modes {
            let source = match &m.source {
                SourceTerm::Zero => SourceFile::Zero,
                SourceTerm::AffineInX { slope, intercept } => SourceFile::Affine {
                    slope: *slope,
                    intercept: *intercept,
                },
                SourceTerm::Tabulated(v) => SourceFile::Tabulated(v.clone()),
                SourceTerm::Function(_) => {
                    return Err(format!("mode '{}' has a closure source, which cannot be saved", m.name))
                }
            };
            let flow = match m.kind {
                FlowKind::Diffusion { alpha } => FlowFile::Diffusion { alpha, source },
                FlowKind::Advection { speed } => FlowFile::Advection { speed, source },
            };
            modes.push(ModeFile {
                name: m.name.clone(),
                flow,
                invariant: m.invariant.map(|i| InvariantFile {
                    lo: finite(i.lo),
                    hi: finite(i.hi),
                }),
            });
        }
        let regions = model
            .regions
            .regions()
            .iter()
            .map(|r| {
                Ok(RegionFile {
                    interval: [r.interval.lower, r.interval.upper],
                    closed_left: r.interval.closed_lower,
                    closed_right: r.interval.closed_upper,
                    mode: mode_name(r.mode)?,
                })
            })
            .collect::<Result<_, String>>()?;
        let init = match &model.init {
            InitialField::Constant(c) => InitFile::Constant(*c),
            InitialField::Samples(s) => InitFile::Samples(s.iter().map(|(x, u)| [*x, *u]).collect()),
            InitialField::Pieces { pieces, background } => InitFile::Pieces {
                pieces: pieces
                    .iter()
                    .map(|(iv, v)| PieceFile {
                        interval: [iv.lower, iv.upper],
                        closed_left: iv.closed_lower,
                        closed_right: iv.closed_upper,
                        value: *v,
                    })
                    .collect(),
                background: *background,
            },
        };
        let guards = model
            .guards
            .iter()
            .map(|g| {
                Ok(GuardFile {
                    mode: mode_name(g.source)?,
                    event: event_name(g.event)?,
                    direction: match g.direction {
                        GuardDirection::Rising => DirectionFile::Rising,
                        GuardDirection::Falling => DirectionFile::Falling,
                        GuardDirection::StrictlyBelow => DirectionFile::Below,
                    },
                    threshold: g.threshold,
                    target: mode_name(g.target)?,
                })
            })
            .collect::<Result<_, String>>()?;
        let resets = model
            .resets
            .iter()
            .map(|r| {
                Ok(ResetFile {
                    mode: mode_name(r.mode)?,
                    event: event_name(r.event)?,
                    kind: match r.kind {
                        ResetKind::Identity => ResetKindFile::Identity,
                        ResetKind::SetTo(v) => ResetKindFile::SetTo(v),
                        ResetKind::ClampToThreshold => ResetKindFile::ClampToThreshold,
                    },
                })
            })
            .collect::<Result<_, String>>()?;
        let merge = match model.merge_rule {
            Some(r) => Some(MergeFile {
                absorbing: mode_name(r.absorbing)?,
                vacant: mode_name(r.vacant)?,
            }),
            None => None,
        };
        let discretization = (resolution.is_some() || stencils.is_some()).then(|| DiscretizationFile {
            m: match resolution {
                Some(Resolution::Points(m)) => Some(m),
                _ => None,
            },
            h: match resolution {
                Some(Resolution::Spacing(h)) => Some(h),
                _ => None,
            },
            scheme: stencils.map(|s| s.iter().map(|k| k.name().to_string()).collect()),
        });
        Ok(Self {
            schema: SCHEMA_VERSION,
            name: model.name.clone(),
            domain: DomainFile {
                lower: model.domain.lower(),
                upper: model.domain.upper(),
            },
            modes,
            events: Some(model.events.clone()),
            boundary: BoundaryFile {
                left: bc_to(model.boundaries.left),
                right: bc_to(model.boundaries.right),
            },
            regions,
            init,
            guards,
            resets,
            merge,
            discretization,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialize")
    }
}
