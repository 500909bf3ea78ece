//! One-dimensional spatial domains, uniform grids and mode partitions.
//!
//! A [`DiscretePartition`] assigns one control mode to every grid point and a
//! [`FieldValues`] vector holds the field (temperature, density, ...) at the
//! same points. Together they form a [`DiscreteState`].

use std::fmt;

use crate::error::{Error, Result};

/// Relative tolerance on the uniform-spacing invariant.
const SPACING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceDomain {
    lower: f64,
    upper: f64,
}

impl SpaceDomain {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || upper <= lower {
            return Err(Error::InvalidArgument(format!(
                "domain requires finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Ordered, uniformly spaced grid points inside a [`SpaceDomain`].
///
/// The points need not include the domain end points: a grid that carries
/// only interior unknowns (with Dirichlet ends held as ghost values) is
/// represented the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDomain {
    points: Vec<f64>,
    spacing: f64,
    domain: SpaceDomain,
}

impl DiscreteDomain {
    pub fn new(points: Vec<f64>, domain: SpaceDomain) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a discrete domain needs at least 2 points, got {}",
                points.len()
            )));
        }
        let spacing = points[1] - points[0];
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument(
                "grid points must be strictly increasing".into(),
            ));
        }
        for w in points.windows(2) {
            if (w[1] - w[0] - spacing).abs() > SPACING_TOL * spacing {
                return Err(Error::InvalidArgument(format!(
                    "grid is not uniform: step {} differs from {}",
                    w[1] - w[0],
                    spacing
                )));
            }
        }
        if let Some(x) = points.iter().find(|x| !domain.contains(**x)) {
            return Err(Error::InvalidArgument(format!(
                "grid point {x} lies outside [{}, {}]",
                domain.lower, domain.upper
            )));
        }
        Ok(Self {
            points,
            spacing,
            domain,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn domain(&self) -> SpaceDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point at `x`, if one lies within a millionth of a cell.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let raw = (x - self.points[0]) / self.spacing;
        let i = raw.round();
        if i < 0.0 || i as usize >= self.points.len() {
            return None;
        }
        let i = i as usize;
        ((self.points[i] - x).abs() <= 1e-6 * self.spacing).then_some(i)
    }

    /// Drops the first and/or last point; used when an end carries a fixed
    /// Dirichlet value instead of an unknown.
    pub fn trimmed(&self, drop_first: bool, drop_last: bool) -> Result<Self> {
        let start = usize::from(drop_first);
        let end = self.points.len() - usize::from(drop_last);
        Self::new(self.points[start..end.max(start)].to_vec(), self.domain)
    }
}

/// Uniform grid of `m` points with `x_1 = lower` and `x_m = upper`.
pub fn discretize_domain(domain: SpaceDomain, m: usize) -> Result<DiscreteDomain> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "m must be at least 2, got {m}"
        )));
    }
    let n = (m - 1) as f64;
    let points = (0..m)
        .map(|i| {
            if i == m - 1 {
                domain.upper
            } else {
                domain.lower + domain.length() * (i as f64) / n
            }
        })
        .collect();
    DiscreteDomain::new(points, domain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId(pub usize);

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiscretePartition(Vec<ModeId>);

impl DiscretePartition {
    pub fn new(modes: Vec<ModeId>) -> Self {
        Self(modes)
    }

    pub fn uniform(mode: ModeId, m: usize) -> Self {
        Self(vec![mode; m])
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.0
    }

    pub fn modes_mut(&mut self) -> &mut [ModeId] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> ModeId {
        self.0[i]
    }

    /// Grid indices currently assigned to `mode`.
    pub fn indices_of(&self, mode: ModeId) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, q)| (*q == mode).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldValues(Vec<f64>);

impl FieldValues {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(value: f64, m: usize) -> Self {
        Self(vec![value; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First index holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }
}

/// `s_d = (p_d, u_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub partition: DiscretePartition,
    pub field: FieldValues,
}

impl DiscreteState {
    pub fn new(partition: DiscretePartition, field: FieldValues) -> Result<Self> {
        if partition.len() != field.len() {
            return Err(Error::DimensionMismatch {
                expected: partition.len(),
                found: field.len(),
            });
        }
        Ok(Self { partition, field })
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }
}

/// Interval with independently open or closed end points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub closed_lower: bool,
    pub closed_upper: bool,
}

impl Interval {
    pub fn closed(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            closed_lower: true,
            closed_upper: true,
        }
    }

    /// `[lower, upper)`
    pub fn half_open(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            closed_lower: true,
            closed_upper: false,
        }
    }

    /// `(lower, upper]`
    pub fn left_open(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            closed_lower: false,
            closed_upper: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.closed_lower {
            x >= self.lower
        } else {
            x > self.lower
        };
        let below = if self.closed_upper {
            x <= self.upper
        } else {
            x < self.upper
        };
        above && below
    }

    fn is_empty(&self) -> bool {
        self.lower > self.upper
            || (self.lower == self.upper && !(self.closed_lower && self.closed_upper))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub interval: Interval,
    pub mode: ModeId,
}

/// Declarative continuous partition: a list of intervals, each carrying a mode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionSpec(pub Vec<Region>);

impl RegionSpec {
    pub fn new(regions: Vec<Region>) -> Self {
        Self(regions)
    }

    pub fn single(domain: SpaceDomain, mode: ModeId) -> Self {
        Self(vec![Region {
            interval: Interval::closed(domain.lower(), domain.upper()),
            mode,
        }])
    }

    pub fn regions(&self) -> &[Region] {
        &self.0
    }

    pub fn mode_at(&self, x: f64) -> Option<ModeId> {
        self.0
            .iter()
            .find(|r| r.interval.contains(x))
            .map(|r| r.mode)
    }

    /// Checks that the intervals are nonempty, pairwise disjoint and cover
    /// `domain` exactly. Returns every problem found.
    pub fn check_covers(&self, domain: SpaceDomain) -> Vec<String> {
        let mut problems = Vec::new();
        if self.0.is_empty() {
            problems.push("region list is empty".to_string());
            return problems;
        }
        for (k, r) in self.0.iter().enumerate() {
            if r.interval.is_empty() {
                problems.push(format!(
                    "region {k} [{}, {}] is empty",
                    r.interval.lower, r.interval.upper
                ));
            }
        }
        let mut sorted: Vec<&Region> = self.0.iter().filter(|r| !r.interval.is_empty()).collect();
        sorted.sort_by(|a, b| {
            a.interval
                .lower
                .total_cmp(&b.interval.lower)
                .then(b.interval.closed_lower.cmp(&a.interval.closed_lower))
        });
        let Some(first) = sorted.first() else {
            return problems;
        };
        if first.interval.lower > domain.lower()
            || (first.interval.lower == domain.lower() && !first.interval.closed_lower)
        {
            problems.push(format!("domain start {} is not covered", domain.lower()));
        }
        let last = sorted[sorted.len() - 1];
        if last.interval.upper < domain.upper()
            || (last.interval.upper == domain.upper() && !last.interval.closed_upper)
        {
            problems.push(format!("domain end {} is not covered", domain.upper()));
        }
        for w in sorted.windows(2) {
            let (a, b) = (w[0].interval, w[1].interval);
            if a.upper < b.lower {
                problems.push(format!("gap between {} and {}", a.upper, b.lower));
            } else if a.upper > b.lower {
                problems.push(format!(
                    "intervals ending at {} and starting at {} overlap",
                    a.upper, b.lower
                ));
            } else {
                match (a.closed_upper, b.closed_lower) {
                    (true, true) => problems.push(format!("point {} covered twice", a.upper)),
                    (false, false) => problems.push(format!("point {} not covered", a.upper)),
                    _ => {}
                }
            }
        }
        problems
    }
}

/// Audit record of how a discrete automaton was obtained from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationRecord {
    pub scheme_name: String,
    pub h: f64,
    /// Number of grid points of the discretization, boundary nodes included.
    pub m: usize,
    pub source_model: String,
}

/// Assigns to every grid point the mode of the unique region containing it.
pub fn partition_from_regions(
    regions: &RegionSpec,
    mesh: &DiscreteDomain,
) -> Result<DiscretePartition> {
    let mut modes = Vec::with_capacity(mesh.len());
    let mut problems = Vec::new();
    for (i, &x) in mesh.points().iter().enumerate() {
        let mut hits = regions.0.iter().filter(|r| r.interval.contains(x));
        match (hits.next(), hits.next()) {
            (Some(r), None) => modes.push(r.mode),
            (None, _) => problems.push(format!("grid point {i} (x = {x}) is not covered")),
            (Some(_), Some(_)) => {
                problems.push(format!("grid point {i} (x = {x}) is covered more than once"))
            }
        }
    }
    if problems.is_empty() {
        Ok(DiscretePartition(modes))
    } else {
        Err(Error::PartitionInvalid(problems.join("; ")))
    }
}

/// Groups maximal runs of equal mode into half-open cells of half-width h/2,
/// with the first and last run stretched to the domain ends.
pub fn regions_from_partition(p: &DiscretePartition, mesh: &DiscreteDomain) -> RegionSpec {
    let pts = mesh.points();
    let domain = mesh.domain();
    let mut regions = Vec::new();
    let mut start = 0;
    let n = p.len().min(pts.len());
    for i in 1..=n {
        if i < n && p.get(i) == p.get(start) {
            continue;
        }
        // shared cell faces are computed the same way on both sides
        let lower = if start == 0 {
            domain.lower()
        } else {
            0.5 * (pts[start - 1] + pts[start])
        };
        let last = i == n;
        let upper = if last {
            domain.upper()
        } else {
            0.5 * (pts[i - 1] + pts[i])
        };
        regions.push(Region {
            interval: Interval {
                lower,
                upper,
                closed_lower: true,
                closed_upper: last,
            },
            mode: p.get(start),
        });
        start = i;
    }
    RegionSpec(regions)
}
