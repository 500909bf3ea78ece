//! Trajectory, transition and summary exports.

use std::io::{Read, Write};

use pdha_core::executor::{Execution, ExecutionClass, ReachRecord, StopReason};
use pdha_core::mesh::ModeId;
use pdha_core::{Dspdha, Error};
use serde::Serialize;

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}

/// Writes `t,x,u,mode,interval_index` rows sorted by `(t, x)`.
///
/// `sample_every` thins the samples inside each interval; interval end
/// points are always kept so transition boundaries survive.
pub fn write_trajectory<W: Write>(
    out: W,
    a: &Dspdha,
    x: &Execution,
    sample_every: usize,
) -> std::io::Result<()> {
    let stride = sample_every.max(1);
    let points = a.mesh.points();
    // (t, point, interval, sample)
    let mut rows: Vec<(f64, usize, usize, usize)> = Vec::new();
    for (k, iv) in x.intervals.iter().enumerate() {
        let last = iv.samples.len() - 1;
        for (j, s) in iv.samples.iter().enumerate() {
            if j % stride == 0 || j == last {
                rows.extend((0..points.len()).map(|i| (s.t, i, k, j)));
            }
        }
    }
    // stable: rows shared by a transition keep interval order
    rows.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "u", "mode", "interval_index"]).map_err(csv_err)?;
    for (t, i, k, j) in rows {
        let iv = &x.intervals[k];
        let u = iv.samples[j].field.values()[i];
        let mode = a.mode_name(iv.partition.get(i));
        w.write_record([fmt_num(t), fmt_num(points[i]), fmt_num(u), mode.to_string(), k.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()
}

/// Writes `tau_prime,event,indices`; indices are `;`-separated.
pub fn write_transitions<W: Write>(out: W, a: &Dspdha, x: &Execution) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_prime", "event", "indices"]).map_err(csv_err)?;
    for tr in &x.transitions {
        let indices: Vec<String> = tr.event.indices.iter().map(|i| i.to_string()).collect();
        w.write_record([fmt_num(tr.time), a.event_name(tr.event.id).to_string(), indices.join(";")])
            .map_err(csv_err)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub tau_prime: f64,
    pub event: String,
    pub indices: Vec<usize>,
}

pub fn read_transitions<R: Read>(input: R) -> std::io::Result<Vec<TransitionRow>> {
    let bad = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let tau_prime = rec[0]
            .parse::<f64>()
            .map_err(|e| bad(format!("bad time '{}': {e}", &rec[0])))?;
        let indices = if rec[2].is_empty() {
            Vec::new()
        } else {
            rec[2]
                .split(';')
                .map(|s| s.parse::<usize>().map_err(|e| bad(format!("bad index '{s}': {e}"))))
                .collect::<Result<_, _>>()?
        };
        rows.push(TransitionRow {
            tau_prime,
            event: rec[1].to_string(),
            indices,
        });
    }
    Ok(rows)
}

/// `(start, end)` of every interval in an exported trajectory, by interval index.
pub fn read_interval_bounds<R: Read>(input: R) -> std::io::Result<Vec<(f64, f64)>> {
    let bad = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
    let mut r = csv::Reader::from_reader(input);
    let mut bounds: Vec<(f64, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let t = rec[0].parse::<f64>().map_err(|e| bad(format!("bad time '{}': {e}", &rec[0])))?;
        let k = rec[4]
            .parse::<usize>()
            .map_err(|e| bad(format!("bad interval index '{}': {e}", &rec[4])))?;
        if k >= bounds.len() {
            bounds.resize(k + 1, (f64::INFINITY, f64::NEG_INFINITY));
        }
        bounds[k] = (bounds[k].0.min(t), bounds[k].1.max(t));
    }
    Ok(bounds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCount {
    pub x: f64,
    pub transitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub model: String,
    pub scheme: String,
    pub m: usize,
    pub h: f64,
    pub integrator: String,
    pub dt: f64,
    pub t_end: f64,
    pub classification: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_infinity: Option<f64>,
    pub stop_reason: String,
    pub transition_count: usize,
    pub reach_partition_count: usize,
    pub collision_count: usize,
    pub invariant_violation_count: usize,
    /// Transitions involving each grid point.
    pub transitions_per_point: Vec<PointCount>,
    /// Grid points in each mode at the end of the run.
    pub final_mode_counts: Vec<(String, usize)>,
    pub final_nonzero_cells: usize,
    pub wall_time_seconds: f64,
}

pub struct RunInfo<'a> {
    pub integrator: &'a str,
    pub dt: f64,
    pub t_end: f64,
    pub wall_time_seconds: f64,
}

pub fn summarize(a: &Dspdha, x: &Execution, reach: &ReachRecord, class: ExecutionClass, run: RunInfo) -> Summary {
    let (classification, tau_infinity) = match class {
        ExecutionClass::Finite => ("finite", None),
        ExecutionClass::Infinite => ("infinite", None),
        ExecutionClass::ZenoSuspect { tau_infinity } => ("zeno_suspect", Some(tau_infinity)),
    };
    let mut per_point = vec![0usize; a.mesh.len()];
    for tr in &x.transitions {
        for &i in &tr.event.indices {
            per_point[i] += 1;
        }
    }
    let last = x.final_state();
    let final_mode_counts = (0..a.modes.len())
        .map(|q| {
            let n = last.partition.modes().iter().filter(|m| **m == ModeId(q)).count();
            (a.modes[q].name.clone(), n)
        })
        .collect();
    Summary {
        model: a.record.source_model.clone(),
        scheme: a.record.scheme_name.clone(),
        m: a.record.m,
        h: a.record.h,
        integrator: run.integrator.to_string(),
        dt: run.dt,
        t_end: run.t_end,
        classification: classification.to_string(),
        tau_infinity,
        stop_reason: match x.stop {
            StopReason::Horizon => "horizon",
            StopReason::MaxTransitions => "max_transitions",
            StopReason::Zeno => "zeno",
        }
        .to_string(),
        transition_count: x.transitions.len(),
        reach_partition_count: reach.partitions.len(),
        collision_count: x.collisions.len(),
        invariant_violation_count: x.invariant_violations.len(),
        transitions_per_point: a
            .mesh
            .points()
            .iter()
            .zip(per_point)
            .map(|(&x, transitions)| PointCount { x, transitions })
            .collect(),
        final_mode_counts,
        final_nonzero_cells: last.field.values().iter().filter(|u| **u != 0.0).count(),
        wall_time_seconds: run.wall_time_seconds,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub x: f64,
    pub u: f64,
    pub mode: String,
}

/// Field and partition at time `t`.
///
/// Interpolates linearly between the samples of one interval and never
/// across a transition. At a transition time the state after the last
/// transition at that time is returned.
pub fn export_snapshot(a: &Dspdha, x: &Execution, t: f64) -> pdha_core::Result<Vec<SnapshotRow>> {
    let start = x.intervals[0].start;
    let end = x.end_time();
    if !(t >= start && t <= end) {
        return Err(Error::Range(format!("t = {t} is outside [{start}, {end}]")));
    }
    let iv = x
        .intervals
        .iter()
        .rev()
        .find(|iv| iv.start <= t && t <= iv.end)
        .ok_or_else(|| Error::Range(format!("no interval contains t = {t}")))?;
    let j = iv.samples.partition_point(|s| s.t <= t);
    let lo = &iv.samples[j.saturating_sub(1)];
    let values: Vec<f64> = if lo.t == t || j == iv.samples.len() {
        lo.field.values().to_vec()
    } else {
        let hi = &iv.samples[j];
        let w = (t - lo.t) / (hi.t - lo.t);
        lo.field
            .values()
            .iter()
            .zip(hi.field.values())
            .map(|(a, b)| a + w * (b - a))
            .collect()
    };
    Ok(a.mesh
        .points()
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (&x, u))| SnapshotRow {
            x,
            u,
            mode: a.mode_name(iv.partition.get(i)).to_string(),
        })
        .collect())
}
