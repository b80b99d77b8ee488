use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::SimulationLog;

pub const TRACE_COLUMNS: [&str; 16] = [
    "t", "robot_id", "x", "y", "vx", "vy", "u1x", "u1y", "u2x", "u2y", "u3x", "u3y", "u4x", "u4y", "kappa_m",
    "active",
];

pub const METRICS_COLUMNS: [&str; 7] = [
    "t",
    "min_pair_dist",
    "min_bound_dist",
    "amd",
    "exited",
    "density_err_l2",
    "cond23_ok",
];

/// One robot at one record; field order matches [`TRACE_COLUMNS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub robot_id: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub u1x: f64,
    pub u1y: f64,
    pub u2x: f64,
    pub u2y: f64,
    pub u3x: f64,
    pub u3y: f64,
    pub u4x: f64,
    pub u4y: f64,
    pub kappa_m: f64,
    pub active: u8,
}

/// Undefined quantities are written as empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    pub min_pair_dist: Option<f64>,
    pub min_bound_dist: Option<f64>,
    pub amd: Option<f64>,
    pub exited: usize,
    pub density_err_l2: Option<f64>,
    pub cond23_ok: u8,
}

pub fn trace_rows(log: &SimulationLog) -> Vec<TraceRow> {
    log.records
        .iter()
        .flat_map(|rec| {
            rec.robots.iter().map(move |r| TraceRow {
                t: rec.time,
                robot_id: r.id,
                x: r.position.x,
                y: r.position.y,
                vx: r.velocity.x,
                vy: r.velocity.y,
                u1x: r.u1.x,
                u1y: r.u1.y,
                u2x: r.u2.x,
                u2y: r.u2.y,
                u3x: r.u3.x,
                u3y: r.u3.y,
                u4x: r.u4.x,
                u4y: r.u4.y,
                kappa_m: r.kappa,
                active: r.active as u8,
            })
        })
        .collect()
}

pub fn metrics_rows(log: &SimulationLog) -> Vec<MetricsRow> {
    log.metrics()
        .map(|m| MetricsRow {
            t: m.time,
            min_pair_dist: m.min_pairwise_distance,
            min_bound_dist: m.min_boundary_distance,
            amd: m.amd,
            exited: m.exited_count,
            density_err_l2: m.density_error_l2,
            cond23_ok: m.condition23_ok as u8,
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Trace rows split into consecutive groups sharing one time stamp.
pub fn frames(rows: &[TraceRow]) -> Vec<&[TraceRow]> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=rows.len() {
        if k == rows.len() || rows[k].t != rows[start].t {
            out.push(&rows[start..k]);
            start = k;
        }
    }
    out
}
