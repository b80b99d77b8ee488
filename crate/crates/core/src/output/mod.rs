//! Run artifacts: CSV tables, JSON summaries and SVG plots.

pub mod svg;
pub mod tables;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::controller::ControlMode;
use crate::metrics::{audit_condition23, throughput, MetricsRecord};
use crate::scenario::{ResolvedScenario, Scenario, TubeSpec};
use crate::sim::{FaultRecord, SimulationLog, Termination};
use crate::tube::VirtualTube;
use tables::{MetricsRow, TraceRow};

/// Snapshots rendered per run (fewer when the log is shorter).
pub const SNAPSHOT_COUNT: usize = 6;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Missing(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ViolationCounts {
    /// Logged commands with ‖u4‖ > ‖u123‖ + tol.
    pub condition23: usize,
    /// Records whose minimum pairwise distance is ≤ 2 r_s.
    pub pairwise: usize,
    /// Records whose minimum boundary distance is ≤ r_s.
    pub boundary: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub fingerprint: String,
    pub name: String,
    pub mode: ControlMode,
    pub termination: Termination,
    pub step_count: usize,
    pub records: usize,
    pub robots: usize,
    pub exited: usize,
    pub final_metrics: MetricsRecord,
    /// Over the whole run.
    pub min_pairwise_distance: Option<f64>,
    pub min_boundary_distance: Option<f64>,
    pub violations: ViolationCounts,
    pub fault: Option<FaultRecord>,
    pub scenario: ResolvedScenario,
}

fn min_of(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    it.flatten().reduce(f64::min)
}

pub fn summarize(scenario: &Scenario, log: &SimulationLog) -> RunSummary {
    let r_s = log.r_s;
    let final_metrics = log.final_record().metrics;
    RunSummary {
        fingerprint: log.fingerprint.clone(),
        name: scenario.resolved.name.clone(),
        mode: log.mode,
        termination: log.termination,
        step_count: log.step_count,
        records: log.records.len(),
        robots: log.exit_times.len(),
        exited: final_metrics.exited_count,
        final_metrics,
        min_pairwise_distance: min_of(log.metrics().map(|m| m.min_pairwise_distance)),
        min_boundary_distance: min_of(log.metrics().map(|m| m.min_boundary_distance)),
        violations: ViolationCounts {
            condition23: audit_condition23(log).violations.len(),
            pairwise: log
                .metrics()
                .filter(|m| m.min_pairwise_distance.is_some_and(|d| d <= 2.0 * r_s))
                .count(),
            boundary: log
                .metrics()
                .filter(|m| m.min_boundary_distance.is_some_and(|d| d <= r_s))
                .count(),
        },
        fault: log.fault.clone(),
        scenario: scenario.resolved.clone(),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes `trace.csv`, `metrics.csv`, `summary.json` and the plots into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, log: &SimulationLog) -> Result<RunSummary, OutputError> {
    ensure_dir(dir)?;
    let trace = tables::trace_rows(log);
    let metrics = tables::metrics_rows(log);
    tables::write_rows(&dir.join("trace.csv"), &trace)?;
    tables::write_rows(&dir.join("metrics.csv"), &metrics)?;
    let summary = summarize(scenario, log);
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    render_plots(dir, &scenario.tube, log.r_s, &trace, &metrics)?;
    Ok(summary)
}

/// Row indices of up to [`SNAPSHOT_COUNT`] evenly spaced frames.
fn snapshot_indices(frames: usize) -> Vec<usize> {
    if frames == 0 {
        return Vec::new();
    }
    let n = SNAPSHOT_COUNT.min(frames);
    let mut idx: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        (0..n)
            .map(|k| ((k * (frames - 1)) as f64 / (n - 1) as f64).round() as usize)
            .collect()
    };
    idx.dedup();
    idx
}

/// Snapshot SVGs plus distance and density-error series.
pub fn render_plots(
    dir: &Path,
    tube: &VirtualTube,
    r_s: f64,
    trace: &[TraceRow],
    metrics: &[MetricsRow],
) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(dir)?;
    let vp = svg::Viewport::fit(tube, 900.0);
    let frames = tables::frames(trace);
    let mut written = Vec::new();
    for k in snapshot_indices(frames.len()) {
        let frame = frames[k];
        let path = dir.join(format!("snapshot_t{:.2}.svg", frame[0].t));
        write_text(&path, &svg::snapshot(tube, &vp, frame, r_s))?;
        written.push(path);
    }
    if !metrics.is_empty() {
        let path = dir.join("distances.svg");
        write_text(&path, &svg::distances(metrics, r_s))?;
        written.push(path);
        let path = dir.join("density_error.svg");
        write_text(&path, &svg::density_error(metrics))?;
        written.push(path);
    }
    Ok(written)
}

/// Re-renders plots from a `trace.csv`, using the `metrics.csv` and
/// `summary.json` written next to it.
pub fn plot_trace(trace_path: &Path, out: &Path) -> Result<Vec<PathBuf>, OutputError> {
    let trace: Vec<TraceRow> = tables::read_rows(trace_path)?;
    let dir = trace_path.parent().unwrap_or(Path::new("."));
    let summary_path = dir.join("summary.json");
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let summary: serde_json::Value = serde_json::from_str(&text)?;
    let scenario = &summary["scenario"];
    let tube_spec: TubeSpec = serde_json::from_value(scenario["tube"].clone())?;
    let tube = tube_spec
        .build()
        .map_err(|e| OutputError::Missing(format!("tube in {}: {e}", summary_path.display())))?;
    let r_s = scenario["controller"]["r_s_m"]
        .as_f64()
        .ok_or_else(|| OutputError::Missing(format!("r_s_m in {}", summary_path.display())))?;
    let metrics_path = dir.join("metrics.csv");
    let metrics: Vec<MetricsRow> = if metrics_path.exists() {
        tables::read_rows(&metrics_path)?
    } else {
        Vec::new()
    };
    render_plots(out, &tube, r_s, &trace, &metrics)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub fingerprint: String,
    pub full: RunSummary,
    pub baseline: RunSummary,
    /// Robots exited by the last common record time.
    pub exited_full: usize,
    pub exited_baseline: usize,
    /// Mean AMD over the final third of the horizon.
    pub amd_final_third_full: Option<f64>,
    pub amd_final_third_baseline: Option<f64>,
}

/// Time average of AMD over `[from, to]`, skipping undefined records.
pub fn mean_amd(log: &SimulationLog, from: f64, to: f64) -> Option<f64> {
    let vals: Vec<f64> = log
        .metrics()
        .filter(|m| m.time >= from - 1e-9 && m.time <= to + 1e-9)
        .filter_map(|m| m.amd)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Serialize)]
struct CompareRow {
    t: f64,
    amd_full: Option<f64>,
    amd_baseline: Option<f64>,
    exited_full: Option<usize>,
    exited_baseline: Option<usize>,
    density_err_full: Option<f64>,
    density_err_baseline: Option<f64>,
}

/// Writes both arms into `full/` and `baseline/` plus the paired tables.
pub fn write_compare(
    dir: &Path,
    scenario: &Scenario,
    full: &SimulationLog,
    baseline: &SimulationLog,
) -> Result<CompareSummary, OutputError> {
    ensure_dir(dir)?;
    let full_summary = write_run(&dir.join("full"), scenario, full)?;
    let baseline_summary = write_run(&dir.join("baseline"), scenario, baseline)?;
    let n = full.records.len().max(baseline.records.len());
    let rows: Vec<CompareRow> = (0..n)
        .map(|k| {
            let f = full.records.get(k).map(|r| r.metrics);
            let b = baseline.records.get(k).map(|r| r.metrics);
            CompareRow {
                t: f.or(b).map(|m| m.time).unwrap_or_default(),
                amd_full: f.and_then(|m| m.amd),
                amd_baseline: b.and_then(|m| m.amd),
                exited_full: f.map(|m| m.exited_count),
                exited_baseline: b.map(|m| m.exited_count),
                density_err_full: f.and_then(|m| m.density_error_l2),
                density_err_baseline: b.and_then(|m| m.density_error_l2),
            }
        })
        .collect();
    tables::write_rows(&dir.join("compare.csv"), &rows)?;
    write_text(
        &dir.join("amd.svg"),
        &svg::amd_comparison(&tables::metrics_rows(full), &tables::metrics_rows(baseline)),
    )?;
    let t_end = full.final_record().time.min(baseline.final_record().time);
    let third = 2.0 * scenario.resolved.t_end_s / 3.0;
    let summary = CompareSummary {
        fingerprint: scenario.fingerprint.clone(),
        exited_full: throughput(full, t_end).unwrap_or(0),
        exited_baseline: throughput(baseline, t_end).unwrap_or(0),
        amd_final_third_full: mean_amd(full, third, scenario.resolved.t_end_s),
        amd_final_third_baseline: mean_amd(baseline, third, scenario.resolved.t_end_s),
        full: full_summary,
        baseline: baseline_summary,
    };
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_indices_cover_ends() {
        assert_eq!(snapshot_indices(0), Vec::<usize>::new());
        assert_eq!(snapshot_indices(1), vec![0]);
        assert_eq!(snapshot_indices(3), vec![0, 1, 2]);
        assert_eq!(snapshot_indices(3001), vec![0, 600, 1200, 1800, 2400, 3000]);
    }
}
