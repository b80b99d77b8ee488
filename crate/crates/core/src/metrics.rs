//! Evaluation quantities over active robots and the `‖u4‖ ≤ ‖u123‖` audit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::VelocityCommand;
use crate::density::{density_error_l2, DensityView, DesiredDensity, GridResolution};
use crate::sim::SimulationLog;
use crate::tube::{TubeError, VirtualTube};
use crate::Vec2;

/// Slack allowed on `‖u4‖ ≤ ‖u123‖` when auditing logged commands.
pub const CONDITION23_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least {needed} active robots, found {found}")]
    TooFewRobots { needed: usize, found: usize },
    #[error("time {t} outside the logged range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error(transparent)]
    Tube(#[from] TubeError),
}

/// Per-record metrics; `None` where the quantity is undefined (too few robots).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub time: f64,
    pub min_pairwise_distance: Option<f64>,
    pub min_boundary_distance: Option<f64>,
    pub amd: Option<f64>,
    pub exited_count: usize,
    pub density_error_l2: Option<f64>,
    pub condition23_ok: bool,
    pub max_command_norm: f64,
}

fn need(positions: &[Vec2], n: usize) -> Result<(), MetricsError> {
    if positions.len() < n {
        Err(MetricsError::TooFewRobots {
            needed: n,
            found: positions.len(),
        })
    } else {
        Ok(())
    }
}

fn nearest_neighbour_distances(positions: &[Vec2]) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; positions.len()];
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            best[i] = best[i].min(d);
            best[j] = best[j].min(d);
        }
    }
    best
}

/// Average over robots of the distance to the nearest other robot.
pub fn amd(positions: &[Vec2]) -> Result<f64, MetricsError> {
    need(positions, 2)?;
    let nn = nearest_neighbour_distances(positions);
    Ok(nn.iter().sum::<f64>() / nn.len() as f64)
}

pub fn min_pairwise_distance(positions: &[Vec2]) -> Result<f64, MetricsError> {
    need(positions, 2)?;
    Ok(nearest_neighbour_distances(positions)
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Smallest distance from any robot to the lateral boundary.
pub fn min_boundary_distance(tube: &VirtualTube, positions: &[Vec2]) -> Result<f64, MetricsError> {
    need(positions, 1)?;
    let mut best = f64::INFINITY;
    for &p in positions {
        best = best.min(tube.boundary_distance(p)?.distance);
    }
    Ok(best)
}

/// Number of robots that have exited by time `t`.
pub fn throughput(log: &SimulationLog, t: f64) -> Result<usize, MetricsError> {
    let start = log.records.first().map_or(0.0, |r| r.time);
    let end = log.records.last().map_or(0.0, |r| r.time);
    if !(t >= start - 1e-9 && t <= end + 1e-9) {
        return Err(MetricsError::TimeOutOfRange { t, start, end });
    }
    Ok(log
        .exit_times
        .iter()
        .filter(|e| matches!(e, Some(te) if *te <= t))
        .count())
}

pub fn condition23_holds(u123: Vec2, u4: Vec2) -> bool {
    u4.norm() <= u123.norm() + CONDITION23_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition23Violation {
    pub time: f64,
    pub robot: usize,
    pub u4_norm: f64,
    pub u123_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Condition23Report {
    pub evaluations: usize,
    pub violations: Vec<Condition23Violation>,
}

impl Condition23Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every logged command of every active robot.
pub fn audit_condition23(log: &SimulationLog) -> Condition23Report {
    let mut report = Condition23Report::default();
    for rec in &log.records {
        for r in rec.robots.iter().filter(|r| r.active) {
            report.evaluations += 1;
            let u123 = r.u1 + r.u2 + r.u3;
            if !condition23_holds(u123, r.u4) {
                report.violations.push(Condition23Violation {
                    time: rec.time,
                    robot: r.id,
                    u4_norm: r.u4.norm(),
                    u123_norm: u123.norm(),
                });
            }
        }
    }
    report
}

/// Metrics of one snapshot of active robots.
pub(crate) fn snapshot(
    tube: &VirtualTube,
    time: f64,
    positions: &[Vec2],
    exited_count: usize,
    density: Option<(&DensityView, &DesiredDensity<'_>)>,
    grid: GridResolution,
    commands: &[VelocityCommand],
) -> MetricsRecord {
    MetricsRecord {
        time,
        min_pairwise_distance: min_pairwise_distance(positions).ok(),
        min_boundary_distance: min_boundary_distance(tube, positions).ok(),
        amd: amd(positions).ok(),
        exited_count,
        density_error_l2: density.and_then(|(view, dd)| density_error_l2(view, dd, grid).ok()),
        condition23_ok: commands.iter().all(|c| condition23_holds(c.u123(), c.u4)),
        max_command_norm: commands.iter().map(|c| c.v.norm()).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tube::{CurveBuilder, Topology, WidthProfile};

    #[test]
    fn amd_simple_configurations() {
        let two = [Vec2::new(0.0, 0.0), Vec2::new(1.3, 0.0)];
        assert_eq!(amd(&two).unwrap(), 1.3);
        assert_eq!(min_pairwise_distance(&two).unwrap(), 1.3);
        let line = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(4.0, 0.0)];
        assert_eq!(amd(&line).unwrap(), 2.0);
        let s = 3f64.sqrt();
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(1.0, s)];
        assert!((min_pairwise_distance(&tri).unwrap() - 2.0).abs() < 1e-15);
        assert!(amd(&two[..1]).is_err());
        assert!(min_pairwise_distance(&[]).is_err());
    }

    #[test]
    fn boundary_metric() {
        let curve = CurveBuilder::new(Vec2::zeros(), 0.0).line(10.0).unwrap().build(false).unwrap();
        let tube = VirtualTube::new(curve, WidthProfile::constant(1.0, 1.0).unwrap(), Topology::Open, None)
            .unwrap();
        assert!((min_boundary_distance(&tube, &[Vec2::new(5.0, 0.0)]).unwrap() - 1.0).abs() < 1e-12);
        let d = min_boundary_distance(&tube, &[Vec2::new(5.0, 0.0), Vec2::new(3.0, 0.6)]).unwrap();
        assert!((d - 0.4).abs() < 1e-12);
        assert!(min_boundary_distance(&tube, &[]).is_err());
    }

    #[test]
    fn condition23_tolerance() {
        let u = Vec2::new(1.0, 0.0);
        assert!(condition23_holds(u, Vec2::new(0.0, 1.0)));
        assert!(!condition23_holds(u, Vec2::new(0.0, 1.0 + 1e-9)));
        assert!(condition23_holds(Vec2::zeros(), Vec2::zeros()));
    }
}
