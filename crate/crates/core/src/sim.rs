//! Fixed-step Euler integration of `ṗ_i = v_i` with the exit rule and logging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    compose_velocity, ControlError, ControlMode, ControllerParams, DensityContext, SafetyFault,
    SwarmSnapshot, VelocityCommand,
};
use crate::density::{silverman_bandwidth, DensityError, DensityView, DesiredDensity, GridResolution, OccupiedRegion};
use crate::metrics::{self, MetricsRecord};
use crate::tube::VirtualTube;
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub active: bool,
    pub exit_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub time: f64,
    pub robots: Vec<RobotState>,
}

impl SwarmState {
    /// All robots active and at rest at t = 0, ids in input order.
    pub fn at_rest(positions: &[Vec2]) -> Self {
        SwarmState {
            time: 0.0,
            robots: positions
                .iter()
                .enumerate()
                .map(|(id, &position)| RobotState {
                    id,
                    position,
                    velocity: Vec2::zeros(),
                    active: true,
                    exit_time: None,
                })
                .collect(),
        }
    }

    pub fn snapshot(&self) -> SwarmSnapshot {
        let (ids, positions) = self
            .robots
            .iter()
            .filter(|r| r.active)
            .map(|r| (r.id, r.position))
            .unzip();
        SwarmSnapshot { ids, positions }
    }

    pub fn active_count(&self) -> usize {
        self.robots.iter().filter(|r| r.active).count()
    }

    pub fn exited_count(&self) -> usize {
        self.robots.len() - self.active_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum InitialViolation {
    Collision { a: usize, b: usize, distance: f64 },
    BoundaryContact { robot: usize, distance: f64 },
    TerminalContact { robot: usize, distance: f64 },
    Outside { robot: usize, x: f64, y: f64 },
}

/// Collision-free and strictly inside the tube, terminal sections included.
pub fn validate_initial(
    swarm: &SwarmState,
    tube: &VirtualTube,
    params: &ControllerParams,
) -> Result<(), Vec<InitialViolation>> {
    let mut out = Vec::new();
    let active: Vec<&RobotState> = swarm.robots.iter().filter(|r| r.active).collect();
    for (k, a) in active.iter().enumerate() {
        for b in &active[k + 1..] {
            let distance = (a.position - b.position).norm();
            if distance <= 2.0 * params.r_s {
                out.push(InitialViolation::Collision {
                    a: a.id,
                    b: b.id,
                    distance,
                });
            }
        }
    }
    for r in &active {
        match tube.boundary_distance(r.position) {
            Err(_) => out.push(InitialViolation::Outside {
                robot: r.id,
                x: r.position.x,
                y: r.position.y,
            }),
            Ok(b) => {
                if b.distance <= params.r_s {
                    out.push(InitialViolation::BoundaryContact {
                        robot: r.id,
                        distance: b.distance,
                    });
                }
                if let Some(distance) = tube.terminal_distance(r.position) {
                    if distance <= params.r_s {
                        out.push(InitialViolation::TerminalContact { robot: r.id, distance });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// ρ̂ and ρ_d ingredients shared by all robots in one step.
#[derive(Debug, Clone)]
pub struct DensityFields {
    pub view: DensityView,
    pub region: OccupiedRegion,
    /// Width of the smoothing ramps at the ends of the occupied region.
    pub skirt: f64,
}

impl DensityFields {
    pub fn new(tube: &VirtualTube, params: &ControllerParams, positions: &[Vec2]) -> Result<Self, DensityError> {
        if positions.is_empty() {
            return Err(DensityError::NoActiveRobots);
        }
        let h = params
            .bandwidth
            .unwrap_or_else(|| silverman_bandwidth(positions, params.r_s));
        let skirt = h.max(params.r_s);
        let view = DensityView::new(positions.to_vec(), h, params.rho_floor)?;
        let region = OccupiedRegion::from_positions(tube, positions, skirt)?;
        Ok(DensityFields { view, region, skirt })
    }

    pub fn desired<'t>(&self, tube: &'t VirtualTube) -> DesiredDensity<'t> {
        DesiredDensity::new(tube, self.region, self.skirt)
    }
}

/// Commands for every active robot of `snapshot`, in snapshot order.
pub fn evaluate_commands(
    tube: &VirtualTube,
    params: &ControllerParams,
    snapshot: &SwarmSnapshot,
    fields: Option<&DensityFields>,
    mode: ControlMode,
) -> Result<Vec<VelocityCommand>, ControlError> {
    let dd = fields.map(|f| f.desired(tube));
    let ctx = fields.zip(dd.as_ref()).map(|(f, dd)| DensityContext {
        view: &f.view,
        desired: dd,
    });
    let results: Vec<Result<VelocityCommand, ControlError>> = (0..snapshot.len())
        .into_par_iter()
        .map(|i| compose_velocity(tube, params, i, snapshot, ctx, mode))
        .collect();
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("post-step check failed: {0}")]
    PostStep(SafetyFault),
}

/// Moves active robots by `dt·v`, advances time and applies the exit rule.
fn advance(swarm: &mut SwarmState, tube: &VirtualTube, commands: &[(usize, Vec2)], dt: f64, time: f64) {
    for &(id, v) in commands {
        let r = &mut swarm.robots[id];
        r.velocity = v;
        r.position += dt * v;
    }
    swarm.time = time;
    apply_exit_rule(swarm, tube);
}

/// Deactivates robots whose arc length reached L on an open tube.
pub fn apply_exit_rule(swarm: &mut SwarmState, tube: &VirtualTube) {
    if tube.is_closed() {
        return;
    }
    let length = tube.length();
    for r in swarm.robots.iter_mut().filter(|r| r.active) {
        if tube.extended_arc_length(r.position) >= length {
            r.active = false;
            r.velocity = Vec2::zeros();
            r.exit_time = Some(swarm.time);
        }
    }
}

/// Safety and containment of the active robots after a step.
pub fn post_step_check(swarm: &SwarmState, tube: &VirtualTube, params: &ControllerParams) -> Result<(), SafetyFault> {
    let active: Vec<&RobotState> = swarm.robots.iter().filter(|r| r.active).collect();
    for (k, a) in active.iter().enumerate() {
        for b in &active[k + 1..] {
            let distance = (a.position - b.position).norm();
            if distance <= 2.0 * params.r_s {
                return Err(SafetyFault::Overlap {
                    a: a.id,
                    b: b.id,
                    distance,
                    limit: 2.0 * params.r_s,
                });
            }
        }
    }
    for r in &active {
        let b = tube.boundary_distance(r.position).map_err(|_| SafetyFault::Escaped {
            robot: r.id,
            x: r.position.x,
            y: r.position.y,
        })?;
        if b.distance <= params.r_s {
            return Err(SafetyFault::BoundaryContact {
                robot: Some(r.id),
                distance: b.distance,
                limit: params.r_s,
            });
        }
    }
    Ok(())
}

/// One synchronous Euler step from the pre-step snapshot.
pub fn step(
    swarm: &SwarmState,
    tube: &VirtualTube,
    params: &ControllerParams,
    mode: ControlMode,
    dt: f64,
) -> Result<SwarmState, StepError> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(StepError::InvalidTimeStep(dt));
    }
    let snap = swarm.snapshot();
    let mut next = swarm.clone();
    if snap.is_empty() {
        next.time += dt;
        return Ok(next);
    }
    let fields = match mode {
        ControlMode::Full => Some(DensityFields::new(tube, params, &snap.positions)?),
        ControlMode::Baseline => None,
    };
    let commands = evaluate_commands(tube, params, &snap, fields.as_ref(), mode)?;
    let moves: Vec<(usize, Vec2)> = snap.ids.iter().zip(&commands).map(|(&id, c)| (id, c.v)).collect();
    advance(&mut next, tube, &moves, dt, swarm.time + dt);
    post_step_check(&next, tube, params).map_err(StepError::PostStep)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    AllExited,
    TimeLimit,
    Fault,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::AllExited => "all-exited",
            Termination::TimeLimit => "time-limit",
            Termination::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultRecord {
    pub time: f64,
    pub step: usize,
    pub message: String,
    pub safety: Option<SafetyFault>,
}

/// Logged state of one robot; commands are zero for inactive robots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotRecord {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub u1: Vec2,
    pub u2: Vec2,
    pub u3: Vec2,
    pub u4: Vec2,
    pub kappa: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub robots: Vec<RobotRecord>,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub fingerprint: String,
    pub mode: ControlMode,
    pub r_s: f64,
    pub records: Vec<StepRecord>,
    pub step_count: usize,
    pub termination: Termination,
    pub fault: Option<FaultRecord>,
    /// Indexed by robot id.
    pub exit_times: Vec<Option<f64>>,
}

impl SimulationLog {
    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("log always holds the t = 0 record")
    }

    pub fn final_positions(&self) -> Vec<Vec2> {
        self.final_record().robots.iter().map(|r| r.position).collect()
    }

    pub fn metrics(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.records.iter().map(|r| &r.metrics)
    }
}

/// Everything a run needs besides the initial swarm.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub tube: VirtualTube,
    pub params: ControllerParams,
    pub mode: ControlMode,
    pub dt: f64,
    pub t_end: f64,
    pub grid: GridResolution,
    pub fingerprint: String,
}

impl SimConfig {
    /// Steps needed to reach `t_end`.
    pub fn step_budget(&self) -> usize {
        if self.t_end <= 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("initial state violates {count} condition(s): {list:?}", count = .0.len(), list = .0)]
    InvalidInitial(Vec<InitialViolation>),
}

fn record(
    config: &SimConfig,
    swarm: &SwarmState,
    snap: &SwarmSnapshot,
    commands: &[VelocityCommand],
    fields: Option<&DensityFields>,
) -> StepRecord {
    let mut robots: Vec<RobotRecord> = swarm
        .robots
        .iter()
        .map(|r| RobotRecord {
            id: r.id,
            position: r.position,
            velocity: Vec2::zeros(),
            u1: Vec2::zeros(),
            u2: Vec2::zeros(),
            u3: Vec2::zeros(),
            u4: Vec2::zeros(),
            kappa: 1.0,
            active: r.active,
        })
        .collect();
    for (&id, c) in snap.ids.iter().zip(commands) {
        let r = &mut robots[id];
        r.velocity = c.v;
        r.u1 = c.u1;
        r.u2 = c.u2;
        r.u3 = c.u3;
        r.u4 = c.u4;
        r.kappa = c.kappa;
    }
    let dd = fields.map(|f| f.desired(&config.tube));
    let density = fields.zip(dd.as_ref()).map(|(f, dd)| (&f.view, dd));
    let metrics = metrics::snapshot(
        &config.tube,
        swarm.time,
        &snap.positions,
        swarm.exited_count(),
        density,
        config.grid,
        commands,
    );
    StepRecord {
        time: swarm.time,
        robots,
        metrics,
    }
}

/// Runs from `initial` until `t_end`, all robots exit, or a fault.
///
/// Record `k` holds the state at `t_k = k·dt` and the commands evaluated there.
pub fn run(config: &SimConfig, initial: SwarmState) -> Result<SimulationLog, SimError> {
    config.params.validate().map_err(SimError::InvalidParams)?;
    if !(config.dt > 0.0 && config.dt.is_finite()) || !(config.t_end >= 0.0) {
        return Err(SimError::InvalidParams(format!(
            "need dt > 0 and t_end >= 0, got dt={}, t_end={}",
            config.dt, config.t_end
        )));
    }
    validate_initial(&initial, &config.tube, &config.params).map_err(SimError::InvalidInitial)?;

    let tube = &config.tube;
    let params = &config.params;
    let budget = config.step_budget();
    let mut swarm = initial;
    let mut records = Vec::with_capacity(budget + 1);
    let mut fault = None;
    let mut k = 0usize;
    let termination = loop {
        let snap = swarm.snapshot();
        if snap.is_empty() {
            records.push(record(config, &swarm, &snap, &[], None));
            break Termination::AllExited;
        }
        let evaluated = DensityFields::new(tube, params, &snap.positions)
            .map_err(ControlError::from)
            .and_then(|fields| {
                let used = matches!(config.mode, ControlMode::Full).then_some(&fields);
                evaluate_commands(tube, params, &snap, used, config.mode).map(|c| (fields, c))
            });
        let (fields, commands) = match evaluated {
            Ok(v) => v,
            Err(e) => {
                records.push(record(config, &swarm, &snap, &[], None));
                fault = Some(FaultRecord {
                    time: swarm.time,
                    step: k,
                    safety: match &e {
                        ControlError::Safety(s) => Some(s.clone()),
                        _ => None,
                    },
                    message: e.to_string(),
                });
                break Termination::Fault;
            }
        };
        records.push(record(config, &swarm, &snap, &commands, Some(&fields)));
        if k == budget {
            break Termination::TimeLimit;
        }
        let moves: Vec<(usize, Vec2)> = snap.ids.iter().zip(&commands).map(|(&id, c)| (id, c.v)).collect();
        k += 1;
        advance(&mut swarm, tube, &moves, config.dt, k as f64 * config.dt);
        if let Err(e) = post_step_check(&swarm, tube, params) {
            let snap = swarm.snapshot();
            records.push(record(config, &swarm, &snap, &[], None));
            fault = Some(FaultRecord {
                time: swarm.time,
                step: k,
                message: format!("post-step check failed: {e}"),
                safety: Some(e),
            });
            break Termination::Fault;
        }
    };
    Ok(SimulationLog {
        fingerprint: config.fingerprint.clone(),
        mode: config.mode,
        r_s: params.r_s,
        step_count: records.len() - 1,
        records,
        termination,
        fault,
        exit_times: swarm.robots.iter().map(|r| r.exit_time).collect(),
    })
}
