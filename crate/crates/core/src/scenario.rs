//! JSON scenario files: tube, initial placement, gains and run settings.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::{ApproachMode, ControlMode, ControllerParams};
use crate::density::{GridResolution, DEFAULT_RHO_FLOOR};
use crate::sim::{validate_initial, SimConfig, SwarmState};
use crate::tube::{CurveBuilder, Topology, TubeError, VirtualTube, WidthKnot, WidthProfile};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Regularity,
    InitialCollision,
    InfeasibleNarrowSection,
    ParamBound,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Regularity => "regularity",
            Rule::InitialCollision => "initial-collision",
            Rule::InfeasibleNarrowSection => "infeasible-narrow-section",
            Rule::ParamBound => "param-bound",
        })
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{rule} violation: {message}")]
    Validation { rule: Rule, message: String },
}

impl ScenarioError {
    fn rule(rule: Rule, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            rule,
            message: message.into(),
        }
    }

    pub fn violated_rule(&self) -> Option<Rule> {
        match self {
            ScenarioError::Validation { rule, .. } => Some(*rule),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SegmentSpec {
    Line { length_m: f64 },
    /// Positive angles turn left.
    Arc { radius_m: f64, angle_rad: f64 },
    /// Catmull-Rom through the listed points, leaving along the current heading.
    Spline { points_m: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    pub start_m: [f64; 2],
    pub heading_rad: f64,
    pub segments: Vec<SegmentSpec>,
    /// `[l, r_d, r_u]` knots, linearly interpolated.
    pub widths_m: Vec<[f64; 3]>,
    #[serde(default = "open")]
    pub topology: Topology,
    #[serde(default)]
    pub extension_length_m: Option<f64>,
}

fn open() -> Topology {
    Topology::Open
}

impl TubeSpec {
    pub fn build(&self) -> Result<VirtualTube, TubeError> {
        let mut b = CurveBuilder::new(Vec2::new(self.start_m[0], self.start_m[1]), self.heading_rad);
        for seg in &self.segments {
            b = match seg {
                SegmentSpec::Line { length_m } => b.line(*length_m)?,
                SegmentSpec::Arc { radius_m, angle_rad } => b.arc(*radius_m, *angle_rad)?,
                SegmentSpec::Spline { points_m } => {
                    let pts: Vec<Vec2> = points_m.iter().map(|p| Vec2::new(p[0], p[1])).collect();
                    b.spline(&pts)?
                }
            };
        }
        let curve = b.build(self.topology == Topology::Closed)?;
        let widths = WidthProfile::new(
            self.widths_m
                .iter()
                .map(|k| WidthKnot {
                    l: k[0],
                    r_d: k[1],
                    r_u: k[2],
                })
                .collect(),
        )?;
        VirtualTube::new(curve, widths, self.topology, self.extension_length_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Placement {
    /// `rows × cols` block centred on `origin_m`; rows run across `heading_rad`.
    Grid {
        rows: usize,
        cols: usize,
        spacing_m: f64,
        origin_m: [f64; 2],
        #[serde(default)]
        heading_rad: f64,
        #[serde(default)]
        jitter_m: f64,
    },
    Explicit { positions_m: Vec<[f64; 2]> },
}

impl Placement {
    /// Robot positions; grid jitter is uniform in `[-j, j]²` from a seeded stream.
    pub fn positions(&self, seed: u64) -> Vec<Vec2> {
        match self {
            Placement::Explicit { positions_m } => positions_m.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            Placement::Grid {
                rows,
                cols,
                spacing_m,
                origin_m,
                heading_rad,
                jitter_m,
            } => {
                let along = Vec2::new(heading_rad.cos(), heading_rad.sin());
                let across = crate::perp(along);
                let origin = Vec2::new(origin_m[0], origin_m[1]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let jitter = (*jitter_m > 0.0).then(|| Uniform::new_inclusive(-jitter_m, *jitter_m));
                let mut out = Vec::with_capacity(rows * cols);
                for i in 0..*rows {
                    for j in 0..*cols {
                        let a = (j as f64 - 0.5 * (*cols as f64 - 1.0)) * spacing_m;
                        let c = (0.5 * (*rows as f64 - 1.0) - i as f64) * spacing_m;
                        let mut p = origin + a * along + c * across;
                        if let Some(u) = &jitter {
                            p += Vec2::new(u.sample(&mut rng), u.sample(&mut rng));
                        }
                        out.push(p);
                    }
                }
                out
            }
        }
    }
}

/// Controller block as written in a file; omitted entries take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub k1_mps: f64,
    pub k2: f64,
    pub k3: f64,
    pub v_max_mps: f64,
    pub r_s_m: f64,
    pub r_a_m: f64,
    #[serde(default)]
    pub r_t_m: Option<f64>,
    #[serde(default = "one")]
    pub eta_min_per_s: f64,
    #[serde(default = "one")]
    pub eta_max_per_s: f64,
    pub alpha0_m2ps: f64,
    #[serde(default)]
    pub bandwidth_m: Option<f64>,
    #[serde(default = "rho_floor")]
    pub rho_floor_per_m2: f64,
    #[serde(default)]
    pub approach_mode: ApproachMode,
}

fn one() -> f64 {
    1.0
}

fn rho_floor() -> f64 {
    DEFAULT_RHO_FLOOR
}

impl ControllerSpec {
    pub fn resolve(&self) -> ControllerParams {
        ControllerParams {
            k1: self.k1_mps,
            k2: self.k2,
            k3: self.k3,
            v_max: self.v_max_mps,
            r_s: self.r_s_m,
            r_a: self.r_a_m,
            r_t: self.r_t_m.unwrap_or(self.r_a_m - self.r_s_m),
            eta_min: self.eta_min_per_s,
            eta_max: self.eta_max_per_s,
            alpha0: self.alpha0_m2ps,
            bandwidth: self.bandwidth_m,
            rho_floor: self.rho_floor_per_m2,
            approach: self.approach_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Full,
    Baseline,
    Compare,
}

impl RunMode {
    /// Controller used by a single run; compare scenarios simulate the full arm.
    pub fn control_mode(self) -> ControlMode {
        match self {
            RunMode::Baseline => ControlMode::Baseline,
            RunMode::Full | RunMode::Compare => ControlMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub tube: TubeSpec,
    pub placement: Placement,
    pub controller: ControllerSpec,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub t_end_s: f64,
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    #[serde(default)]
    pub density_grid: GridResolution,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_dt() -> f64 {
    0.01
}

fn default_mode() -> RunMode {
    RunMode::Full
}

/// Scenario with every default filled in; this is what gets fingerprinted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedScenario {
    pub name: String,
    pub tube: TubeSpec,
    pub placement: Placement,
    pub controller: ControllerParams,
    pub dt_s: f64,
    pub t_end_s: f64,
    pub mode: RunMode,
    pub density_grid: GridResolution,
    pub output_dir: Option<String>,
    pub seed: u64,
    pub initial_positions_m: Vec<[f64; 2]>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub resolved: ResolvedScenario,
    pub tube: VirtualTube,
    pub initial: Vec<Vec2>,
    pub fingerprint: String,
}

/// Run-time replacements for scenario fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt_s: Option<f64>,
    pub t_end_s: Option<f64>,
    pub mode: Option<RunMode>,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    load_scenario_with(path, Overrides::default())
}

pub fn load_scenario_with(path: impl AsRef<Path>, overrides: Overrides) -> Result<Scenario, ScenarioError> {
    let file = parse_scenario(&read(path.as_ref())?)?;
    Scenario::from_file(file, overrides)
}

/// Parses and builds only the tube of a scenario file.
pub fn load_tube(path: impl AsRef<Path>) -> Result<(ScenarioFile, VirtualTube), ScenarioError> {
    let file = parse_scenario(&read(path.as_ref())?)?;
    let tube = file
        .tube
        .build()
        .map_err(|e| ScenarioError::rule(Rule::ParamBound, e.to_string()))?;
    Ok((file, tube))
}

impl Scenario {
    pub fn from_file(mut file: ScenarioFile, overrides: Overrides) -> Result<Self, ScenarioError> {
        if let Some(dt) = overrides.dt_s {
            file.dt_s = dt;
        }
        if let Some(t) = overrides.t_end_s {
            file.t_end_s = t;
        }
        if let Some(m) = overrides.mode {
            file.mode = m;
        }
        let params = file.controller.resolve();
        params
            .validate()
            .map_err(|m| ScenarioError::rule(Rule::ParamBound, m))?;
        if !(file.dt_s > 0.0 && file.dt_s.is_finite()) {
            return Err(ScenarioError::rule(Rule::ParamBound, format!("dt_s must be positive, got {}", file.dt_s)));
        }
        if !(file.t_end_s >= 0.0 && file.t_end_s.is_finite()) {
            return Err(ScenarioError::rule(
                Rule::ParamBound,
                format!("t_end_s must be nonnegative, got {}", file.t_end_s),
            ));
        }
        if file.density_grid.l_cells == 0 || file.density_grid.r_cells == 0 {
            return Err(ScenarioError::rule(Rule::ParamBound, "density grid needs at least one cell"));
        }
        let tube = file
            .tube
            .build()
            .map_err(|e| ScenarioError::rule(Rule::ParamBound, e.to_string()))?;

        let report = tube.check_regularity();
        if !report.is_regular() {
            let (a, b) = report.intersecting[0];
            return Err(ScenarioError::rule(
                Rule::Regularity,
                format!(
                    "{} intersecting cross-section pair(s), first at l={a:.4} and l={b:.4}",
                    report.intersecting.len()
                ),
            ));
        }
        let length = tube.length();
        let min_radius = tube.widths().min_radius(length);
        if min_radius <= params.r_s {
            return Err(ScenarioError::rule(
                Rule::InfeasibleNarrowSection,
                format!("flow capacity {min_radius} does not exceed r_s = {}", params.r_s),
            ));
        }
        let min_half = tube.widths().min_half_width(length);
        if params.r_s + params.r_t >= min_half {
            return Err(ScenarioError::rule(
                Rule::ParamBound,
                format!(
                    "r_s + r_t = {} must be below the minimum half-width {min_half}",
                    params.r_s + params.r_t
                ),
            ));
        }
        if params.approach == ApproachMode::Original
            && !tube.is_closed()
            && tube.extension_length() < length + params.k1 / params.eta_min
        {
            return Err(ScenarioError::rule(
                Rule::ParamBound,
                format!(
                    "extension length {} must be at least L + k1/eta_min = {}",
                    tube.extension_length(),
                    length + params.k1 / params.eta_min
                ),
            ));
        }

        let initial = file.placement.positions(file.seed);
        if initial.is_empty() {
            return Err(ScenarioError::rule(Rule::ParamBound, "placement yields no robots"));
        }
        if let Err(v) = validate_initial(&SwarmState::at_rest(&initial), &tube, &params) {
            return Err(ScenarioError::rule(
                Rule::InitialCollision,
                format!("{} violation(s), first: {:?}", v.len(), v[0]),
            ));
        }

        let resolved = ResolvedScenario {
            name: file.name,
            tube: file.tube,
            placement: file.placement,
            controller: params,
            dt_s: file.dt_s,
            t_end_s: file.t_end_s,
            mode: file.mode,
            density_grid: file.density_grid,
            output_dir: file.output_dir,
            seed: file.seed,
            initial_positions_m: initial.iter().map(|p| [p.x, p.y]).collect(),
        };
        let fingerprint = fingerprint(&resolved);
        Ok(Scenario {
            resolved,
            tube,
            initial,
            fingerprint,
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.resolved.controller
    }

    pub fn sim_config(&self, mode: ControlMode) -> SimConfig {
        SimConfig {
            tube: self.tube.clone(),
            params: self.resolved.controller.clone(),
            mode,
            dt: self.resolved.dt_s,
            t_end: self.resolved.t_end_s,
            grid: self.resolved.density_grid,
            fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn initial_state(&self) -> SwarmState {
        SwarmState::at_rest(&self.initial)
    }
}

/// SHA-256 of the resolved scenario's JSON form, hex encoded.
pub fn fingerprint(resolved: &ResolvedScenario) -> String {
    let bytes = serde_json::to_vec(resolved).expect("scenario serializes");
    hex::encode(Sha256::digest(&bytes))
}
