//! Saturated per-robot velocity command.
//!
//! `v = sat(u1 + u2 + u3 + u4, v_max)` with line approaching (u1), robot
//! avoidance (u2), tube keeping (u3) and density-feedback distribution
//! regulation (u4). u4 is rescaled pointwise so that `‖u4‖ ≤ ‖u1 + u2 + u3‖`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityError, DensityView, DesiredDensity, DEFAULT_RHO_FLOOR};
use crate::tube::{TubeError, VirtualTube};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ApproachMode {
    /// Constant-magnitude `k1 t_c` inside the tube.
    #[default]
    Modified,
    /// `sat((L' - l) η t_c, k1)` with constant η = `eta_min`.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    /// Safe navigation plus distribution regulation.
    Full,
    /// Safe navigation only, `κ_m u123`.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    #[serde(rename = "k1_mps")]
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(rename = "v_max_mps")]
    pub v_max: f64,
    #[serde(rename = "r_s_m")]
    pub r_s: f64,
    #[serde(rename = "r_a_m")]
    pub r_a: f64,
    /// Tube-keeping activation margin.
    #[serde(rename = "r_t_m")]
    pub r_t: f64,
    #[serde(rename = "eta_min_per_s")]
    pub eta_min: f64,
    #[serde(rename = "eta_max_per_s")]
    pub eta_max: f64,
    #[serde(rename = "alpha0_m2ps")]
    pub alpha0: f64,
    /// Fixed KDE bandwidth; `None` selects the rule-of-thumb bandwidth each step.
    #[serde(rename = "bandwidth_m")]
    pub bandwidth: Option<f64>,
    #[serde(rename = "rho_floor_per_m2")]
    pub rho_floor: f64,
    pub approach: ApproachMode,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            k1: 0.6,
            k2: 0.05,
            k3: 0.05,
            v_max: 1.2,
            r_s: 0.5,
            r_a: 0.7,
            r_t: 0.2,
            eta_min: 1.0,
            eta_max: 1.0,
            alpha0: 1.0,
            bandwidth: None,
            rho_floor: DEFAULT_RHO_FLOOR,
            approach: ApproachMode::Modified,
        }
    }
}

impl ControllerParams {
    /// Checks the tube-independent parameter bounds.
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.k1, self.k2, self.k3, self.v_max, self.r_s, self.r_a, self.r_t, self.eta_min,
            self.eta_max, self.alpha0, self.rho_floor,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err("parameters must be finite".into());
        }
        if !(self.r_s > 0.0) {
            return Err(format!("r_s must be positive, got {}", self.r_s));
        }
        if !(self.r_a > self.r_s) {
            return Err(format!("r_a ({}) must exceed r_s ({})", self.r_a, self.r_s));
        }
        if !(self.k1 > 0.0 && self.v_max >= self.k1) {
            return Err(format!(
                "need v_max >= k1 > 0, got k1={}, v_max={}",
                self.k1, self.v_max
            ));
        }
        if !(self.k2 > 0.0 && self.k3 > 0.0) {
            return Err("k2 and k3 must be positive".into());
        }
        if self.alpha0 < 0.0 {
            return Err(format!("alpha0 must be nonnegative, got {}", self.alpha0));
        }
        if !(self.eta_min > 0.0 && self.eta_min <= self.eta_max) {
            return Err(format!(
                "need 0 < eta_min <= eta_max, got {} and {}",
                self.eta_min, self.eta_max
            ));
        }
        if !(self.r_t > 0.0) {
            return Err(format!("r_t must be positive, got {}", self.r_t));
        }
        if !(self.rho_floor > 0.0) {
            return Err("rho_floor must be positive".into());
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("bandwidth must be positive, got {h}"));
            }
        }
        Ok(())
    }

    /// Distance at which inter-robot repulsion switches on.
    pub fn avoidance_range(&self) -> f64 {
        self.r_s + self.r_a
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum SafetyFault {
    #[error("robots {a} and {b} at distance {distance} <= {limit}")]
    Overlap {
        a: usize,
        b: usize,
        distance: f64,
        limit: f64,
    },
    #[error("robot {robot:?} at boundary distance {distance} <= {limit}")]
    BoundaryContact {
        robot: Option<usize>,
        distance: f64,
        limit: f64,
    },
    #[error("robot {robot} left the tube at ({x}, {y})")]
    Escaped { robot: usize, x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("safety violation: {0}")]
    Safety(#[from] SafetyFault),
    #[error(transparent)]
    Tube(#[from] TubeError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Active robots at one instant, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmSnapshot {
    pub ids: Vec<usize>,
    pub positions: Vec<Vec2>,
}

impl SwarmSnapshot {
    pub fn new(ids: Vec<usize>, positions: Vec<Vec2>) -> Self {
        assert_eq!(ids.len(), positions.len());
        SwarmSnapshot { ids, positions }
    }

    pub fn from_positions(positions: Vec<Vec2>) -> Self {
        SwarmSnapshot {
            ids: (0..positions.len()).collect(),
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Command for one robot with its pre-saturation components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCommand {
    pub v: Vec2,
    pub u1: Vec2,
    pub u2: Vec2,
    pub u3: Vec2,
    /// Distribution regulation after rescaling to `‖u4‖ ≤ ‖u123‖`.
    pub u4: Vec2,
    pub u4_raw: Vec2,
    pub kappa: f64,
}

impl VelocityCommand {
    pub fn u123(&self) -> Vec2 {
        self.u1 + self.u2 + self.u3
    }
}

/// Rational barrier `((outer - d)/(d - inner))²` on `(inner, outer]`, zero above.
pub fn barrier(d: f64, inner: f64, outer: f64) -> f64 {
    if d >= outer {
        0.0
    } else {
        let q = (outer - d) / (d - inner);
        q * q
    }
}

/// d/dd of [`barrier`]; negative on the active band.
pub fn barrier_derivative(d: f64, inner: f64, outer: f64) -> f64 {
    if d >= outer {
        0.0
    } else {
        -2.0 * (outer - d) * (outer - inner) / (d - inner).powi(3)
    }
}

pub fn line_approach(tube: &VirtualTube, params: &ControllerParams, p: Vec2) -> Result<Vec2, TubeError> {
    let c = tube.to_curvilinear(p)?;
    let tangent = tube.curve_frame(c.l)?.tangent;
    Ok(match params.approach {
        ApproachMode::Original if !tube.is_closed() => {
            saturate((tube.extension_length() - c.l) * params.eta_min * tangent, params.k1).0
        }
        _ => params.k1 * tangent,
    })
}

/// Repulsion on robot `i` (index into `swarm`) from neighbours within `r_s + r_a`.
pub fn robot_avoidance(
    params: &ControllerParams,
    i: usize,
    swarm: &SwarmSnapshot,
) -> Result<Vec2, SafetyFault> {
    let inner = 2.0 * params.r_s;
    let outer = params.avoidance_range();
    let pi = swarm.positions[i];
    let mut u = Vec2::zeros();
    for (j, pj) in swarm.positions.iter().enumerate() {
        if j == i {
            continue;
        }
        let rel = pi - pj;
        let d = rel.norm();
        if d > outer {
            continue;
        }
        if d <= inner {
            return Err(SafetyFault::Overlap {
                a: swarm.ids[i],
                b: swarm.ids[j],
                distance: d,
                limit: inner,
            });
        }
        u -= params.k2 * barrier_derivative(d, inner, outer) * rel / d;
    }
    Ok(u)
}

/// Push away from the nearest lateral wall once within `r_s + r_t` of it.
pub fn tube_keeping(tube: &VirtualTube, params: &ControllerParams, p: Vec2) -> Result<Vec2, ControlError> {
    let b = tube.boundary_distance(p)?;
    let inner = params.r_s;
    let outer = params.r_s + params.r_t;
    if b.distance <= inner {
        return Err(SafetyFault::BoundaryContact {
            robot: None,
            distance: b.distance,
            limit: inner,
        }
        .into());
    }
    // ∂b/∂p is the unit vector from the wall toward p.
    Ok(-params.k3 * barrier_derivative(b.distance, inner, outer) * b.direction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationDiagnostics {
    pub rho_hat: f64,
    pub grad_hat: Vec2,
    pub grad_desired: Vec2,
}

/// `-α (∇ρ̂ - ∇ρ_d) / max(ρ̂, ε_ρ)` before rescaling to `‖u4‖ ≤ ‖u123‖`.
pub fn distribution_regulation(
    view: &DensityView,
    dd: &DesiredDensity<'_>,
    params: &ControllerParams,
    p: Vec2,
) -> Result<(Vec2, RegulationDiagnostics), ControlError> {
    let (rho_hat, grad_hat) = view.estimate_and_gradient(p);
    let grad_desired = dd.gradient(p)?;
    let u = -params.alpha0 * (grad_hat - grad_desired) / rho_hat.max(view.rho_floor());
    Ok((
        u,
        RegulationDiagnostics {
            rho_hat,
            grad_hat,
            grad_desired,
        },
    ))
}

/// Scales `u4_raw` down so its norm does not exceed `‖u123‖`.
pub fn enforce_condition23(u123: Vec2, u4_raw: Vec2) -> Vec2 {
    let a = u123.norm();
    let b = u4_raw.norm();
    if a == 0.0 || b == 0.0 {
        return Vec2::zeros();
    }
    if b <= a {
        u4_raw
    } else {
        // (a / b) * u4_raw can round to a norm slightly above a
        let scaled = u4_raw * (a / b);
        if scaled.norm() <= a {
            scaled
        } else {
            scaled * (1.0 - f64::EPSILON)
        }
    }
}

/// `sat(u, v_max)` and the factor κ_m with `sat(u) = κ_m u`.
pub fn saturate(u: Vec2, v_max: f64) -> (Vec2, f64) {
    let n = u.norm();
    if n <= v_max {
        (u, 1.0)
    } else {
        let kappa = v_max / n;
        (u * kappa, kappa)
    }
}

/// Density fields shared by all robots in one step.
#[derive(Debug, Clone, Copy)]
pub struct DensityContext<'v, 'd, 't> {
    pub view: &'v DensityView,
    pub desired: &'d DesiredDensity<'t>,
}

/// Velocity command for robot `i` of `swarm`.
///
/// Baseline mode ignores `density` entirely.
pub fn compose_velocity(
    tube: &VirtualTube,
    params: &ControllerParams,
    i: usize,
    swarm: &SwarmSnapshot,
    density: Option<DensityContext<'_, '_, '_>>,
    mode: ControlMode,
) -> Result<VelocityCommand, ControlError> {
    let p = swarm.positions[i];
    let u1 = line_approach(tube, params, p)?;
    let u2 = robot_avoidance(params, i, swarm)?;
    let u3 = tube_keeping(tube, params, p).map_err(|e| match e {
        ControlError::Safety(SafetyFault::BoundaryContact {
            distance, limit, ..
        }) => ControlError::Safety(SafetyFault::BoundaryContact {
            robot: Some(swarm.ids[i]),
            distance,
            limit,
        }),
        other => other,
    })?;
    let u123 = u1 + u2 + u3;
    let (u4_raw, u4) = match (mode, density) {
        (ControlMode::Full, Some(ctx)) if params.alpha0 > 0.0 => {
            let (raw, _) = distribution_regulation(ctx.view, ctx.desired, params, p)?;
            (raw, enforce_condition23(u123, raw))
        }
        _ => (Vec2::zeros(), Vec2::zeros()),
    };
    let (v, kappa) = saturate(u123 + u4, params.v_max);
    Ok(VelocityCommand {
        v,
        u1,
        u2,
        u3,
        u4,
        u4_raw,
        kappa,
    })
}
