//! Deterministic 2D simulator for robot swarms navigating virtual tubes.
//!
//! Robots follow a saturated velocity command made of line approaching,
//! inter-robot avoidance, tube keeping and a density-feedback distribution
//! regulation term driven by a Gaussian kernel density estimate.

pub mod controller;
pub mod density;
pub mod metrics;
pub mod output;
pub mod quadrature;
pub mod scenario;
pub mod sim;
pub mod tube;

pub type Vec2 = nalgebra::Vector2<f64>;

/// Counterclockwise rotation by 90°.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}
