//! Virtual tube geometry: generating curve, cross-sections, the curvilinear
//! coordinate map and boundary queries.

mod curve;
mod regularity;
mod widths;

pub use curve::{CubicPiece, CurveBuilder, Frame, GeneratingCurve, Sample, Segment};
pub use regularity::{segments_intersect, RegularityReport};
pub use widths::{WidthKnot, WidthProfile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;
use crate::Vec2;

/// Slack allowed on the coordinate bounds when deciding tube membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TubeError {
    #[error("arc length {l} outside [0, {max}]")]
    OutOfRange { l: f64, max: f64 },
    #[error("point ({x}, {y}) is outside the tube (nearest coordinate l={}, r={})", .nearest.l, .nearest.r)]
    OutsideTube { x: f64, y: f64, nearest: CurvilinearCoord },
    #[error("coordinate <{}, {}> is outside the tube bounds", .0.l, .0.r)]
    CoordOutOfBounds(CurvilinearCoord),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid widths: {0}")]
    InvalidWidths(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Open,
    /// Periodic arc length with no terminal cross-section.
    Closed,
}

/// Tube coordinates: arc length `l` and signed offset `r` along the normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvilinearCoord {
    pub l: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDistance {
    pub distance: f64,
    /// Unit vector from the nearest boundary point toward the query point.
    pub direction: Vec2,
    pub side: Side,
    pub boundary_l: f64,
}

#[derive(Debug, Clone)]
pub struct VirtualTube {
    curve: GeneratingCurve,
    widths: WidthProfile,
    topology: Topology,
    extension_length: f64,
    lower: Vec<(f64, Vec2)>,
    upper: Vec<(f64, Vec2)>,
}

impl VirtualTube {
    /// Builds a tube. `extension_length` is the extended length L' used by the
    /// original line-approaching law; it defaults to L.
    pub fn new(
        curve: GeneratingCurve,
        widths: WidthProfile,
        topology: Topology,
        extension_length: Option<f64>,
    ) -> Result<Self, TubeError> {
        if (topology == Topology::Closed) != curve.is_closed() {
            return Err(TubeError::InvalidCurve(
                "tube topology does not match curve closure".into(),
            ));
        }
        let length = curve.length();
        let extension_length = extension_length.unwrap_or(length);
        if extension_length < length {
            return Err(TubeError::InvalidCurve(format!(
                "extension length {extension_length} is shorter than the tube ({length})"
            )));
        }
        let mut tube = VirtualTube {
            curve,
            widths,
            topology,
            extension_length,
            lower: Vec::new(),
            upper: Vec::new(),
        };
        let mut ls: Vec<f64> = tube.curve.samples().iter().map(|s| s.l).collect();
        ls.extend(tube.widths.breakpoints().into_iter().filter(|&l| l > 0.0 && l < length));
        if topology == Topology::Closed {
            ls.push(length);
        }
        ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ls.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        for l in ls {
            let (pd, pu) = tube.endpoints_unchecked(l);
            tube.lower.push((l, pd));
            tube.upper.push((l, pu));
        }
        Ok(tube)
    }

    pub fn curve(&self) -> &GeneratingCurve {
        &self.curve
    }

    pub fn widths(&self) -> &WidthProfile {
        &self.widths
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn is_closed(&self) -> bool {
        self.topology == Topology::Closed
    }

    pub fn length(&self) -> f64 {
        self.curve.length()
    }

    pub fn extension_length(&self) -> f64 {
        self.extension_length
    }

    /// Lateral boundary polylines `(lower, upper)` as `(l, point)` vertices.
    pub fn boundary_polylines(&self) -> (&[(f64, Vec2)], &[(f64, Vec2)]) {
        (&self.lower, &self.upper)
    }

    fn check_l(&self, l: f64) -> Result<f64, TubeError> {
        self.curve.frame(l)?;
        Ok(if self.is_closed() {
            self.curve.wrap(l)
        } else {
            l.clamp(0.0, self.length())
        })
    }

    /// `(r_d(l), r_u(l))` with closed tubes wrapped.
    pub fn widths_at(&self, l: f64) -> (f64, f64) {
        self.widths.at(self.curve.wrap(l))
    }

    pub fn curve_frame(&self, l: f64) -> Result<Frame, TubeError> {
        self.curve.frame(l)
    }

    fn endpoints_unchecked(&self, l: f64) -> (Vec2, Vec2) {
        let f = self.curve.frame_unchecked(l);
        let (rd, ru) = self.widths_at(l);
        (f.point - rd * f.normal, f.point + ru * f.normal)
    }

    /// Cross-section endpoints `(p_d, p_u)`.
    pub fn cross_section_endpoints(&self, l: f64) -> Result<(Vec2, Vec2), TubeError> {
        let l = self.check_l(l)?;
        Ok(self.endpoints_unchecked(l))
    }

    /// Flow capacity σ(l) = (r_d + r_u) / 2.
    pub fn flow_capacity(&self, l: f64) -> Result<f64, TubeError> {
        let l = self.check_l(l)?;
        Ok(self.widths.radius(l))
    }

    /// `r_s < σ(l) ≤ 2 r_s`.
    pub fn is_narrow(&self, l: f64, r_s: f64) -> Result<bool, TubeError> {
        let sigma = self.flow_capacity(l)?;
        Ok(is_narrow_capacity(sigma, r_s))
    }

    /// Area ∫₀ᴸ (r_d + r_u) dl, measured along the curve.
    pub fn area(&self) -> f64 {
        self.area_between(0.0, self.length())
    }

    pub fn area_between(&self, a: f64, b: f64) -> f64 {
        quadrature::piecewise(
            |l| {
                let (d, u) = self.widths.at(l);
                d + u
            },
            a,
            b,
            &self.widths.breakpoints(),
            1,
        )
    }

    /// Arc-length intervals where the tube is narrow for safety radius `r_s`,
    /// resolved on a grid of `resolution` samples.
    pub fn narrow_intervals(&self, r_s: f64, resolution: usize) -> Vec<(f64, f64)> {
        let n = resolution.max(2);
        let length = self.length();
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut open: Option<f64> = None;
        for k in 0..=n {
            let l = length * k as f64 / n as f64;
            let narrow = is_narrow_capacity(self.widths.radius(l), r_s);
            match (narrow, open) {
                (true, None) => open = Some(l),
                (false, Some(start)) => {
                    out.push((start, length * (k - 1) as f64 / n as f64));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            out.push((start, length));
        }
        out
    }

    /// Curvilinear coordinates of `p` (the inverse of [`Self::to_cartesian`]).
    pub fn to_curvilinear(&self, p: Vec2) -> Result<CurvilinearCoord, TubeError> {
        let (l, r) = self.curve.project(p);
        let coord = CurvilinearCoord { l, r };
        let outside = || TubeError::OutsideTube {
            x: p.x,
            y: p.y,
            nearest: coord,
        };
        let f = self.curve.frame_unchecked(l);
        let residual = (p - f.point).dot(&f.tangent);
        if residual.abs() > 1e-7 {
            return Err(outside());
        }
        let l = if self.is_closed() {
            l
        } else if (-MEMBERSHIP_TOL..=self.length() + MEMBERSHIP_TOL).contains(&l) {
            l.clamp(0.0, self.length())
        } else {
            return Err(outside());
        };
        let (rd, ru) = self.widths_at(l);
        if r < -rd - MEMBERSHIP_TOL || r > ru + MEMBERSHIP_TOL {
            return Err(outside());
        }
        Ok(CurvilinearCoord { l, r })
    }

    /// Arc length of the foot of the normal through `p` on the curve extended
    /// beyond its ends; meaningful for points that left an open tube.
    pub fn extended_arc_length(&self, p: Vec2) -> f64 {
        self.curve.project(p).0
    }

    pub fn to_cartesian(&self, c: CurvilinearCoord) -> Result<Vec2, TubeError> {
        let l = self
            .check_l(c.l)
            .map_err(|_| TubeError::CoordOutOfBounds(c))?;
        let (rd, ru) = self.widths_at(l);
        if c.r < -rd - MEMBERSHIP_TOL || c.r > ru + MEMBERSHIP_TOL {
            return Err(TubeError::CoordOutOfBounds(c));
        }
        let f = self.curve.frame_unchecked(l);
        Ok(f.point + c.r * f.normal)
    }

    fn boundary_point(&self, side: Side, l: f64) -> Vec2 {
        let f = self.curve.frame_unchecked(l);
        let (rd, ru) = self.widths_at(l);
        match side {
            Side::Lower => f.point - rd * f.normal,
            Side::Upper => f.point + ru * f.normal,
        }
    }

    /// Nearest point of one lateral boundary: `(l, distance, foot)`.
    fn nearest_on_side(&self, side: Side, p: Vec2) -> (f64, f64, Vec2) {
        let poly = match side {
            Side::Lower => &self.lower,
            Side::Upper => &self.upper,
        };
        let mut best = (f64::INFINITY, 0usize);
        for (k, w) in poly.windows(2).enumerate() {
            let d = point_segment_distance(p, w[0].1, w[1].1);
            if d < best.0 {
                best = (d, k);
            }
        }
        let k = best.1;
        let pad = self.curve.sample_spacing();
        let (mut lo, mut hi) = (poly[k].0 - pad, poly[k + 1].0 + pad);
        if !self.is_closed() {
            lo = lo.max(0.0);
            hi = hi.min(self.length());
        }
        let (l_star, _) = golden_section_min(|l| (self.boundary_point(side, l) - p).norm(), lo, hi, 80);
        // The distance is flat at its minimum, so finish on a short chord around l*.
        let delta = 1e-5;
        let (mut a_l, mut b_l) = (l_star - delta, l_star + delta);
        if !self.is_closed() {
            a_l = a_l.max(0.0);
            b_l = b_l.min(self.length());
        }
        let (a, b) = (self.boundary_point(side, a_l), self.boundary_point(side, b_l));
        let t = segment_parameter(p, a, b);
        let foot = a + t * (b - a);
        let d = (p - foot).norm();
        if d <= best.0 {
            (self.curve.wrap(a_l + t * (b_l - a_l)), d, foot)
        } else {
            let (a, b) = (poly[k], poly[k + 1]);
            let t = segment_parameter(p, a.1, b.1);
            (a.0 + t * (b.0 - a.0), best.0, a.1 + t * (b.1 - a.1))
        }
    }

    /// Distance from `p` to the lateral boundary (terminal cross-sections excluded).
    pub fn boundary_distance(&self, p: Vec2) -> Result<BoundaryDistance, TubeError> {
        self.to_curvilinear(p)?;
        Ok(self.boundary_distance_unchecked(p))
    }

    /// As [`Self::boundary_distance`] without the membership test.
    pub fn boundary_distance_unchecked(&self, p: Vec2) -> BoundaryDistance {
        let lower = self.nearest_on_side(Side::Lower, p);
        let upper = self.nearest_on_side(Side::Upper, p);
        let (side, (l, distance, foot)) = if upper.1 < lower.1 {
            (Side::Upper, upper)
        } else {
            (Side::Lower, lower)
        };
        let direction = if distance > 0.0 {
            (p - foot) / distance
        } else {
            let n = self.curve.frame_unchecked(l).normal;
            match side {
                Side::Lower => n,
                Side::Upper => -n,
            }
        };
        BoundaryDistance {
            distance,
            direction,
            side,
            boundary_l: l,
        }
    }

    /// Distance from `p` to the nearer terminal cross-section of an open tube.
    pub fn terminal_distance(&self, p: Vec2) -> Option<f64> {
        if self.is_closed() {
            return None;
        }
        let (a0, b0) = self.endpoints_unchecked(0.0);
        let (a1, b1) = self.endpoints_unchecked(self.length());
        Some(point_segment_distance(p, a0, b0).min(point_segment_distance(p, a1, b1)))
    }

    /// Regularity check with the default section spacing `0.02 L`.
    pub fn check_regularity(&self) -> RegularityReport {
        self.check_regularity_with(0.02 * self.length())
    }

    pub fn check_regularity_with(&self, spacing: f64) -> RegularityReport {
        regularity::check(self, spacing)
    }
}

pub fn is_narrow_capacity(sigma: f64, r_s: f64) -> bool {
    r_s < sigma && sigma <= 2.0 * r_s
}

fn segment_parameter(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let t = segment_parameter(p, a, b);
    (p - (a + t * (b - a))).norm()
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let candidates = [(lo, f(lo)), (x1, f1), (x2, f2), (hi, f(hi))];
    candidates
        .into_iter()
        .fold((lo, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn straight(length: f64, rd: f64, ru: f64) -> VirtualTube {
        let curve = CurveBuilder::new(Vec2::zeros(), 0.0)
            .line(length)
            .unwrap()
            .build(false)
            .unwrap();
        VirtualTube::new(curve, WidthProfile::constant(rd, ru).unwrap(), Topology::Open, None).unwrap()
    }

    /// γ(l) = (5cos(l/5), 5sin(l/5)) for l ∈ [0, 5π/2]; normal points inward.
    fn arc_tube() -> VirtualTube {
        let curve = CurveBuilder::new(Vec2::new(5.0, 0.0), PI / 2.0)
            .arc(5.0, PI / 2.0)
            .unwrap()
            .build(false)
            .unwrap();
        VirtualTube::new(curve, WidthProfile::constant(1.0, 1.0).unwrap(), Topology::Open, None).unwrap()
    }

    #[test]
    fn endpoints_on_straight_tube() {
        let t = straight(10.0, 1.0, 1.0);
        let (pd, pu) = t.cross_section_endpoints(3.0).unwrap();
        assert_eq!(pd, Vec2::new(3.0, -1.0));
        assert_eq!(pu, Vec2::new(3.0, 1.0));
        let t = straight(10.0, 0.5, 2.0);
        let (pd, pu) = t.cross_section_endpoints(0.0).unwrap();
        assert_eq!(pd, Vec2::new(0.0, -0.5));
        assert_eq!(pu, Vec2::new(0.0, 2.0));
        assert!(t.cross_section_endpoints(11.0).is_err());
    }

    #[test]
    fn endpoint_distance_equals_width_on_arc() {
        let t = arc_tube();
        for k in 0..100 {
            let l = t.length() * k as f64 / 99.0;
            let (_, pu) = t.cross_section_endpoints(l).unwrap();
            let g = t.curve_frame(l).unwrap().point;
            assert!(((pu - g).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_coordinates() {
        let t = straight(10.0, 1.0, 1.0);
        let c = t.to_curvilinear(Vec2::new(3.0, 0.4)).unwrap();
        assert!((c.l - 3.0).abs() < 1e-12 && (c.r - 0.4).abs() < 1e-12);
        let c = t.to_curvilinear(Vec2::new(3.0, -0.4)).unwrap();
        assert!((c.l - 3.0).abs() < 1e-12 && (c.r + 0.4).abs() < 1e-12);
        let p = t.to_cartesian(CurvilinearCoord { l: 3.0, r: 0.4 }).unwrap();
        assert!((p - Vec2::new(3.0, 0.4)).norm() < 1e-15);
        assert!(t.to_cartesian(CurvilinearCoord { l: 3.0, r: 1.5 }).is_err());
        assert!(t.to_cartesian(CurvilinearCoord { l: -0.5, r: 0.0 }).is_err());
    }

    #[test]
    fn outside_points_are_rejected_with_best_effort_coordinate() {
        let t = straight(10.0, 1.0, 1.0);
        match t.to_curvilinear(Vec2::new(4.0, 1.3)) {
            Err(TubeError::OutsideTube { nearest, .. }) => {
                assert!((nearest.l - 4.0).abs() < 1e-12);
                assert!((nearest.r - 1.3).abs() < 1e-12);
            }
            other => panic!("expected outside error, got {other:?}"),
        }
        assert!(t.to_curvilinear(Vec2::new(-0.5, 0.0)).is_err());
        assert!(t.to_curvilinear(Vec2::new(10.5, 0.0)).is_err());
        assert!((t.extended_arc_length(Vec2::new(10.5, 0.3)) - 10.5).abs() < 1e-12);
    }

    #[test]
    fn arc_projection_matches_polar_coordinates() {
        let t = arc_tube();
        let theta: f64 = 0.7;
        let p = 5.5 * Vec2::new(theta.cos(), theta.sin());
        let c = t.to_curvilinear(p).unwrap();
        assert!((c.l - 5.0 * theta).abs() < 1e-10);
        assert!((c.r + 0.5).abs() < 1e-10);
    }

    #[test]
    fn area_and_capacity() {
        let t = straight(10.0, 1.0, 1.0);
        assert!((t.area() - 20.0).abs() < 1e-12);
        let curve = CurveBuilder::new(Vec2::zeros(), 0.0).line(10.0).unwrap().build(false).unwrap();
        let w = WidthProfile::new(vec![
            WidthKnot { l: 0.0, r_d: 1.0, r_u: 1.0 },
            WidthKnot { l: 10.0, r_d: 0.6, r_u: 0.6 },
        ])
        .unwrap();
        let taper = VirtualTube::new(curve, w, Topology::Open, None).unwrap();
        assert!((taper.area() - 16.0).abs() < 1e-12);
        let arc = arc_tube();
        assert!((arc.area() - 2.0 * arc.length()).abs() < 1e-12);
        let asym = straight(10.0, 0.5, 1.0);
        assert!((asym.flow_capacity(2.0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn narrowness() {
        assert!(straight(10.0, 0.5, 1.0).is_narrow(1.0, 0.5).unwrap());
        assert!(!straight(10.0, 1.2, 1.2).is_narrow(1.0, 0.5).unwrap());
        assert!(!straight(10.0, 0.4, 0.4).is_narrow(1.0, 0.5).unwrap());
        assert!(is_narrow_capacity(1.0, 0.5));
    }

    #[test]
    fn narrow_intervals_on_pinched_tube() {
        let curve = CurveBuilder::new(Vec2::zeros(), 0.0).line(10.0).unwrap().build(false).unwrap();
        let w = WidthProfile::new(vec![
            WidthKnot { l: 0.0, r_d: 2.0, r_u: 2.0 },
            WidthKnot { l: 4.0, r_d: 0.75, r_u: 0.75 },
            WidthKnot { l: 6.0, r_d: 0.75, r_u: 0.75 },
            WidthKnot { l: 10.0, r_d: 2.0, r_u: 2.0 },
        ])
        .unwrap();
        let t = VirtualTube::new(curve, w, Topology::Open, None).unwrap();
        let iv = t.narrow_intervals(0.5, 10_000);
        assert_eq!(iv.len(), 1);
        // σ reaches 1.0 at l = 3.2 and l = 6.8
        assert!((iv[0].0 - 3.2).abs() < 2e-3 && (iv[0].1 - 6.8).abs() < 2e-3);
    }

    #[test]
    fn boundary_distance_straight() {
        let t = straight(10.0, 1.0, 1.0);
        let b = t.boundary_distance(Vec2::new(3.0, 0.0)).unwrap();
        assert!((b.distance - 1.0).abs() < 1e-12);
        let b = t.boundary_distance(Vec2::new(3.0, 0.6)).unwrap();
        assert!((b.distance - 0.4).abs() < 1e-12);
        assert!((b.direction - Vec2::new(0.0, -1.0)).norm() < 1e-12);
        assert_eq!(b.side, Side::Upper);
        assert!(t.boundary_distance(Vec2::new(3.0, 1.6)).is_err());
    }

    #[test]
    fn boundary_distance_arc_matches_dense_sampling() {
        let t = arc_tube();
        let probes = [
            Vec2::new(5.3, 1.0),
            Vec2::new(2.5, 3.9),
            Vec2::new(0.4, 4.3),
            Vec2::new(4.0, 2.8),
        ];
        for p in probes {
            let got = t.boundary_distance(p).unwrap().distance;
            let n = 200_000;
            let mut best = f64::INFINITY;
            for k in 0..=n {
                let l = t.length() * k as f64 / n as f64;
                let (pd, pu) = t.cross_section_endpoints(l).unwrap();
                best = best.min((pd - p).norm()).min((pu - p).norm());
            }
            assert!((got - best).abs() < 1e-4, "{got} vs {best}");
        }
    }

    #[test]
    fn terminal_distance_open_only() {
        let t = straight(10.0, 1.0, 1.0);
        assert!((t.terminal_distance(Vec2::new(0.7, 0.0)).unwrap() - 0.7).abs() < 1e-12);
    }
}
