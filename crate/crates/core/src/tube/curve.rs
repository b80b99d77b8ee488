//! Arc-length parameterized generating curves built from lines, circular arcs
//! and cubic Hermite (Catmull-Rom) pieces.

use crate::quadrature::gauss_legendre;
use crate::{perp, Vec2};

use super::TubeError;

/// Joint tangent tolerance in radians.
pub const JOINT_ANGLE_TOL: f64 = 1e-6;

const SPLINE_TABLE_INTERVALS: usize = 32;
const SPLINE_NEWTON_ITERS: usize = 30;

/// Point, unit tangent, counterclockwise unit normal and signed curvature at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub point: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
}

impl Frame {
    fn new(point: Vec2, tangent: Vec2, curvature: f64) -> Self {
        Frame {
            point,
            tangent,
            normal: perp(tangent),
            curvature,
        }
    }
}

/// Dense arc-length sample of the curve, used to seed projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub l: f64,
    pub point: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
}

/// Cubic `a + b u + c u^2 + d u^3` on `u ∈ [0, 1]` with a cumulative arc-length table.
#[derive(Debug, Clone)]
pub struct CubicPiece {
    coeffs: [Vec2; 4],
    table_u: Vec<f64>,
    table_s: Vec<f64>,
}

impl CubicPiece {
    /// Hermite cubic from endpoints and endpoint derivatives.
    pub fn hermite(p0: Vec2, p1: Vec2, m0: Vec2, m1: Vec2) -> Self {
        let a = p0;
        let b = m0;
        let c = 3.0 * (p1 - p0) - 2.0 * m0 - m1;
        let d = 2.0 * (p0 - p1) + m0 + m1;
        let mut piece = CubicPiece {
            coeffs: [a, b, c, d],
            table_u: Vec::with_capacity(SPLINE_TABLE_INTERVALS + 1),
            table_s: Vec::with_capacity(SPLINE_TABLE_INTERVALS + 1),
        };
        let mut s = 0.0;
        piece.table_u.push(0.0);
        piece.table_s.push(0.0);
        for k in 0..SPLINE_TABLE_INTERVALS {
            let u0 = k as f64 / SPLINE_TABLE_INTERVALS as f64;
            let u1 = (k + 1) as f64 / SPLINE_TABLE_INTERVALS as f64;
            s += gauss_legendre(|u| piece.speed(u), u0, u1);
            piece.table_u.push(u1);
            piece.table_s.push(s);
        }
        piece
    }

    fn position(&self, u: f64) -> Vec2 {
        let [a, b, c, d] = self.coeffs;
        a + u * (b + u * (c + u * d))
    }

    fn derivative(&self, u: f64) -> Vec2 {
        let [_, b, c, d] = self.coeffs;
        b + u * (2.0 * c + u * 3.0 * d)
    }

    fn second_derivative(&self, u: f64) -> Vec2 {
        let [_, _, c, d] = self.coeffs;
        2.0 * c + 6.0 * u * d
    }

    fn speed(&self, u: f64) -> f64 {
        self.derivative(u).norm()
    }

    pub fn length(&self) -> f64 {
        *self.table_s.last().unwrap()
    }

    fn min_speed(&self) -> f64 {
        (0..=4 * SPLINE_TABLE_INTERVALS)
            .map(|k| self.speed(k as f64 / (4 * SPLINE_TABLE_INTERVALS) as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Curve parameter at arc length `s` along this piece.
    fn parameter_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let k = match self
            .table_s
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(k) => return self.table_u[k],
            Err(k) => k - 1,
        };
        let (u0, s0) = (self.table_u[k], self.table_s[k]);
        let (u1, s1) = (self.table_u[k + 1], self.table_s[k + 1]);
        let mut u = u0 + (u1 - u0) * (s - s0) / (s1 - s0);
        for _ in 0..SPLINE_NEWTON_ITERS {
            let err = s0 + gauss_legendre(|v| self.speed(v), u0, u) - s;
            let step = err / self.speed(u);
            u = (u - step).clamp(u0, u1);
            if step.abs() < 1e-15 {
                break;
            }
        }
        u
    }

    fn frame(&self, s: f64) -> Frame {
        let u = self.parameter_at(s);
        let d1 = self.derivative(u);
        let d2 = self.second_derivative(u);
        let speed = d1.norm();
        let curvature = (d1.x * d2.y - d1.y * d2.x) / speed.powi(3);
        Frame::new(self.position(u), d1 / speed, curvature)
    }
}

/// One analytic piece of the generating curve.
#[derive(Debug, Clone)]
pub enum Segment {
    Line {
        start: Vec2,
        direction: Vec2,
        length: f64,
    },
    /// Circular arc; `turn` is +1 for counterclockwise (left) and -1 for clockwise.
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        turn: f64,
        length: f64,
    },
    Cubic(CubicPiece),
}

impl Segment {
    pub fn length(&self) -> f64 {
        match self {
            Segment::Line { length, .. } | Segment::Arc { length, .. } => *length,
            Segment::Cubic(piece) => piece.length(),
        }
    }

    fn frame(&self, s: f64) -> Frame {
        match *self {
            Segment::Line {
                start, direction, ..
            } => Frame::new(start + s * direction, direction, 0.0),
            Segment::Arc {
                center,
                radius,
                start_angle,
                turn,
                ..
            } => {
                let angle = start_angle + turn * s / radius;
                let radial = Vec2::new(angle.cos(), angle.sin());
                let tangent = turn * perp(radial);
                Frame::new(center + radius * radial, tangent, turn / radius)
            }
            Segment::Cubic(ref piece) => piece.frame(s),
        }
    }
}

/// Incrementally builds a tangent-continuous curve from a start pose.
#[derive(Debug, Clone)]
pub struct CurveBuilder {
    segments: Vec<Segment>,
    start: Vec2,
    start_heading: f64,
    cursor: Vec2,
    heading: f64,
}

impl CurveBuilder {
    pub fn new(start: Vec2, heading: f64) -> Self {
        CurveBuilder {
            segments: Vec::new(),
            start,
            start_heading: heading,
            cursor: start,
            heading,
        }
    }

    fn direction(&self) -> Vec2 {
        Vec2::new(self.heading.cos(), self.heading.sin())
    }

    pub fn line(mut self, length: f64) -> Result<Self, TubeError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(TubeError::InvalidCurve(format!(
                "line length must be positive, got {length}"
            )));
        }
        let direction = self.direction();
        self.segments.push(Segment::Line {
            start: self.cursor,
            direction,
            length,
        });
        self.cursor += length * direction;
        Ok(self)
    }

    /// Arc of `radius` sweeping `angle` radians; positive turns left.
    pub fn arc(mut self, radius: f64, angle: f64) -> Result<Self, TubeError> {
        if !(radius > 0.0 && radius.is_finite()) || angle == 0.0 || !angle.is_finite() {
            return Err(TubeError::InvalidCurve(format!(
                "arc needs positive radius and nonzero angle, got r={radius}, angle={angle}"
            )));
        }
        let turn = angle.signum();
        let normal = perp(self.direction());
        let center = self.cursor + turn * radius * normal;
        let radial = self.cursor - center;
        let start_angle = radial.y.atan2(radial.x);
        let seg = Segment::Arc {
            center,
            radius,
            start_angle,
            turn,
            length: radius * angle.abs(),
        };
        let end = seg.frame(seg.length());
        self.cursor = end.point;
        self.heading += angle;
        self.segments.push(seg);
        Ok(self)
    }

    /// Catmull-Rom spline from the current point through `points`. The first
    /// piece leaves along the current heading, so the joint is C¹.
    pub fn spline(mut self, points: &[Vec2]) -> Result<Self, TubeError> {
        if points.is_empty() {
            return Err(TubeError::InvalidCurve("spline needs at least one point".into()));
        }
        let mut knots = Vec::with_capacity(points.len() + 1);
        knots.push(self.cursor);
        knots.extend_from_slice(points);
        for w in knots.windows(2) {
            if (w[1] - w[0]).norm() < 1e-9 {
                return Err(TubeError::InvalidCurve("spline has repeated points".into()));
            }
        }
        let n = knots.len();
        let tangents: Vec<Vec2> = (0..n)
            .map(|k| {
                if k == 0 {
                    (knots[1] - knots[0]).norm() * self.direction()
                } else if k == n - 1 {
                    knots[k] - knots[k - 1]
                } else {
                    0.5 * (knots[k + 1] - knots[k - 1])
                }
            })
            .collect();
        for k in 0..n - 1 {
            let piece = CubicPiece::hermite(knots[k], knots[k + 1], tangents[k], tangents[k + 1]);
            if piece.min_speed() < 1e-6 {
                return Err(TubeError::InvalidCurve(
                    "spline piece has a cusp (vanishing speed)".into(),
                ));
            }
            self.segments.push(Segment::Cubic(piece));
        }
        let last = tangents[n - 1];
        self.cursor = knots[n - 1];
        self.heading = last.y.atan2(last.x);
        Ok(self)
    }

    pub fn build(self, closed: bool) -> Result<GeneratingCurve, TubeError> {
        if self.segments.is_empty() {
            return Err(TubeError::InvalidCurve("curve has no segments".into()));
        }
        if closed {
            let gap = (self.cursor - self.start).norm();
            let turn = angle_between(
                Vec2::new(self.heading.cos(), self.heading.sin()),
                Vec2::new(self.start_heading.cos(), self.start_heading.sin()),
            );
            if gap > 1e-6 || turn > JOINT_ANGLE_TOL {
                return Err(TubeError::InvalidCurve(format!(
                    "closed curve does not close smoothly (gap {gap:.3e} m, angle {turn:.3e} rad)"
                )));
            }
        }
        GeneratingCurve::from_segments(self.segments, closed)
    }
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    (a.x * b.y - a.y * b.x).atan2(a.dot(&b)).abs()
}

/// Arc-length parameterized spine of a virtual tube.
#[derive(Debug, Clone)]
pub struct GeneratingCurve {
    segments: Vec<Segment>,
    offsets: Vec<f64>,
    length: f64,
    closed: bool,
    samples: Vec<Sample>,
    sample_spacing: f64,
}

impl GeneratingCurve {
    pub fn from_segments(segments: Vec<Segment>, closed: bool) -> Result<Self, TubeError> {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut length = 0.0;
        for seg in &segments {
            offsets.push(length);
            length += seg.length();
        }
        if !(length > 0.0) {
            return Err(TubeError::InvalidCurve("curve has zero length".into()));
        }
        for (k, pair) in segments.windows(2).enumerate() {
            let a = pair[0].frame(pair[0].length());
            let b = pair[1].frame(0.0);
            if (a.point - b.point).norm() > 1e-6 || angle_between(a.tangent, b.tangent) > JOINT_ANGLE_TOL
            {
                return Err(TubeError::InvalidCurve(format!(
                    "segments {k} and {} are not C1-continuous",
                    k + 1
                )));
            }
        }
        let mut curve = GeneratingCurve {
            segments,
            offsets,
            length,
            closed,
            samples: Vec::new(),
            sample_spacing: 0.0,
        };
        let target = (0.01 * length).min(0.05);
        let intervals = (length / target).ceil().max(1.0) as usize;
        curve.sample_spacing = length / intervals as f64;
        let count = if closed { intervals } else { intervals + 1 };
        curve.samples = (0..count)
            .map(|k| {
                let l = if k == intervals { length } else { k as f64 * curve.sample_spacing };
                let f = curve.frame_unchecked(l);
                Sample {
                    l,
                    point: f.point,
                    tangent: f.tangent,
                    normal: f.normal,
                }
            })
            .collect();
        Ok(curve)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample_spacing(&self) -> f64 {
        self.sample_spacing
    }

    /// Wraps `l` into `[0, L)` for closed curves; identity for open ones.
    pub fn wrap(&self, l: f64) -> f64 {
        if self.closed {
            let w = l.rem_euclid(self.length);
            if w >= self.length {
                0.0
            } else {
                w
            }
        } else {
            l
        }
    }

    /// Frame at `l`, rejecting `l` outside `[0, L]` on open curves.
    pub fn frame(&self, l: f64) -> Result<Frame, TubeError> {
        if !l.is_finite() {
            return Err(TubeError::OutOfRange { l, max: self.length });
        }
        if !self.closed && !(-1e-12..=self.length + 1e-12).contains(&l) {
            return Err(TubeError::OutOfRange { l, max: self.length });
        }
        let l = if self.closed { l } else { l.clamp(0.0, self.length) };
        Ok(self.frame_unchecked(l))
    }

    /// Frame on the curve extended by straight rays beyond both ends of an open curve.
    pub fn frame_unchecked(&self, l: f64) -> Frame {
        let l = self.wrap(l);
        if l < 0.0 {
            let f = self.segments[0].frame(0.0);
            return Frame::new(f.point + l * f.tangent, f.tangent, 0.0);
        }
        if l > self.length {
            let last = self.segments.last().unwrap();
            let f = last.frame(last.length());
            return Frame::new(f.point + (l - self.length) * f.tangent, f.tangent, 0.0);
        }
        let idx = match self
            .offsets
            .binary_search_by(|probe| probe.partial_cmp(&l).unwrap())
        {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        let seg = &self.segments[idx];
        let s = (l - self.offsets[idx]).min(seg.length());
        seg.frame(s)
    }

    /// Foot of the normal from `p` on the (extended) curve: returns `(l, signed offset)`.
    ///
    /// Seeds from the nearest dense sample (ties to the smaller `l`) and refines
    /// with Newton iterations on `(γ(l) - p)·t(l) = 0`.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (k, s) in self.samples.iter().enumerate() {
            let d2 = (s.point - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = k;
            }
        }
        let mut l = self.samples[best].l;
        for _ in 0..20 {
            let f = self.frame_unchecked(l);
            let diff = p - f.point;
            let g = -diff.dot(&f.tangent);
            let slope = (1.0 - f.curvature * diff.dot(&f.normal)).max(0.1);
            let step = (g / slope).clamp(-2.0 * self.sample_spacing, 2.0 * self.sample_spacing);
            l = self.wrap(l - step);
            if step.abs() < 1e-14 * (1.0 + self.length) {
                break;
            }
        }
        let f = self.frame_unchecked(l);
        (l, (p - f.point).dot(&f.normal))
    }
}
