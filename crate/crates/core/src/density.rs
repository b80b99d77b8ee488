//! Swarm density estimation and the desired density over the occupied region.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;
use crate::tube::{CurvilinearCoord, TubeError, VirtualTube};
use crate::Vec2;

/// Step of the central differences used for ∇ρ_d.
pub const DESIRED_GRADIENT_STEP: f64 = 1e-4;

/// Default positivity floor applied to ρ̂ where it divides.
pub const DEFAULT_RHO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("no active robots: density is undefined")]
    NoActiveRobots,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("finite-difference stencil left the tube in every direction")]
    StencilOutside,
    #[error(transparent)]
    Tube(#[from] TubeError),
}

/// Gaussian kernel density estimate of the active robot positions.
#[derive(Debug, Clone)]
pub struct DensityView {
    samples: Vec<Vec2>,
    bandwidth: f64,
    rho_floor: f64,
}

impl DensityView {
    pub fn new(samples: Vec<Vec2>, bandwidth: f64, rho_floor: f64) -> Result<Self, DensityError> {
        if samples.is_empty() {
            return Err(DensityError::NoActiveRobots);
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(DensityError::InvalidBandwidth(bandwidth));
        }
        Ok(DensityView {
            samples,
            bandwidth,
            rho_floor,
        })
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn rho_floor(&self) -> f64 {
        self.rho_floor
    }

    fn norm(&self) -> f64 {
        1.0 / (2.0 * PI * self.samples.len() as f64 * self.bandwidth * self.bandwidth)
    }

    /// ρ̂(p) = 1/(N h²) Σ K((p - pᵢ)/h) with the standard bivariate Gaussian K.
    pub fn estimate(&self, p: Vec2) -> f64 {
        let inv_h2 = 1.0 / (self.bandwidth * self.bandwidth);
        self.samples
            .iter()
            .map(|s| (-0.5 * (p - s).norm_squared() * inv_h2).exp())
            .sum::<f64>()
            * self.norm()
    }

    /// Analytic gradient of [`Self::estimate`].
    pub fn gradient(&self, p: Vec2) -> Vec2 {
        self.estimate_and_gradient(p).1
    }

    pub fn estimate_and_gradient(&self, p: Vec2) -> (f64, Vec2) {
        let inv_h2 = 1.0 / (self.bandwidth * self.bandwidth);
        let mut value = 0.0;
        let mut grad = Vec2::zeros();
        for s in &self.samples {
            let d = p - s;
            let k = (-0.5 * d.norm_squared() * inv_h2).exp();
            value += k;
            grad -= k * inv_h2 * d;
        }
        let c = self.norm();
        (value * c, grad * c)
    }

    /// ρ̂(p) raised to the positivity floor, for use as a divisor.
    pub fn floored(&self, p: Vec2) -> f64 {
        self.estimate(p).max(self.rho_floor)
    }
}

/// Rule-of-thumb bandwidth ĥ N^(-1/6), ĥ the mean marginal standard deviation,
/// clamped to `[r_s/2, 4 r_s]`.
pub fn silverman_bandwidth(samples: &[Vec2], r_s: f64) -> f64 {
    let n = samples.len();
    let (lo, hi) = (0.5 * r_s, 4.0 * r_s);
    if n < 2 {
        return lo;
    }
    let nf = n as f64;
    let mean = samples.iter().fold(Vec2::zeros(), |acc, p| acc + p) / nf;
    let var = samples
        .iter()
        .fold(Vec2::zeros(), |acc, p| {
            let d = p - mean;
            acc + d.component_mul(&d)
        })
        / nf;
    let spread = 0.5 * (var.x.sqrt() + var.y.sqrt());
    (spread * nf.powf(-1.0 / 6.0)).clamp(lo, hi)
}

/// Arc-length slice `[l_b, l_f]` of the tube spanned by the swarm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupiedRegion {
    pub l_b: f64,
    /// May exceed L on closed tubes, where the interval wraps.
    pub l_f: f64,
    /// 1 / ∫ 2 r_c(l)² dl over the region.
    pub lambda: f64,
    pub closed: bool,
}

impl OccupiedRegion {
    pub fn span(&self) -> f64 {
        self.l_f - self.l_b
    }

    /// Offsets from `l_b` of the part of the region that lies inside the tube.
    ///
    /// On open tubes an expanded region may overhang either end.
    pub fn tube_offsets(&self, tube_length: f64) -> (f64, f64) {
        if self.closed {
            (0.0, self.span())
        } else {
            ((-self.l_b).max(0.0), self.span().min(tube_length - self.l_b))
        }
    }

    /// Offset of `l` from `l_b` along the region (wrapped on closed tubes).
    pub fn local(&self, l: f64, tube_length: f64) -> f64 {
        if self.closed {
            (l - self.l_b).rem_euclid(tube_length)
        } else {
            l - self.l_b
        }
    }

    /// Rear/front arc lengths of the swarm at positions `positions`.
    ///
    /// Spans shorter than `2 min_half_span` are widened symmetrically to that
    /// width about their midpoint; on open tubes the result may overhang an end.
    pub fn from_positions(
        tube: &VirtualTube,
        positions: &[Vec2],
        min_half_span: f64,
    ) -> Result<Self, DensityError> {
        if positions.is_empty() {
            return Err(DensityError::NoActiveRobots);
        }
        let ls = positions
            .iter()
            .map(|&p| tube.to_curvilinear(p).map(|c| c.l))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_arc_lengths(tube, &ls, min_half_span))
    }

    pub fn from_arc_lengths(tube: &VirtualTube, ls: &[f64], min_half_span: f64) -> Self {
        let length = tube.length();
        let (mut l_b, mut l_f) = if tube.is_closed() {
            let mut sorted: Vec<f64> = ls.iter().map(|&l| l.rem_euclid(length)).collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // The region is the complement of the largest gap between neighbours.
            let n = sorted.len();
            let mut gap = sorted[0] + length - sorted[n - 1];
            let mut start = 0;
            for k in 1..n {
                let g = sorted[k] - sorted[k - 1];
                if g > gap {
                    gap = g;
                    start = k;
                }
            }
            let l_b = sorted[start];
            (l_b, l_b + (length - gap))
        } else {
            let l_b = ls.iter().copied().fold(f64::INFINITY, f64::min);
            let l_f = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (l_b, l_f)
        };
        let min_span = (2.0 * min_half_span).min(length);
        if l_f - l_b < min_span {
            let mid = 0.5 * (l_b + l_f);
            l_b = mid - 0.5 * min_span;
            l_f = mid + 0.5 * min_span;
        }
        let mut region = OccupiedRegion {
            l_b,
            l_f,
            lambda: 0.0,
            closed: tube.is_closed(),
        };
        region.lambda = 1.0 / capacity_integral(tube, &region, |_| 1.0, 0.0);
        region
    }
}

/// ∫ 2 r_c(l)² w(l - l_b) dl over the part of the region inside the tube, split at
/// width knots and at `extra_break` distance from either end.
fn capacity_integral<W: Fn(f64) -> f64>(
    tube: &VirtualTube,
    region: &OccupiedRegion,
    weight: W,
    extra_break: f64,
) -> f64 {
    let length = tube.length();
    let span = region.span();
    let mut breaks: Vec<f64> = Vec::new();
    for knot in tube.widths().breakpoints() {
        // knot positions expressed as offsets from l_b (all periodic images on closed tubes)
        let mut s = knot - region.l_b;
        if region.closed {
            s = s.rem_euclid(length);
        }
        breaks.push(s);
    }
    if region.closed {
        breaks.push((length - region.l_b).rem_euclid(length));
    }
    if extra_break > 0.0 {
        breaks.push(extra_break);
        breaks.push(span - extra_break);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pieces = if extra_break > 0.0 { 16 } else { 1 };
    let (lo, hi) = region.tube_offsets(length);
    quadrature::piecewise(
        |s| {
            let rc = tube.widths().radius(tube.curve().wrap(region.l_b + s));
            2.0 * rc * rc * weight(s)
        },
        lo,
        hi,
        &breaks,
        pieces,
    )
}

/// Cosine half-ramp: 0 at x ≤ 0, 1 at x ≥ width.
fn ramp(x: f64, width: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= width {
        1.0
    } else {
        0.5 * (1.0 - (PI * x / width).cos())
    }
}

/// Desired density λ r_c(l_p) on the occupied region, smoothed to zero over
/// skirts of width `skirt` at both ends and renormalized to unit mass.
#[derive(Debug, Clone)]
pub struct DesiredDensity<'a> {
    tube: &'a VirtualTube,
    region: OccupiedRegion,
    skirt: f64,
    lambda_mollified: f64,
}

impl<'a> DesiredDensity<'a> {
    pub fn new(tube: &'a VirtualTube, region: OccupiedRegion, skirt: f64) -> Self {
        let skirt = skirt.min(0.5 * region.span()).max(0.0);
        let mut dd = DesiredDensity {
            tube,
            region,
            skirt,
            lambda_mollified: 0.0,
        };
        let total = capacity_integral(tube, &region, |s| dd.weight(s), skirt);
        dd.lambda_mollified = 1.0 / total;
        dd
    }

    pub fn region(&self) -> &OccupiedRegion {
        &self.region
    }

    pub fn tube(&self) -> &VirtualTube {
        self.tube
    }

    pub fn skirt(&self) -> f64 {
        self.skirt
    }

    /// Normalization after mollification (equals `region.lambda` when there are no skirts).
    pub fn lambda(&self) -> f64 {
        self.lambda_mollified
    }

    fn weight(&self, s: f64) -> f64 {
        if s < 0.0 || s > self.region.span() {
            return 0.0;
        }
        if self.skirt == 0.0 {
            return 1.0;
        }
        ramp(s, self.skirt).min(ramp(self.region.span() - s, self.skirt))
    }

    /// ρ_d on the cross-section at arc length `l`.
    pub fn at_arc_length(&self, l: f64) -> f64 {
        let s = self.region.local(l, self.tube.length());
        let w = self.weight(s);
        if w == 0.0 {
            return 0.0;
        }
        self.lambda_mollified * w * self.tube.widths().radius(self.tube.curve().wrap(l))
    }

    pub fn at_coord(&self, c: CurvilinearCoord) -> f64 {
        self.at_arc_length(c.l)
    }

    /// ρ_d(p); errors when `p` is outside the tube.
    pub fn value(&self, p: Vec2) -> Result<f64, DensityError> {
        let c = self.tube.to_curvilinear(p)?;
        Ok(self.at_arc_length(c.l))
    }

    /// Central finite differences of [`Self::value`], one-sided where the
    /// stencil leaves the tube.
    pub fn gradient(&self, p: Vec2) -> Result<Vec2, DensityError> {
        let h = DESIRED_GRADIENT_STEP;
        let center = self.value(p)?;
        let mut grad = Vec2::zeros();
        for axis in 0..2 {
            let mut e = Vec2::zeros();
            e[axis] = h;
            let fwd = self.value(p + e).ok();
            let bwd = self.value(p - e).ok();
            grad[axis] = match (fwd, bwd) {
                (Some(f), Some(b)) => (f - b) / (2.0 * h),
                (Some(f), None) => (f - center) / h,
                (None, Some(b)) => (center - b) / h,
                (None, None) => return Err(DensityError::StencilOutside),
            };
        }
        Ok(grad)
    }
}

/// Arc-length extent covered by the error grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDomain {
    /// `[l_b + δ_l, l_f - δ_l]`, where ρ_d is not ramped; the whole region
    /// when that interval is empty.
    #[default]
    Interior,
    /// `[l_b, l_f]` including the skirts.
    Region,
}

/// Cells of the curvilinear quadrature grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridResolution {
    pub l_cells: usize,
    pub r_cells: usize,
    #[serde(default)]
    pub domain: ErrorDomain,
}

impl Default for GridResolution {
    fn default() -> Self {
        GridResolution::new(200, 40)
    }
}

impl GridResolution {
    pub fn new(l_cells: usize, r_cells: usize) -> Self {
        GridResolution {
            l_cells,
            r_cells,
            domain: ErrorDomain::Interior,
        }
    }

    pub fn with_domain(self, domain: ErrorDomain) -> Self {
        GridResolution { domain, ..self }
    }

    pub fn refined(self) -> Self {
        GridResolution {
            l_cells: 2 * self.l_cells,
            r_cells: 2 * self.r_cells,
            ..self
        }
    }
}

/// One midpoint cell over the occupied region; the area element is
/// (1 - κ r) Δl Δr, the curvilinear Jacobian at the cell centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub coord: CurvilinearCoord,
    pub point: Vec2,
    pub area: f64,
    pub desired: f64,
}

/// Midpoint cells covering the occupied region (or its interior, per `res.domain`).
pub fn region_cells(dd: &DesiredDensity<'_>, res: GridResolution) -> Result<Vec<GridCell>, DensityError> {
    let tube = dd.tube();
    let region = dd.region();
    let (mut lo, mut hi) = region.tube_offsets(tube.length());
    if res.domain == ErrorDomain::Interior {
        let (a, b) = (lo.max(dd.skirt()), hi.min(region.span() - dd.skirt()));
        if b > a {
            (lo, hi) = (a, b);
        }
    }
    let span = hi - lo;
    if !(span > 0.0) || res.l_cells == 0 || res.r_cells == 0 {
        return Err(DensityError::NoActiveRobots);
    }
    let dl = span / res.l_cells as f64;
    let mut cells = Vec::with_capacity(res.l_cells * res.r_cells);
    for i in 0..res.l_cells {
        let l = tube.curve().wrap(region.l_b + lo + (i as f64 + 0.5) * dl);
        let frame = tube.curve().frame_unchecked(l);
        let (rd, ru) = tube.widths_at(l);
        let dr = (rd + ru) / res.r_cells as f64;
        let desired = dd.at_arc_length(l);
        for j in 0..res.r_cells {
            let r = -rd + (j as f64 + 0.5) * dr;
            cells.push(GridCell {
                coord: CurvilinearCoord { l, r },
                point: frame.point + r * frame.normal,
                area: (1.0 - frame.curvature * r) * dl * dr,
                desired,
            });
        }
    }
    Ok(cells)
}

/// ‖f - ρ_d‖ in L² over the occupied region for an arbitrary estimate field `f`.
pub fn l2_error_with<F: Fn(Vec2) -> f64 + Sync>(
    dd: &DesiredDensity<'_>,
    res: GridResolution,
    estimate: F,
) -> Result<f64, DensityError> {
    let cells = region_cells(dd, res)?;
    // Collected before summing so the result does not depend on thread scheduling.
    let terms: Vec<f64> = cells
        .par_iter()
        .map(|c| {
            let e = estimate(c.point) - c.desired;
            e * e * c.area
        })
        .collect();
    Ok(terms.iter().sum::<f64>().sqrt())
}

/// ‖ρ̂ - ρ_d‖ in L² over the occupied region.
pub fn density_error_l2(
    view: &DensityView,
    dd: &DesiredDensity<'_>,
    res: GridResolution,
) -> Result<f64, DensityError> {
    l2_error_with(dd, res, |p| view.estimate(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeErrorCell {
    pub cell: GridCell,
    pub estimate: f64,
    /// `(ρ̂ - ρ_d) / ρ_d`, or `None` where ρ_d is below the floor.
    pub relative: Option<f64>,
}

/// Cellwise normalized relative error (ρ̂ - ρ_d)/ρ_d over the occupied region.
pub fn relative_error_field(
    view: &DensityView,
    dd: &DesiredDensity<'_>,
    res: GridResolution,
) -> Result<Vec<RelativeErrorCell>, DensityError> {
    relative_error_with(dd, res, view.rho_floor(), |p| view.estimate(p))
}

pub fn relative_error_with<F: Fn(Vec2) -> f64>(
    dd: &DesiredDensity<'_>,
    res: GridResolution,
    floor: f64,
    estimate: F,
) -> Result<Vec<RelativeErrorCell>, DensityError> {
    Ok(region_cells(dd, res)?
        .into_iter()
        .map(|cell| {
            let estimate = estimate(cell.point);
            let relative = (cell.desired >= floor).then(|| (estimate - cell.desired) / cell.desired);
            RelativeErrorCell {
                cell,
                estimate,
                relative,
            }
        })
        .collect())
}
