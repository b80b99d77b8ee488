use super::TubeError;

/// Piecewise-linear downward/upward widths over arc length.
///
/// Values beyond the first and last knot are held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthProfile {
    knots: Vec<WidthKnot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthKnot {
    pub l: f64,
    pub r_d: f64,
    pub r_u: f64,
}

impl WidthProfile {
    pub fn new(knots: Vec<WidthKnot>) -> Result<Self, TubeError> {
        if knots.is_empty() {
            return Err(TubeError::InvalidWidths("no width knots".into()));
        }
        for k in &knots {
            if !(k.r_d > 0.0 && k.r_u > 0.0) || !k.r_d.is_finite() || !k.r_u.is_finite() {
                return Err(TubeError::InvalidWidths(format!(
                    "widths must be positive at l={}: r_d={}, r_u={}",
                    k.l, k.r_d, k.r_u
                )));
            }
        }
        if knots.windows(2).any(|w| !(w[1].l > w[0].l)) {
            return Err(TubeError::InvalidWidths(
                "knot arc lengths must be strictly increasing".into(),
            ));
        }
        Ok(WidthProfile { knots })
    }

    /// Same width on both sides everywhere.
    pub fn constant(r_d: f64, r_u: f64) -> Result<Self, TubeError> {
        Self::new(vec![WidthKnot { l: 0.0, r_d, r_u }])
    }

    pub fn knots(&self) -> &[WidthKnot] {
        &self.knots
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.l).collect()
    }

    /// `(r_d(l), r_u(l))`.
    pub fn at(&self, l: f64) -> (f64, f64) {
        let first = self.knots[0];
        if l <= first.l {
            return (first.r_d, first.r_u);
        }
        let last = *self.knots.last().unwrap();
        if l >= last.l {
            return (last.r_d, last.r_u);
        }
        let idx = self.knots.partition_point(|k| k.l <= l) - 1;
        let (a, b) = (self.knots[idx], self.knots[idx + 1]);
        let t = (l - a.l) / (b.l - a.l);
        (a.r_d + t * (b.r_d - a.r_d), a.r_u + t * (b.r_u - a.r_u))
    }

    /// Cross-section radius `(r_d + r_u) / 2`.
    pub fn radius(&self, l: f64) -> f64 {
        let (d, u) = self.at(l);
        0.5 * (d + u)
    }

    /// Smallest single-side width over `[0, length]`.
    pub fn min_half_width(&self, length: f64) -> f64 {
        let mut probes = vec![0.0, length];
        probes.extend(self.knots.iter().map(|k| k.l).filter(|&l| l > 0.0 && l < length));
        probes
            .into_iter()
            .map(|l| {
                let (d, u) = self.at(l);
                d.min(u)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest cross-section radius over `[0, length]`.
    pub fn min_radius(&self, length: f64) -> f64 {
        let mut probes = vec![0.0, length];
        probes.extend(self.knots.iter().map(|k| k.l).filter(|&l| l > 0.0 && l < length));
        probes
            .into_iter()
            .map(|l| self.radius(l))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taper() -> WidthProfile {
        WidthProfile::new(vec![
            WidthKnot { l: 0.0, r_d: 1.0, r_u: 1.0 },
            WidthKnot { l: 10.0, r_d: 0.6, r_u: 0.6 },
        ])
        .unwrap()
    }

    #[test]
    fn interpolates_and_extrapolates() {
        let w = taper();
        assert_eq!(w.at(-1.0), (1.0, 1.0));
        assert_eq!(w.at(12.0), (0.6, 0.6));
        let (d, u) = w.at(5.0);
        assert!((d - 0.8).abs() < 1e-15 && (u - 0.8).abs() < 1e-15);
        assert!((w.min_half_width(10.0) - 0.6).abs() < 1e-15);
        assert!((w.min_radius(5.0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(WidthProfile::constant(0.0, 1.0).is_err());
        assert!(WidthProfile::new(vec![
            WidthKnot { l: 1.0, r_d: 1.0, r_u: 1.0 },
            WidthKnot { l: 1.0, r_d: 1.0, r_u: 1.0 },
        ])
        .is_err());
        assert!(WidthProfile::new(vec![]).is_err());
    }
}
