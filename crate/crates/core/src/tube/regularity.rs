use crate::Vec2;

use super::VirtualTube;

/// Result of the pairwise cross-section intersection test.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub spacing: f64,
    pub sections_checked: usize,
    /// Arc-length pairs `(l1, l2)`, `l1 < l2`, whose sections intersect.
    pub intersecting: Vec<(f64, f64)>,
}

impl RegularityReport {
    pub fn is_regular(&self) -> bool {
        self.intersecting.is_empty()
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed-segment intersection test, touching endpoints included.
pub fn segments_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> bool {
    let scale = 1e-12
        * (a1 - a0)
            .norm()
            .max((b1 - b0).norm())
            .max(1.0)
            .powi(2);
    let sign = |v: f64| if v > scale { 1 } else if v < -scale { -1 } else { 0 };
    let d1 = sign(orient(b0, b1, a0));
    let d2 = sign(orient(b0, b1, a1));
    let d3 = sign(orient(a0, a1, b0));
    let d4 = sign(orient(a0, a1, b1));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(b0, b1, a0))
        || (d2 == 0 && on_segment(b0, b1, a1))
        || (d3 == 0 && on_segment(a0, a1, b0))
        || (d4 == 0 && on_segment(a0, a1, b1))
}

pub(super) fn check(tube: &VirtualTube, spacing: f64) -> RegularityReport {
    let length = tube.length();
    let intervals = (length / spacing).round().max(2.0) as usize;
    let step = length / intervals as f64;
    let count = if tube.is_closed() { intervals } else { intervals + 1 };
    let sections: Vec<(f64, Vec2, Vec2)> = (0..count)
        .map(|k| {
            let l = if k == intervals { length } else { k as f64 * step };
            let (pd, pu) = tube.endpoints_unchecked(l);
            (l, pd, pu)
        })
        .collect();
    let separation = |a: f64, b: f64| {
        let d = (a - b).abs();
        if tube.is_closed() {
            d.min(length - d)
        } else {
            d
        }
    };
    let mut intersecting = Vec::new();
    for i in 0..sections.len() {
        for j in i + 1..sections.len() {
            let (li, ai, bi) = sections[i];
            let (lj, aj, bj) = sections[j];
            if separation(li, lj) <= step * (1.0 + 1e-9) {
                continue;
            }
            if segments_intersect(ai, bi, aj, bj) {
                intersecting.push((li, lj));
            }
        }
    }
    RegularityReport {
        spacing: step,
        sections_checked: sections.len(),
        intersecting,
    }
}
