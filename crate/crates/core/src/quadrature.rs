//! Gauss-Legendre quadrature on finite intervals.

/// 8-point Gauss-Legendre rule on [-1, 1] as (weight, abscissa) pairs.
pub const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (0.362_683_783_378_361_96, -0.183_434_642_495_649_8),
    (0.362_683_783_378_361_96, 0.183_434_642_495_649_8),
    (0.313_706_645_877_887_3, -0.525_532_409_916_329),
    (0.313_706_645_877_887_3, 0.525_532_409_916_329),
    (0.222_381_034_453_374_48, -0.796_666_477_413_626_7),
    (0.222_381_034_453_374_48, 0.796_666_477_413_626_7),
    (0.101_228_536_290_376_26, -0.960_289_856_497_536_3),
    (0.101_228_536_290_376_26, 0.960_289_856_497_536_3),
];

/// Integrates `f` over `[a, b]` with one 8-point rule. Exact for polynomials up to degree 15.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GAUSS_LEGENDRE_8
        .iter()
        .map(|&(w, x)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite 8-point rule over `pieces` equal subintervals of `[a, b]`.
pub fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> f64 {
    let pieces = pieces.max(1);
    let step = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + step * k as f64;
            let hi = if k + 1 == pieces { b } else { lo + step };
            gauss_legendre(&f, lo, hi)
        })
        .sum()
}

/// Composite rule over the sub-intervals delimited by sorted `breaks`, each split into `pieces`.
///
/// Breakpoints outside `[a, b]` are ignored.
pub fn piecewise<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], pieces: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let mut lo = a;
    for &x in breaks.iter().filter(|&&x| x > a && x < b) {
        if x > lo {
            total += composite(&f, lo, x, pieces);
            lo = x;
        }
    }
    total + composite(&f, lo, b, pieces)
}
