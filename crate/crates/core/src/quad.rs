//! Small quadrature helpers used for kernel moment checks and curve masses.

/// Composite Simpson rule for `f` on `[a, b]` with at least `min_points`
/// sample points. The number of subintervals is rounded up to an even count.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, min_points: usize) -> f64 {
    assert!(b > a, "simpson: empty interval");
    let mut intervals = min_points.max(3) - 1;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let step = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for k in 1..intervals {
        let x = a + k as f64 * step;
        acc += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * step / 3.0
}

/// Trapezoid rule over tabulated values `(xs[g], ys[g])`.
///
/// The abscissae must be increasing; panics on length mismatch. Returns 0 for
/// fewer than two points.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "trapezoid: length mismatch");
    let mut acc = 0.0;
    for g in 1..xs.len() {
        acc += 0.5 * (ys[g] + ys[g - 1]) * (xs[g] - xs[g - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_exactly() {
        // Simpson is exact for cubics.
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 129);
        let exact = |x: f64| x.powi(4) / 4.0 - x * x + x;
        assert!((v - (exact(3.0) - exact(-1.0))).abs() < 1e-12);
    }

    #[test]
    fn simpson_gaussian_mass() {
        let k = |z: f64| (-(z * z) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = simpson(k, -10.0, 10.0, 1025);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let xs: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&xs, &ys) - 2.5).abs() < 1e-12);
    }
}
