//! Kernel estimators of the occupation density, of drift-times-density and of
//! the drift itself, evaluated on a caller-supplied abscissa grid.
//!
//! With `n` increments per path, `N` paths and span `S = t_end - t0`, the
//! three pointwise estimators are
//!
//! ```text
//! density(x) = 1/(nN)  * sum_{i, j<n} K_h(X[i][j] - x)
//! bf(x)      = 1/(N S) * sum_{i, j<n} K_h(X[i][j] - x) * (X[i][j+1] - X[i][j])
//! drift(x)   = bf(x) / max(density_eta(x), floor)
//! ```
//!
//! The last observation of each path enters only through the increments,
//! never the kernel sums. The drift ratio uses a numerator bandwidth `h` and
//! a denominator bandwidth `eta` (equal in the one-bandwidth form), with the
//! denominator floored to keep the ratio finite where data are sparse.
//!
//! Sums run over paths in index order, then over time, so results do not
//! depend on how work is scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{validate_bandwidth, Kernel};
use crate::sde::PathEnsemble;

/// What an [`EstimateCurve`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Density,
    /// The drift-times-density numerator.
    Bf,
    Drift,
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CurveKind::Density => "density",
            CurveKind::Bf => "bf",
            CurveKind::Drift => "drift",
        })
    }
}

/// An estimator evaluated on a strictly increasing abscissa grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCurve {
    xs: Vec<f64>,
    values: Vec<f64>,
    kind: CurveKind,
}

impl EstimateCurve {
    /// Validates matching lengths, strictly increasing abscissae and finite
    /// values.
    pub fn new(xs: Vec<f64>, values: Vec<f64>, kind: CurveKind) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidParameter("curve needs at least one point".into()));
        }
        if xs.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "curve has {} abscissae but {} values",
                xs.len(),
                values.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "curve abscissae must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("curve values must be finite".into()));
        }
        Ok(EstimateCurve { xs, values, kind })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Write the curve as `x,value` CSV rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.xs.iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }
}

/// How the denominator of the drift ratio is kept away from zero.
///
/// `Absolute(m)` floors the density at `m / 2`; `DataDriven(fraction)` floors
/// it at `fraction` times the maximum of the density estimate over the
/// evaluation grid. A fraction of the peak is robust to the tail zeros a
/// literal minimum would pick up on a wide grid. The default fraction is
/// 0.01: occupation densities of mean-reverting models pile up near the
/// equilibrium, and a larger fraction makes the floor bind across the
/// transit region, visibly biasing the drift ratio toward zero there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FloorSpec {
    Absolute { m: f64 },
    DataDriven { fraction: f64 },
}

impl FloorSpec {
    /// Floor at `m / 2`; requires `m > 0`.
    pub fn absolute(m: f64) -> Result<Self> {
        if m > 0.0 && m.is_finite() {
            Ok(FloorSpec::Absolute { m })
        } else {
            Err(Error::InvalidParameter(format!(
                "absolute floor level must be positive, got {m}"
            )))
        }
    }

    /// Floor at `fraction * max density`; requires `fraction` in `(0, 1]`.
    pub fn data_driven(fraction: f64) -> Result<Self> {
        if fraction > 0.0 && fraction <= 1.0 {
            Ok(FloorSpec::DataDriven { fraction })
        } else {
            Err(Error::InvalidParameter(format!(
                "floor fraction must lie in (0, 1], got {fraction}"
            )))
        }
    }

    /// Resolve the floor against a computed density curve.
    fn resolve(&self, density_values: &[f64]) -> Result<f64> {
        let floor = match *self {
            FloorSpec::Absolute { m } => m / 2.0,
            FloorSpec::DataDriven { fraction } => {
                fraction * density_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        };
        if floor > 0.0 {
            Ok(floor)
        } else {
            Err(Error::DegenerateDensity)
        }
    }
}

impl Default for FloorSpec {
    fn default() -> Self {
        FloorSpec::DataDriven { fraction: 0.01 }
    }
}

/// `sum_{i, j<n} K_h(X[i][j] - x)`, paths in index order.
fn kernel_sum(ens: &PathEnsemble, kernel: &Kernel, h: f64, x: f64) -> f64 {
    let n = ens.grid().n();
    let mut acc = 0.0;
    for row in ens.paths() {
        for &obs in &row[..n] {
            acc += kernel.scaled_unchecked(h, obs - x);
        }
    }
    acc
}

/// `sum_{i, j<n} K_h(X[i][j] - x) * increment(i, j)`, paths in index order.
fn kernel_increment_sum(ens: &PathEnsemble, kernel: &Kernel, h: f64, x: f64) -> f64 {
    let n = ens.grid().n();
    let mut acc = 0.0;
    for row in ens.paths() {
        for j in 0..n {
            acc += kernel.scaled_unchecked(h, row[j] - x) * (row[j + 1] - row[j]);
        }
    }
    acc
}

fn validated_xs(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("evaluation grid is empty".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "evaluation abscissae must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Occupation-density estimate on `xs`.
pub fn estimate_density(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    xs: &[f64],
) -> Result<EstimateCurve> {
    validate_bandwidth(h)?;
    validated_xs(xs)?;
    let norm = 1.0 / (ens.grid().n() as f64 * ens.n_paths() as f64);
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| norm * kernel_sum(ens, kernel, h, x))
        .collect();
    EstimateCurve::new(xs.to_vec(), values, CurveKind::Density)
}

/// Drift-times-density estimate on `xs`.
pub fn estimate_bf(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    xs: &[f64],
) -> Result<EstimateCurve> {
    validate_bandwidth(h)?;
    validated_xs(xs)?;
    let norm = 1.0 / (ens.n_paths() as f64 * ens.grid().span());
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| norm * kernel_increment_sum(ens, kernel, h, x))
        .collect();
    EstimateCurve::new(xs.to_vec(), values, CurveKind::Bf)
}

/// Drift estimate with a single bandwidth for numerator and denominator.
pub fn estimate_drift(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    xs: &[f64],
    floor: &FloorSpec,
) -> Result<EstimateCurve> {
    estimate_drift_2b(ens, kernel, h, h, xs, floor)
}

/// Two-bandwidth drift estimate: bandwidth `h` in the numerator, `eta` in the
/// floored denominator. With `eta == h` this is exactly [`estimate_drift`].
pub fn estimate_drift_2b(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    eta: f64,
    xs: &[f64],
    floor: &FloorSpec,
) -> Result<EstimateCurve> {
    let numerator = estimate_bf(ens, kernel, h, xs)?;
    let denominator = estimate_density(ens, kernel, eta, xs)?;
    let floor_value = floor.resolve(denominator.values())?;
    let values: Vec<f64> = numerator
        .values()
        .iter()
        .zip(denominator.values())
        .map(|(&bf, &f)| bf / f.max(floor_value))
        .collect();
    EstimateCurve::new(xs.to_vec(), values, CurveKind::Drift)
}

/// The weight representation of the drift estimate at a single point:
/// an `N x n` matrix with
/// `w[i][j] = K_h(X[i][j] - x) / ((span/n) * sum_{i',j'} K_h(X[i'][j'] - x))`.
///
/// Satisfies `(span/n) * sum w = 1`, and `sum w[i][j] * increment(i, j)`
/// equals the drift estimate at `x` wherever the floor is not binding.
/// Errors when the kernel denominator vanishes at `x`.
pub fn weights(ens: &PathEnsemble, kernel: &Kernel, h: f64, x: f64) -> Result<Vec<Vec<f64>>> {
    validate_bandwidth(h)?;
    let n = ens.grid().n();
    let base = kernel_sum(ens, kernel, h, x);
    if base <= 0.0 || base.is_nan() {
        return Err(Error::DegenerateWeights { x });
    }
    let denom = ens.grid().dt() * base;
    Ok(ens
        .paths()
        .iter()
        .map(|row| {
            row[..n]
                .iter()
                .map(|&obs| kernel.scaled_unchecked(h, obs - x) / denom)
                .collect()
        })
        .collect())
}

/// Uniform evaluation grid of `points` abscissae spanning the
/// `[quantile, 1 - quantile]` empirical quantile range of all observations.
///
/// Quantiles use linear interpolation on the order statistics. A degenerate
/// range (all observations equal) is widened by 0.5 on each side so the grid
/// stays strictly increasing.
pub fn evaluation_grid(ens: &PathEnsemble, quantile: f64, points: usize) -> Result<Vec<f64>> {
    if quantile <= 0.0 || quantile >= 0.5 || quantile.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "trim quantile must lie in (0, 0.5), got {quantile}"
        )));
    }
    if points == 0 {
        return Err(Error::InvalidParameter("evaluation grid needs at least one point".into()));
    }
    let mut obs: Vec<f64> = ens.paths().iter().flatten().cloned().collect();
    obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut lo = sorted_quantile(&obs, quantile);
    let mut hi = sorted_quantile(&obs, 1.0 - quantile);
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    if points == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..points)
        .map(|g| lo + (hi - lo) * g as f64 / (points - 1) as f64)
        .collect())
}

/// Linear-interpolation quantile of an ascending slice.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lower = pos.floor() as usize;
    let upper = pos.ceil() as usize;
    let frac = pos - lower as f64;
    sorted[lower] + frac * (sorted[upper] - sorted[lower])
}
