//! Leave-one-out cross-validation of the drift bandwidth.
//!
//! The drift estimate at `x` can be written as a weighted sum of increments,
//! `sum_{i,j} w[i][j](x) * increment(i, j)`, with kernel weights normalized
//! over all paths. The leave-one-out estimate for held-out path `i` drops
//! path `i` from the numerator while keeping the full-ensemble denominator,
//! matching the weighted representation exactly. The `renormalized` option
//! re-sums the denominator over the remaining paths instead, which is the
//! classical regression convention; it is off by default.
//!
//! The selection criterion evaluated on a candidate grid is
//!
//! ```text
//! CV(h) = sum_i [ (span/n) * sum_{j<n} loo_i(X[i][j])^2
//!                 - 2 * sum_{j<n} loo_i(X[i][j]) * increment(i, j) ]
//! ```
//!
//! where `loo_i` is the leave-one-out drift for path `i`, evaluated at the
//! held-out path's own observations (the same `j < n` range the estimators
//! sum over). A held-out point where the weight denominator vanishes
//! contributes zero to both terms; such points are counted and reported
//! rather than silently floored or fatally raised, since flooring would bias
//! the selection and a hard error would discard whole replications.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{validate_bandwidth, Kernel};
use crate::sde::PathEnsemble;

/// Strictly increasing candidate bandwidths.
///
/// The constructor sorts and deduplicates its input, so selection cannot
/// depend on the order candidates were supplied in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandwidthGrid {
    hs: Vec<f64>,
}

impl From<BandwidthGrid> for Vec<f64> {
    fn from(g: BandwidthGrid) -> Vec<f64> {
        g.hs
    }
}

impl TryFrom<Vec<f64>> for BandwidthGrid {
    type Error = Error;
    fn try_from(hs: Vec<f64>) -> Result<Self> {
        BandwidthGrid::new(hs)
    }
}

impl BandwidthGrid {
    /// Build a grid from candidate values; all must be positive and finite.
    pub fn new(mut hs: Vec<f64>) -> Result<Self> {
        if hs.is_empty() {
            return Err(Error::InvalidParameter("bandwidth grid is empty".into()));
        }
        if let Some(&bad) = hs.iter().find(|h| **h <= 0.0 || !h.is_finite()) {
            return Err(Error::InvalidBandwidth(bad));
        }
        hs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hs.dedup();
        Ok(BandwidthGrid { hs })
    }

    /// The arithmetic grid `start, start + step, ..., start + (count-1) step`.
    pub fn uniform(start: f64, step: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("bandwidth grid is empty".into()));
        }
        if step <= 0.0 || step.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth grid step must be positive, got {step}"
            )));
        }
        BandwidthGrid::new((0..count).map(|k| start + step * k as f64).collect())
    }

    pub fn hs(&self) -> &[f64] {
        &self.hs
    }

    pub fn len(&self) -> usize {
        self.hs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hs.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.hs[0]
    }

    pub fn max(&self) -> f64 {
        *self.hs.last().unwrap()
    }
}

/// Options for the leave-one-out construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Re-sum the weight denominator over the `N - 1` retained paths instead
    /// of keeping the full-ensemble denominator.
    pub renormalized: bool,
}

/// Per-bandwidth criterion values and the selected minimizer.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub hs: Vec<f64>,
    /// `CV(h)` per candidate; NaN marks a candidate that failed to produce a
    /// finite value.
    pub criteria: Vec<f64>,
    pub selected: f64,
    pub selected_index: usize,
    /// Held-out evaluation points skipped per candidate because the weight
    /// denominator vanished there.
    pub degenerate_points: Vec<usize>,
    pub renormalized: bool,
}

impl CvReport {
    /// Write `h,cv` CSV rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "h,cv")?;
        for (h, cv) in self.hs.iter().zip(&self.criteria) {
            writeln!(w, "{h},{cv}")?;
        }
        Ok(())
    }
}

/// Numerator (excluding the held-out path) and denominator kernel sums at a
/// single evaluation point, in one pass over the ensemble.
fn loo_components(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    held_out: usize,
    x: f64,
    renormalized: bool,
) -> (f64, f64) {
    let n = ens.grid().n();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (i, row) in ens.paths().iter().enumerate() {
        let held = i == held_out;
        if held && renormalized {
            continue;
        }
        for j in 0..n {
            let k = kernel.scaled_unchecked(h, row[j] - x);
            denominator += k;
            if !held {
                numerator += k * (row[j + 1] - row[j]);
            }
        }
    }
    (numerator, denominator)
}

fn check_loo_preconditions(ens: &PathEnsemble, h: f64, held_out: usize) -> Result<()> {
    validate_bandwidth(h)?;
    if ens.n_paths() < 2 {
        return Err(Error::InsufficientPaths(ens.n_paths()));
    }
    if held_out >= ens.n_paths() {
        return Err(Error::InvalidParameter(format!(
            "held-out path index {held_out} out of range for {} paths",
            ens.n_paths()
        )));
    }
    Ok(())
}

/// Leave-one-out drift estimate for `held_out`, evaluated at `xs`.
///
/// Errors with [`Error::DegenerateWeights`] if the weight denominator
/// vanishes at any evaluation point.
pub fn loo_drift(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    held_out: usize,
    xs: &[f64],
) -> Result<Vec<f64>> {
    loo_drift_with(ens, kernel, h, held_out, xs, &CvOptions::default())
}

/// [`loo_drift`] with explicit [`CvOptions`].
pub fn loo_drift_with(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    held_out: usize,
    xs: &[f64],
    options: &CvOptions,
) -> Result<Vec<f64>> {
    check_loo_preconditions(ens, h, held_out)?;
    let dt = ens.grid().dt();
    xs.iter()
        .map(|&x| {
            let (num, den) = loo_components(ens, kernel, h, held_out, x, options.renormalized);
            if den > 0.0 {
                Ok(num / (dt * den))
            } else {
                Err(Error::DegenerateWeights { x })
            }
        })
        .collect()
}

/// `CV(h)` together with the number of skipped degenerate points.
fn criterion_detailed(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    options: &CvOptions,
) -> Result<(f64, usize)> {
    check_loo_preconditions(ens, h, 0)?;
    let n = ens.grid().n();
    let dt = ens.grid().dt();
    // Per-path terms computed in parallel, reduced in path order.
    let terms: Vec<(f64, usize)> = (0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let row = ens.path(i);
            let mut quadratic = 0.0;
            let mut cross = 0.0;
            let mut degenerate = 0usize;
            for j in 0..n {
                let x = row[j];
                let (num, den) = loo_components(ens, kernel, h, i, x, options.renormalized);
                if den > 0.0 {
                    let loo = num / (dt * den);
                    quadratic += loo * loo;
                    cross += loo * (row[j + 1] - row[j]);
                } else {
                    degenerate += 1;
                }
            }
            (dt * quadratic - 2.0 * cross, degenerate)
        })
        .collect();
    let mut value = 0.0;
    let mut degenerate = 0;
    for (term, skipped) in terms {
        value += term;
        degenerate += skipped;
    }
    Ok((value, degenerate))
}

/// The cross-validation criterion `CV(h)` for one candidate bandwidth.
pub fn cv_criterion(ens: &PathEnsemble, kernel: &Kernel, h: f64) -> Result<f64> {
    cv_criterion_with(ens, kernel, h, &CvOptions::default())
}

/// [`cv_criterion`] with explicit [`CvOptions`].
pub fn cv_criterion_with(
    ens: &PathEnsemble,
    kernel: &Kernel,
    h: f64,
    options: &CvOptions,
) -> Result<f64> {
    criterion_detailed(ens, kernel, h, options).map(|(v, _)| v)
}

/// Evaluate `CV` on every grid candidate and select the minimizer, breaking
/// exact ties toward the larger bandwidth.
pub fn select_bandwidth(ens: &PathEnsemble, kernel: &Kernel, grid: &BandwidthGrid) -> Result<CvReport> {
    select_bandwidth_with(ens, kernel, grid, &CvOptions::default())
}

/// [`select_bandwidth`] with explicit [`CvOptions`].
///
/// A candidate whose criterion fails or is non-finite is recorded as NaN and
/// skipped; if every candidate fails the selection itself fails.
pub fn select_bandwidth_with(
    ens: &PathEnsemble,
    kernel: &Kernel,
    grid: &BandwidthGrid,
    options: &CvOptions,
) -> Result<CvReport> {
    if ens.n_paths() < 2 {
        return Err(Error::InsufficientPaths(ens.n_paths()));
    }
    let mut criteria = Vec::with_capacity(grid.len());
    let mut degenerate_points = Vec::with_capacity(grid.len());
    for &h in grid.hs() {
        match criterion_detailed(ens, kernel, h, options) {
            Ok((value, skipped)) if value.is_finite() => {
                criteria.push(value);
                degenerate_points.push(skipped);
            }
            _ => {
                criteria.push(f64::NAN);
                degenerate_points.push(0);
            }
        }
    }
    let mut selected_index = None;
    for (k, &value) in criteria.iter().enumerate() {
        if !value.is_finite() {
            continue;
        }
        // `<=` moves exact ties to the larger h (the grid is ascending).
        match selected_index {
            Some(best) if value > criteria[best] => {}
            _ => selected_index = Some(k),
        }
    }
    let selected_index = selected_index.ok_or(Error::SelectionFailed)?;
    Ok(CvReport {
        hs: grid.hs().to_vec(),
        selected: grid.hs()[selected_index],
        selected_index,
        criteria,
        degenerate_points,
        renormalized: options.renormalized,
    })
}
