//! Diffusion models, the uniform observation grid and the path simulator.
//!
//! Paths follow `dX = b(X) dt + sigma(X) dW` from `X_0 = x0`. Simulation uses
//! Euler-Maruyama with an internal step `(t_end - t0) / (n * substeps)`; the
//! burn-in segment `[0, t0]` is integrated with the same step and discarded
//! except for seeding the state at `t0`. Only the grid times are recorded.
//!
//! Each path draws from its own counter-derived RNG stream, so the output is
//! a pure function of `(model, n_paths, grid, substeps, seed)` regardless of
//! thread scheduling.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Field = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A one-dimensional diffusion: drift `b`, diffusion coefficient `sigma` and
/// initial condition `x0`.
#[derive(Clone)]
pub struct SdeModel {
    name: String,
    drift: Field,
    diffusion: Field,
    x0: f64,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .finish()
    }
}

impl SdeModel {
    /// Build a model from drift and diffusion functions.
    ///
    /// Both fields are probed on a grid over `[-10, 10]` and must return
    /// finite values there.
    pub fn new<B, S>(name: impl Into<String>, x0: f64, drift: B, diffusion: S) -> Result<Self>
    where
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        if !x0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "model {name}: x0 must be finite, got {x0}"
            )));
        }
        for k in 0..=200 {
            let x = -10.0 + 0.1 * k as f64;
            if !drift(x).is_finite() || !diffusion(x).is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "model {name}: drift/diffusion non-finite at probe point x = {x}"
                )));
            }
        }
        Ok(SdeModel {
            name,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            x0,
        })
    }

    /// One of the four benchmark models, all started at `x0 = 2`:
    ///
    /// 1. `b(x) = -x`, `sigma = 0.1` (Langevin / Ornstein-Uhlenbeck)
    /// 2. `b(x) = -x`, `sigma(x) = 0.1 sqrt(1 + x^2)` (hyperbolic)
    /// 3. `b(x) = -(x + sin 4x)`, `sigma = 0.1`
    /// 4. `b(x) = -(x + sin 4x)`, `sigma(x) = 0.1 (2 + cos x)`
    pub fn preset(id: u32) -> Result<Self> {
        match id {
            1 => SdeModel::new("langevin", 2.0, |x| -x, |_| 0.1),
            2 => SdeModel::new("hyperbolic", 2.0, |x| -x, |x| 0.1 * (1.0 + x * x).sqrt()),
            3 => SdeModel::new("sine-additive", 2.0, |x| -(x + (4.0 * x).sin()), |_| 0.1),
            4 => SdeModel::new(
                "sine-multiplicative",
                2.0,
                |x| -(x + (4.0 * x).sin()),
                |x| 0.1 * (2.0 + x.cos()),
            ),
            other => Err(Error::InvalidModel(other)),
        }
    }

    /// Same dynamics with a different initial condition.
    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
}

/// The uniform dissection `t_j = t0 + j (t_end - t0) / n` of `[t0, t_end]`.
///
/// Times are derived from `(t0, t_end, n)`, never stored, so the spacing is
/// exactly `(t_end - t0) / n` by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct ObservationGrid {
    t0: f64,
    t_end: f64,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    t0: f64,
    t_end: f64,
    n: usize,
}

impl From<ObservationGrid> for RawGrid {
    fn from(g: ObservationGrid) -> Self {
        RawGrid { t0: g.t0, t_end: g.t_end, n: g.n }
    }
}

impl TryFrom<RawGrid> for ObservationGrid {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        ObservationGrid::new(raw.t0, raw.t_end, raw.n)
    }
}

impl ObservationGrid {
    /// Requires `0 <= t0 < t_end` and `n >= 1`.
    pub fn new(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if t0 < 0.0 || !t0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid start t0 must be nonnegative and finite, got {t0}"
            )));
        }
        if t_end <= t0 || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid horizon must exceed t0 = {t0}, got {t_end}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least 1 increment".into(),
            ));
        }
        Ok(ObservationGrid { t0, t_end, n })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of increments; the grid has `n + 1` times.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Observation span `t_end - t0`.
    pub fn span(&self) -> f64 {
        self.t_end - self.t0
    }

    /// Grid spacing `(t_end - t0) / n`.
    pub fn dt(&self) -> f64 {
        self.span() / self.n as f64
    }

    /// `t_j`, with the endpoint pinned to `t_end` exactly.
    pub fn time(&self, j: usize) -> f64 {
        debug_assert!(j <= self.n);
        if j == self.n {
            self.t_end
        } else {
            self.t0 + self.span() * j as f64 / self.n as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.time(j)).collect()
    }
}

/// `n_paths` independent discretized paths observed on a common grid.
///
/// Row `i` holds `X^i` at the grid times (so `n + 1` columns). Immutable once
/// built and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: ObservationGrid,
    values: Vec<Vec<f64>>,
}

impl PathEnsemble {
    /// Validates the shape (`n + 1` columns per row, at least one row) and
    /// that every entry is finite.
    pub fn new(grid: ObservationGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one path".into(),
            ));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != grid.n() + 1 {
                return Err(Error::InvalidParameter(format!(
                    "path {i} has {} observations, expected {}",
                    row.len(),
                    grid.n() + 1
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "path {i} has a non-finite value at observation {j}"
                )));
            }
        }
        Ok(PathEnsemble { grid, values })
    }

    pub fn grid(&self) -> &ObservationGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.values.len()
    }

    /// `X^i_{t_j}`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Increment `X^i_{t_{j+1}} - X^i_{t_j}` for `j < n`.
    pub fn increment(&self, i: usize, j: usize) -> f64 {
        self.values[i][j + 1] - self.values[i][j]
    }

    pub fn paths(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Smallest and largest observation over all paths and times.
    pub fn observation_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.values {
            for &v in row {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Stack the paths of two ensembles observed on the same grid.
    pub fn concat(&self, other: &PathEnsemble) -> Result<PathEnsemble> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter(
                "cannot concatenate ensembles on different grids".into(),
            ));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        PathEnsemble::new(self.grid, values)
    }

    /// Write the ensemble as CSV: one header row with the grid times, then
    /// one row per path. Floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_row(&mut w, &self.grid.times())?;
        for row in &self.values {
            write_row(&mut w, row)?;
        }
        Ok(())
    }

    /// Parse an ensemble written by [`PathEnsemble::write_csv`].
    ///
    /// The grid is reconstructed from the header times, which must form a
    /// uniform dissection.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedCsv("empty file".into()))??;
        let times = parse_row(&header, "header")?;
        if times.len() < 2 {
            return Err(Error::MalformedCsv(
                "header must list at least two grid times".into(),
            ));
        }
        let n = times.len() - 1;
        let grid = ObservationGrid::new(times[0], times[n], n)
            .map_err(|e| Error::MalformedCsv(e.to_string()))?;
        let scale = grid.span().abs().max(grid.t_end.abs()).max(1.0);
        for (j, &t) in times.iter().enumerate() {
            if (t - grid.time(j)).abs() > 1e-9 * scale {
                return Err(Error::MalformedCsv(format!(
                    "header time {j} = {t} is not on a uniform grid"
                )));
            }
        }
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = parse_row(&line, &format!("path {i}"))?;
            if row.len() != n + 1 {
                return Err(Error::MalformedCsv(format!(
                    "path {i} has {} fields, expected {}",
                    row.len(),
                    n + 1
                )));
            }
            values.push(row);
        }
        PathEnsemble::new(grid, values).map_err(|e| Error::MalformedCsv(e.to_string()))
    }
}

fn write_row<W: Write>(w: &mut W, row: &[f64]) -> std::io::Result<()> {
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")
}

fn parse_row(line: &str, what: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::MalformedCsv(format!("{what}: bad float {field:?}")))
        })
        .collect()
}

/// Provenance of a simulated ensemble: model name and parameters, seed and
/// grid. Written alongside the CSV by the command-line tool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub model: String,
    pub x0: f64,
    pub n_paths: usize,
    pub substeps: usize,
    pub seed: u64,
    pub grid: ObservationGrid,
}

/// Simulate `n_paths` independent paths of `model`, recorded at the grid
/// times.
///
/// The internal Euler-Maruyama step is `grid.dt() / substeps` on both the
/// burn-in `[0, t0]` and the observation window. Identical arguments produce
/// bit-identical ensembles; path `i` consumes RNG stream `i` derived from
/// `seed`, so a path's values do not depend on how many other paths are drawn.
pub fn simulate_ensemble(
    model: &SdeModel,
    n_paths: usize,
    grid: &ObservationGrid,
    substeps: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
    }
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be >= 1".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_path(model, grid, substeps, seed, i))
        .collect();
    // Surface the lowest-index failure deterministically.
    let mut values = Vec::with_capacity(n_paths);
    for row in rows {
        values.push(row?);
    }
    PathEnsemble::new(*grid, values)
}

fn simulate_path(
    model: &SdeModel,
    grid: &ObservationGrid,
    substeps: usize,
    seed: u64,
    path: usize,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    let dt = grid.dt() / substeps as f64;
    let sqrt_dt = dt.sqrt();

    let mut x = model.x0();
    let mut t = 0.0;
    let step = |x: &mut f64, t: &mut f64, dt: f64, sqrt_dt: f64, rng: &mut ChaCha8Rng| {
        let z: f64 = StandardNormal.sample(rng);
        *x += model.drift(*x) * dt + model.diffusion(*x) * sqrt_dt * z;
        *t += dt;
        if x.is_finite() {
            Ok(())
        } else {
            Err(Error::SimulationDiverged { path, time: *t })
        }
    };

    // Burn-in on [0, t0]: full steps of dt plus one shorter step for any
    // remainder when dt does not divide t0.
    if grid.t0() > 0.0 {
        let ratio = grid.t0() / dt;
        let mut full = ratio.floor();
        if ratio - full > 1.0 - 1e-9 {
            full += 1.0;
        }
        for _ in 0..full as u64 {
            step(&mut x, &mut t, dt, sqrt_dt, &mut rng)?;
        }
        let rem = grid.t0() - full * dt;
        if rem > dt * 1e-9 {
            step(&mut x, &mut t, rem, rem.sqrt(), &mut rng)?;
        }
        t = grid.t0();
    }

    let mut row = Vec::with_capacity(grid.n() + 1);
    row.push(x);
    for j in 0..grid.n() {
        for _ in 0..substeps {
            step(&mut x, &mut t, dt, sqrt_dt, &mut rng)?;
        }
        t = grid.time(j + 1);
        row.push(x);
    }
    Ok(row)
}
