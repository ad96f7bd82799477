//! Exact simulation of stationary Gaussian field paths on regular grids.
//!
//! Sampling is by dense Cholesky factorization of the grid covariance
//! matrix: `X = mu + L z` with `L L^T = Sigma_grid` and `z` i.i.d. standard
//! normal. This is exact (up to the factorization's ridge policy) but cubic
//! in the number of grid points, hence the hard grid-size guard.

use crate::covariance::{CovarianceModel, CovarianceSystem, ObservationSet, Window};
use crate::error::{Error, Result};
use crate::rng;
use crate::special::GaussianMarginal;
use nalgebra::{DMatrix, DVector};

/// Hard cap on grid points for dense-Cholesky simulation.
pub const MAX_SIMULATION_POINTS: usize = 20_000;

/// Cap on materialized grid points (memory sanity, far above any grid the
/// dense simulator accepts).
const MAX_GRID_POINTS: usize = 5_000_000;

/// Relative tolerance for matching a location onto a grid coordinate.
const GRID_SNAP_TOL: f64 = 1e-9;

/// A regular lattice over a window: points `lo + i * mesh` per axis,
/// `i = 0 ..= floor((hi - lo) / mesh)`, ordered lexicographically by
/// coordinate (last axis varying fastest).
#[derive(Clone, Debug)]
pub struct GridSpec {
    window: Window,
    mesh: f64,
    axis_counts: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(window: Window, mesh: f64) -> Result<Self> {
        if !mesh.is_finite() || mesh <= 0.0 {
            return Err(Error::invalid(format!(
                "grid mesh must be positive and finite, got {mesh}"
            )));
        }
        let mut axis_counts = Vec::with_capacity(window.dim());
        let mut total = 1usize;
        for (lo, hi) in window.bounds() {
            // The 1e-9 nudge keeps counts stable when (hi - lo) / mesh lands
            // a rounding error below an integer.
            let steps = ((hi - lo) / mesh + 1e-9).floor() as usize;
            let count = steps + 1;
            axis_counts.push(count);
            total = total.saturating_mul(count);
            if total > MAX_GRID_POINTS {
                return Err(Error::invalid(format!(
                    "grid would have more than {MAX_GRID_POINTS} points"
                )));
            }
        }
        let dim = window.dim();
        let mut points = Vec::with_capacity(total);
        let mut index = vec![0usize; dim];
        'outer: loop {
            points.push(
                window
                    .bounds()
                    .iter()
                    .zip(&index)
                    .map(|((lo, _), i)| lo + (*i as f64) * mesh)
                    .collect(),
            );
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break 'outer;
                }
                axis -= 1;
                index[axis] += 1;
                if index[axis] < axis_counts[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        debug_assert_eq!(points.len(), total);
        Ok(GridSpec {
            window,
            mesh,
            axis_counts,
            points,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// Number of points per axis.
    pub fn axis_counts(&self) -> &[usize] {
        &self.axis_counts
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All grid points in lexicographic order.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Two grids are interchangeable when window, mesh, and counts agree
    /// exactly; their point lists are then identical.
    pub fn same_grid(&self, other: &GridSpec) -> bool {
        self.window == other.window
            && self.mesh == other.mesh
            && self.axis_counts == other.axis_counts
    }

    /// Flat index of the grid point matching `location` within a relative
    /// tolerance of 1e-9 per coordinate, or `None` if the location is not a
    /// grid point. Never interpolates.
    pub fn index_of(&self, location: &[f64]) -> Option<usize> {
        if location.len() != self.dim() {
            return None;
        }
        let mut flat = 0usize;
        for (axis, ((lo, _), x)) in self.window.bounds().iter().zip(location).enumerate() {
            let rel = (x - lo) / self.mesh;
            let i = rel.round();
            if i < 0.0 || (i as usize) >= self.axis_counts[axis] {
                return None;
            }
            let snapped = lo + i * self.mesh;
            if (snapped - x).abs() > GRID_SNAP_TOL * x.abs().max(1.0) {
                return None;
            }
            flat = flat * self.axis_counts[axis] + i as usize;
        }
        Some(flat)
    }
}

/// One realized field trajectory on a grid.
#[derive(Clone, Debug)]
pub struct FieldPath {
    grid: GridSpec,
    values: Vec<f64>,
    seed: u64,
    marginal: GaussianMarginal,
}

impl FieldPath {
    /// Wraps externally produced values (e.g. predictions) over a grid.
    pub fn from_values(
        grid: GridSpec,
        values: Vec<f64>,
        seed: u64,
        marginal: GaussianMarginal,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(FieldPath {
            grid,
            values,
            seed,
            marginal,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn marginal(&self) -> &GaussianMarginal {
        &self.marginal
    }
}

/// Reusable exact sampler for one (model, marginal, grid) combination.
///
/// Construction factorizes the grid covariance once; each [`sample`] call
/// then costs one matrix-vector product. Replications with distinct seeds
/// are fully independent streams.
///
/// [`sample`]: PathSampler::sample
pub struct PathSampler {
    grid: GridSpec,
    marginal: GaussianMarginal,
    factor_l: DMatrix<f64>,
    ridge_applied: f64,
}

impl PathSampler {
    pub fn new(
        model: &CovarianceModel,
        marginal: &GaussianMarginal,
        grid: &GridSpec,
    ) -> Result<Self> {
        check_marginal_consistency(model, marginal)?;
        if grid.len() > MAX_SIMULATION_POINTS {
            return Err(Error::invalid(format!(
                "grid has {} points; dense simulation is capped at {MAX_SIMULATION_POINTS}",
                grid.len()
            )));
        }
        let system = CovarianceSystem::from_points(model, grid.points())?;
        Ok(PathSampler {
            grid: grid.clone(),
            marginal: *marginal,
            factor_l: system.factor_l(),
            ridge_applied: system.ridge_applied(),
        })
    }

    /// Ridge added to the grid covariance before factorization (0 in the
    /// regular case).
    pub fn ridge_applied(&self) -> f64 {
        self.ridge_applied
    }

    /// Draws the path for `seed`. Deterministic: equal seeds give
    /// bit-identical paths.
    pub fn sample(&self, seed: u64) -> FieldPath {
        let n = self.grid.len();
        let mut rng = rng::chacha(seed);
        let z = DVector::from_fn(n, |_, _| rng::standard_normal(&mut rng));
        let correlated = &self.factor_l * z;
        let mu = self.marginal.mu();
        let values = correlated.iter().map(|v| mu + v).collect();
        FieldPath {
            grid: self.grid.clone(),
            values,
            seed,
            marginal: self.marginal,
        }
    }
}

/// Simulates one path of the field on `grid` (see [`PathSampler`] for the
/// mechanics; use it directly to amortize the factorization over many
/// seeds).
pub fn simulate_path(
    model: &CovarianceModel,
    marginal: &GaussianMarginal,
    grid: &GridSpec,
    seed: u64,
) -> Result<FieldPath> {
    Ok(PathSampler::new(model, marginal, grid)?.sample(seed))
}

/// Reads the path off at the given locations, which must all be grid points
/// (within 1e-9 relative per coordinate); values are never interpolated.
/// The returned observation set carries the exact grid coordinates, so
/// downstream cross-covariances reproduce covariance-matrix columns exactly
/// at observation points.
pub fn restrict_to_observations(
    path: &FieldPath,
    locations: &[Vec<f64>],
) -> Result<ObservationSet> {
    let mut snapped = Vec::with_capacity(locations.len());
    let mut values = Vec::with_capacity(locations.len());
    for (i, loc) in locations.iter().enumerate() {
        let idx = path
            .grid()
            .index_of(loc)
            .ok_or(Error::OffGridLocation { index: i })?;
        snapped.push(path.grid().points()[idx].clone());
        values.push(path.values()[idx]);
    }
    ObservationSet::new(snapped, values)
}

/// The marginal a simulation reproduces is `N(mu, model.sigma2)`; a marginal
/// whose sigma disagrees with the model would silently misreport every
/// downstream probability, so the combination is rejected up front.
pub fn check_marginal_consistency(
    model: &CovarianceModel,
    marginal: &GaussianMarginal,
) -> Result<()> {
    let var = marginal.sigma() * marginal.sigma();
    if (var - model.sigma2()).abs() > 1e-9 * model.sigma2() {
        return Err(Error::invalid(format!(
            "marginal variance {var} does not match model sigma2 {}",
            model.sigma2()
        )));
    }
    Ok(())
}
