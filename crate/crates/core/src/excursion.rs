//! Excursion sets and the symmetric-difference error they induce.
//!
//! The excursion set of a field at level `u` is the region where the field
//! exceeds `u` (strictly — on a grid, values equal to the level count as
//! outside). The quality measure throughout is the volume of the symmetric
//! difference between the excursion sets of the truth and of a prediction,
//! discretized as cell volume times the number of grid points where the two
//! indicators disagree.

use crate::error::{Error, Result};
use crate::simulate::{FieldPath, GridSpec};
use crate::special::{joint_exceedance, normal_sf, GaussianMarginal};
use serde::{Deserialize, Serialize};

/// A sorted set of excursion levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ExcursionLevels {
    levels: Vec<f64>,
}

impl ExcursionLevels {
    /// Sorts the levels ascending; rejects empty input, non-finite values,
    /// and exact duplicates.
    pub fn new(mut levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("need at least one excursion level"));
        }
        if levels.iter().any(|u| !u.is_finite()) {
            return Err(Error::invalid("excursion levels must be finite"));
        }
        levels.sort_by(|a, b| a.partial_cmp(b).expect("finite levels compare"));
        if levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate excursion level"));
        }
        Ok(ExcursionLevels { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<Vec<f64>> for ExcursionLevels {
    type Error = Error;

    fn try_from(levels: Vec<f64>) -> Result<Self> {
        ExcursionLevels::new(levels)
    }
}

impl From<ExcursionLevels> for Vec<f64> {
    fn from(levels: ExcursionLevels) -> Vec<f64> {
        levels.levels
    }
}

/// Pointwise excursion indicator of a sampled path: `value > level`.
pub fn excursion_indicator(path: &FieldPath, level: f64) -> Vec<bool> {
    indicator_values(path.values(), level)
}

/// Slice-level indicator, for callers that carry values without a grid.
pub fn indicator_values(values: &[f64], level: f64) -> Vec<bool> {
    values.iter().map(|v| *v > level).collect()
}

fn cell_volume(grid: &GridSpec) -> f64 {
    grid.mesh().powi(grid.dim() as i32)
}

/// Discretized volume of the symmetric difference between the excursion
/// sets of two paths on the same grid.
pub fn symmetric_difference_volume(a: &FieldPath, b: &FieldPath, level: f64) -> Result<f64> {
    if !a.grid().same_grid(b.grid()) {
        return Err(Error::GridMismatch(
            "symmetric difference needs both paths on one grid".into(),
        ));
    }
    symmetric_difference_from_values(a.values(), b.values(), level, cell_volume(a.grid()))
}

/// Slice-level symmetric difference: disagreement count times cell volume.
pub fn symmetric_difference_from_values(
    a: &[f64],
    b: &[f64],
    level: f64,
    cell: f64,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "value vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if !cell.is_finite() || cell <= 0.0 {
        return Err(Error::invalid(format!("cell volume must be positive, got {cell}")));
    }
    let disagreements = a
        .iter()
        .zip(b)
        .filter(|(x, y)| (**x > level) != (**y > level))
        .count();
    Ok(cell * disagreements as f64)
}

/// Per-level symmetric-difference volumes and their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionErrorReport {
    /// `(level, volume)` pairs in ascending level order.
    pub per_level: Vec<(f64, f64)>,
    /// Sum of the per-level volumes.
    pub total: f64,
}

/// Evaluates the symmetric-difference error of `predicted` against `truth`
/// at every level.
pub fn error_report(
    truth: &FieldPath,
    predicted: &FieldPath,
    levels: &ExcursionLevels,
) -> Result<ExcursionErrorReport> {
    let mut per_level = Vec::with_capacity(levels.len());
    let mut total = 0.0;
    for &u in levels.levels() {
        let volume = symmetric_difference_volume(truth, predicted, u)?;
        per_level.push((u, volume));
        total += volume;
    }
    Ok(ExcursionErrorReport { per_level, total })
}

/// Expected symmetric-difference volume, summed over levels, for a
/// predictor whose joint law with the field is bivariate normal with
/// correlation `rho` at every point of a window of the given volume:
///
/// ```text
/// 2 * volume * sum_u [ P(X > u) - P(X > u, Xhat > u) ]
/// ```
///
/// This is what the excursion-faithful weights minimize by maximizing the
/// joint exceedance.
pub fn expected_error_decomposition(
    rho: f64,
    levels: &ExcursionLevels,
    marginal: &GaussianMarginal,
    window_volume: f64,
) -> Result<f64> {
    if !window_volume.is_finite() || window_volume <= 0.0 {
        return Err(Error::invalid(format!(
            "window volume must be positive, got {window_volume}"
        )));
    }
    let mut sum = 0.0;
    for &u in levels.levels() {
        let sf = normal_sf(u, marginal);
        let joint = joint_exceedance(u, rho, marginal)?;
        sum += sf - joint;
    }
    Ok(2.0 * window_volume * sum.max(0.0))
}
