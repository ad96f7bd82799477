//! Linear predictors: excursion-faithful weights (known and unknown mean),
//! kriging baselines, closed-form mean-squared errors, and a Monte-Carlo
//! feasible-point check of optimality.
//!
//! The excursion-faithful ("level-set") predictors maximize the
//! cross-covariance `c_t^T lambda` subject to exact marginal reproduction:
//! `lambda^T Sigma lambda = sigma^2`, plus `<lambda, e> = 1` when the mean
//! is unknown. Maximizing `c_t^T lambda` maximizes the correlation between
//! predictor and field, and with it the expected overlap of their excursion
//! sets at every level simultaneously. With the scalars
//! `b0 = c_t^T Sigma^-1 c_t`, `b1 = e^T Sigma^-1 c_t`,
//! `b2 = e^T Sigma^-1 e`, the maximizers are
//!
//! ```text
//! unknown mean:  lambda = sqrt((sigma^2 b2 - 1)/(b0 b2 - b1^2))
//!                         * Sigma^-1 (c_t - (b1/b2) e)  +  Sigma^-1 e / b2
//! known mean:    lambda = sigma * Sigma^-1 c_t / sqrt(b0)
//! ```
//!
//! Degenerate geometry (`c_t` collinear with the ones vector, a single
//! observation, or `c_t = 0` for the known-mean case) leaves the maximizer
//! non-unique; the tie-break picks the unit weight on the observation
//! nearest to the prediction point, which keeps predictions exact at
//! observation locations.

use crate::covariance::{CovarianceSystem, ObservationSet};
use crate::error::{Error, Result};
use crate::rng;
use crate::spd::{b_quantities, BQuantities};
use crate::special::GaussianMarginal;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative clamp window for the discriminants `sigma^2 b2 - 1` and
/// `b0 b2 - b1^2`: values this far below zero are rounding, anything more
/// negative is a numerical failure.
const DISCRIMINANT_TOL: f64 = 1e-10;

/// The four prediction methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "levelset_unknown_mean")]
    LevelSetUnknownMean,
    #[serde(rename = "levelset_known_mean")]
    LevelSetKnownMean,
    #[serde(rename = "simple_kriging")]
    SimpleKriging,
    #[serde(rename = "ordinary_kriging")]
    OrdinaryKriging,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::LevelSetUnknownMean,
        Method::LevelSetKnownMean,
        Method::SimpleKriging,
        Method::OrdinaryKriging,
    ];

    /// Stable identifier used in CSV output and configuration files.
    pub fn name(&self) -> &'static str {
        match self {
            Method::LevelSetUnknownMean => "levelset_unknown_mean",
            Method::LevelSetKnownMean => "levelset_known_mean",
            Method::SimpleKriging => "simple_kriging",
            Method::OrdinaryKriging => "ordinary_kriging",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method \"{name}\" (expected one of: {})",
                    Method::ALL.map(|m| m.name()).join(", ")
                ))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Why a weight vector fell back to the tie-break solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degeneracy {
    /// `c_t` is numerically collinear with the ones vector (always the case
    /// for a single observation): the ellipsoid-and-hyperplane maximizer is
    /// not unique.
    CollinearWithOnes,
    /// `c_t = 0`: every point of the ellipsoid attains the same (zero)
    /// objective for the known-mean predictor.
    ZeroCrossCovariance,
}

/// A weight vector together with the attained objective `c_t^T lambda` and
/// the degeneracy flag (`None` in the regular case).
#[derive(Clone, Debug)]
pub struct PredictorWeights {
    method: Method,
    lambda: DVector<f64>,
    objective: f64,
    degeneracy: Option<Degeneracy>,
}

impl PredictorWeights {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// The attained cross-covariance `c_t^T lambda`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn degeneracy(&self) -> Option<Degeneracy> {
        self.degeneracy
    }

    pub fn is_degenerate(&self) -> bool {
        self.degeneracy.is_some()
    }
}

fn check_inputs(
    system: &CovarianceSystem,
    ct: &DVector<f64>,
    sigma2: f64,
    nearest: usize,
) -> Result<()> {
    if ct.len() != system.n() {
        return Err(Error::invalid(format!(
            "cross-covariance vector has length {}, system has {}",
            ct.len(),
            system.n()
        )));
    }
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(Error::invalid(format!(
            "sigma2 must be positive and finite, got {sigma2}"
        )));
    }
    if (sigma2 - system.sigma2()).abs() > 1e-9 * system.sigma2() {
        return Err(Error::invalid(format!(
            "sigma2 = {sigma2} disagrees with the system's diagonal {}",
            system.sigma2()
        )));
    }
    if nearest >= system.n() {
        return Err(Error::invalid(format!(
            "tie-break index {nearest} out of range for {} observations",
            system.n()
        )));
    }
    Ok(())
}

/// Clamps a discriminant that is non-negative in exact arithmetic: tiny
/// negative values (within `DISCRIMINANT_TOL` relative to `scale`) are
/// rounding and become 0; anything more negative is reported as a failure.
fn clamp_discriminant(value: f64, scale: f64, what: &str) -> Result<f64> {
    if value >= 0.0 {
        return Ok(value);
    }
    if value >= -DISCRIMINANT_TOL * scale.abs().max(1.0) {
        return Ok(0.0);
    }
    Err(Error::Numerical(format!(
        "{what} = {value} is negative beyond rounding tolerance"
    )))
}

fn unit_weight(n: usize, index: usize) -> DVector<f64> {
    let mut lambda = DVector::zeros(n);
    lambda[index] = 1.0;
    lambda
}

/// Excursion-faithful weights when the mean is unknown: maximizes
/// `c_t^T lambda` over `lambda^T Sigma lambda = sigma^2`,
/// `<lambda, e> = 1`.
///
/// `nearest` is the index of the observation closest to the prediction
/// point (see [`ObservationSet::nearest_to`]); it is only consulted in the
/// degenerate case.
pub fn levelset_unknown_mean(
    system: &CovarianceSystem,
    ct: &DVector<f64>,
    sigma2: f64,
    nearest: usize,
) -> Result<PredictorWeights> {
    check_inputs(system, ct, sigma2, nearest)?;
    let bq = b_quantities(system, ct)?;
    let disc1 = clamp_discriminant(sigma2 * bq.b2 - 1.0, sigma2 * bq.b2, "sigma^2 b2 - 1")?;
    if system.n() == 1 || bq.is_collinear() {
        let lambda = unit_weight(system.n(), nearest);
        return Ok(PredictorWeights {
            method: Method::LevelSetUnknownMean,
            objective: ct[nearest],
            lambda,
            degeneracy: Some(Degeneracy::CollinearWithOnes),
        });
    }
    let disc2 = clamp_discriminant(bq.gram_det(), bq.b0 * bq.b2, "b0 b2 - b1^2")?;
    let factor = (disc1 / disc2).sqrt();
    let beta = bq.b1 / bq.b2;
    let lambda = bq.sigma_inv_ct() - bq.sigma_inv_e() * beta;
    let lambda = lambda * factor + bq.sigma_inv_e() / bq.b2;
    let objective = ct.dot(&lambda);
    Ok(PredictorWeights {
        method: Method::LevelSetUnknownMean,
        lambda,
        objective,
        degeneracy: None,
    })
}

/// Excursion-faithful weights when the mean is known (the field is
/// centered before prediction): maximizes `c_t^T lambda` over
/// `lambda^T Sigma lambda = sigma^2` alone.
pub fn levelset_known_mean(
    system: &CovarianceSystem,
    ct: &DVector<f64>,
    sigma2: f64,
    nearest: usize,
) -> Result<PredictorWeights> {
    check_inputs(system, ct, sigma2, nearest)?;
    let bq = b_quantities(system, ct)?;
    if ct.amax() == 0.0 || bq.b0 <= 0.0 {
        let lambda = unit_weight(system.n(), nearest);
        return Ok(PredictorWeights {
            method: Method::LevelSetKnownMean,
            objective: ct[nearest],
            lambda,
            degeneracy: Some(Degeneracy::ZeroCrossCovariance),
        });
    }
    let lambda = bq.sigma_inv_ct() * (sigma2.sqrt() / bq.b0.sqrt());
    let objective = ct.dot(&lambda);
    Ok(PredictorWeights {
        method: Method::LevelSetKnownMean,
        lambda,
        objective,
        degeneracy: None,
    })
}

/// Simple kriging weights `Sigma^-1 c_t` (pointwise-MSE optimal with known
/// mean; shrinks toward the mean away from the observations).
pub fn simple_kriging(system: &CovarianceSystem, ct: &DVector<f64>) -> Result<PredictorWeights> {
    check_inputs(system, ct, system.sigma2(), 0)?;
    let bq = b_quantities(system, ct)?;
    let lambda = bq.sigma_inv_ct().clone();
    let objective = ct.dot(&lambda);
    Ok(PredictorWeights {
        method: Method::SimpleKriging,
        lambda,
        objective,
        degeneracy: None,
    })
}

/// Ordinary kriging weights `Sigma^-1 (c_t + delta e)` with
/// `delta = (1 - b1)/b2`, the unbiased pointwise-MSE optimum.
pub fn ordinary_kriging(system: &CovarianceSystem, ct: &DVector<f64>) -> Result<PredictorWeights> {
    check_inputs(system, ct, system.sigma2(), 0)?;
    let bq = b_quantities(system, ct)?;
    let delta = (1.0 - bq.b1) / bq.b2;
    let lambda = bq.sigma_inv_ct() + bq.sigma_inv_e() * delta;
    let objective = ct.dot(&lambda);
    Ok(PredictorWeights {
        method: Method::OrdinaryKriging,
        lambda,
        objective,
        degeneracy: None,
    })
}

/// Computes weights for `method`; one entry point for the study harness.
pub fn weights_for(
    method: Method,
    system: &CovarianceSystem,
    ct: &DVector<f64>,
    sigma2: f64,
    nearest: usize,
) -> Result<PredictorWeights> {
    match method {
        Method::LevelSetUnknownMean => levelset_unknown_mean(system, ct, sigma2, nearest),
        Method::LevelSetKnownMean => levelset_known_mean(system, ct, sigma2, nearest),
        Method::SimpleKriging => simple_kriging(system, ct),
        Method::OrdinaryKriging => ordinary_kriging(system, ct),
    }
}

/// Evaluates the prediction `X^(t)` from weights and observed values.
///
/// Mean-using methods (simple kriging, known-mean level set) predict
/// `mu + lambda^T (x - mu e)`; the mean-free methods apply the weights to
/// the raw values (their weights sum to one).
pub fn predict(
    weights: &PredictorWeights,
    observations: &ObservationSet,
    marginal: &GaussianMarginal,
) -> Result<f64> {
    if weights.lambda.len() != observations.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} observations",
            weights.lambda.len(),
            observations.len()
        )));
    }
    let raw: f64 = weights
        .lambda
        .iter()
        .zip(observations.values())
        .map(|(l, x)| l * x)
        .sum();
    match weights.method {
        Method::SimpleKriging | Method::LevelSetKnownMean => {
            let mu = marginal.mu();
            Ok(mu + raw - mu * weights.lambda.sum())
        }
        Method::LevelSetUnknownMean | Method::OrdinaryKriging => Ok(raw),
    }
}

/// Closed-form mean-squared prediction error of `method` at a point with
/// the given b-quantities.
pub fn mse(method: Method, bq: &BQuantities, sigma2: f64) -> Result<f64> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(Error::invalid(format!(
            "sigma2 must be positive and finite, got {sigma2}"
        )));
    }
    let value = match method {
        Method::LevelSetUnknownMean => {
            let disc1 =
                clamp_discriminant(sigma2 * bq.b2 - 1.0, sigma2 * bq.b2, "sigma^2 b2 - 1")?;
            let disc2 = clamp_discriminant(bq.gram_det(), bq.b0 * bq.b2, "b0 b2 - b1^2")?;
            2.0 * (sigma2 - bq.b1 / bq.b2 - (disc1 * disc2).sqrt() / bq.b2)
        }
        Method::LevelSetKnownMean => {
            let b0 = clamp_discriminant(bq.b0, bq.b0, "b0")?;
            let sigma = sigma2.sqrt();
            2.0 * sigma * (sigma - b0.sqrt())
        }
        Method::SimpleKriging => sigma2 - bq.b0,
        Method::OrdinaryKriging => {
            let shift = 1.0 - bq.b1;
            sigma2 - bq.b0 + shift * shift / bq.b2
        }
    };
    Ok(value.max(0.0))
}

/// Feasible set for the Monte-Carlo optimality check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintSet {
    /// `lambda^T Sigma lambda = sigma^2` only (known mean).
    Ellipsoid,
    /// The ellipsoid intersected with `<lambda, e> = 1` (unknown mean).
    EllipsoidSimplex,
}

/// Best objective found by sampling feasible weight vectors uniformly; a
/// lower bound (up to sampling resolution) on the true constrained maximum.
///
/// Ellipsoid sampling maps uniform sphere directions through the inverse
/// transposed Cholesky factor; the simplex case samples the boundary of the
/// lower-dimensional ellipsoid obtained by restricting to the affine slice
/// `<lambda, e> = 1`. Both constructions produce exactly feasible points.
pub fn brute_force_objective(
    system: &CovarianceSystem,
    ct: &DVector<f64>,
    sigma2: f64,
    constraint: ConstraintSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_inputs(system, ct, sigma2, 0)?;
    let n = system.n();
    if n > 6 {
        return Err(Error::invalid(format!(
            "brute-force check is limited to n <= 6 observations, got {n}"
        )));
    }
    if samples < 100_000 {
        return Err(Error::invalid(format!(
            "brute-force check needs at least 100000 samples, got {samples}"
        )));
    }
    let mut rng = rng::chacha(seed);
    let mut best = f64::NEG_INFINITY;
    match constraint {
        ConstraintSet::Ellipsoid => {
            // lambda = sigma L^-T w with |w| = 1 lies exactly on the
            // ellipsoid boundary.
            let lt = system.factor_l().transpose();
            let sigma = sigma2.sqrt();
            let mut w = DVector::zeros(n);
            for _ in 0..samples {
                draw_unit_sphere(&mut rng, &mut w);
                let lambda = lt
                    .solve_upper_triangular(&w)
                    .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
                let value = sigma * ct.dot(&lambda);
                if value > best {
                    best = value;
                }
            }
        }
        ConstraintSet::EllipsoidSimplex => {
            if n == 1 {
                // The feasible set is the single point lambda = (1).
                return Ok(ct[0]);
            }
            let bq = b_quantities(system, ct)?;
            // Center of the slice: the minimum-variance point of the
            // hyperplane, Sigma^-1 e / b2, with squared radius
            // sigma^2 - 1/b2 in the Sigma metric.
            let center = bq.sigma_inv_e() / bq.b2;
            let radius2 = clamp_discriminant(
                sigma2 - 1.0 / bq.b2,
                sigma2,
                "sigma^2 - 1/b2",
            )?;
            let radius = radius2.sqrt();
            let basis = ones_complement_basis(n);
            // Restrict the (ridged) covariance to the slice directions.
            let mut sigma_eff = system.sigma().clone();
            if system.ridge_applied() > 0.0 {
                for j in 0..n {
                    sigma_eff[(j, j)] += system.ridge_applied();
                }
            }
            let restricted = basis.transpose() * &sigma_eff * &basis;
            let factor = nalgebra::Cholesky::new(restricted).ok_or_else(|| {
                Error::Numerical("restricted covariance failed to factor".into())
            })?;
            let mt = factor.l().transpose();
            let ct_center = ct.dot(&center);
            let ct_basis = ct.transpose() * &basis;
            let mut w = DVector::zeros(n - 1);
            for _ in 0..samples {
                draw_unit_sphere(&mut rng, &mut w);
                let v = mt
                    .solve_upper_triangular(&w)
                    .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
                let value = ct_center + radius * ct_basis.tr_dot(&v);
                if value > best {
                    best = value;
                }
            }
        }
    }
    Ok(best)
}

/// Uniform direction on the unit sphere: normalized standard-normal vector.
fn draw_unit_sphere(rng: &mut rand_chacha::ChaCha12Rng, out: &mut DVector<f64>) {
    loop {
        for v in out.iter_mut() {
            *v = rng::standard_normal(rng);
        }
        let norm = out.norm();
        if norm > 1e-12 {
            *out /= norm;
            return;
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the ones vector: the
/// first `n - 1` columns of the Householder reflection exchanging `e/sqrt(n)`
/// and the last coordinate axis.
fn ones_complement_basis(n: usize) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    let mut v = DVector::from_element(n, scale);
    v[n - 1] -= 1.0;
    let norm2 = v.norm_squared();
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= 2.0 * v[i] * v[j] / norm2;
        }
    }
    h.columns(0, n - 1).into_owned()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::covariance::{build_ct, CovarianceModel, CovarianceSystem, ObservationSet};
    use proptest::prelude::*;

    fn design() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
        (2usize..10, -3.0f64..12.0, 0.25f64..4.0).prop_flat_map(|(n, t, sigma2)| {
            (proptest::collection::vec(0.4f64..2.0, n), Just(t), Just(sigma2))
                .prop_map(|(gaps, t, sigma2)| {
                    let mut loc = Vec::with_capacity(gaps.len());
                    let mut x = 0.0;
                    for g in gaps {
                        x += g;
                        loc.push(x);
                    }
                    (loc, t, sigma2)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(150))]

        #[test]
        fn constraints_and_ordering_hold((locs, t, sigma2) in design()) {
            let model = CovarianceModel::exponential(sigma2, 1.0).unwrap();
            let obs = ObservationSet::new(
                locs.iter().map(|x| vec![*x]).collect(),
                vec![0.0; locs.len()],
            ).unwrap();
            let sys = CovarianceSystem::build_sigma(&model, &obs).unwrap();
            let ct = build_ct(&model, &obs, &[t]).unwrap();
            let nearest = obs.nearest_to(&[t]);
            let unknown = levelset_unknown_mean(&sys, &ct, sigma2, nearest).unwrap();
            let known = levelset_known_mean(&sys, &ct, sigma2, nearest).unwrap();
            let var_u = (sys.sigma() * unknown.lambda()).dot(unknown.lambda());
            let var_k = (sys.sigma() * known.lambda()).dot(known.lambda());
            prop_assert!((var_u - sigma2).abs() < 1e-8 * sigma2);
            prop_assert!((var_k - sigma2).abs() < 1e-8 * sigma2);
            prop_assert!((unknown.lambda().sum() - 1.0).abs() < 1e-10);
            // The extra constraint can only lower the attainable objective.
            prop_assert!(unknown.objective() <= known.objective() + 1e-9);
            // MSE never below zero, never above the no-information bound.
            let bq = crate::spd::b_quantities(&sys, &ct).unwrap();
            for method in [Method::LevelSetUnknownMean, Method::LevelSetKnownMean] {
                let e = mse(method, &bq, sigma2).unwrap();
                prop_assert!((0.0..=4.0 * sigma2 + 1e-9).contains(&e));
            }
        }
    }
}
