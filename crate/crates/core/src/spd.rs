//! Solves against the factorized covariance system and the three scalar
//! quantities every closed-form predictor is built from.
//!
//! For a covariance matrix `S`, cross-covariance vector `c_t`, and the
//! all-ones vector `e`:
//!
//! ```text
//! b0 = c_t^T S^-1 c_t,   b1 = e^T S^-1 c_t,   b2 = e^T S^-1 e.
//! ```
//!
//! The solves reuse the system's Cholesky factor; no inverse is ever formed.
//! When the system carries a ridge (see
//! [`CovarianceSystem::ridge_applied`]), `S` means the ridged matrix — the
//! quantities stay internally consistent, which is what the weight formulas
//! need.

use crate::covariance::CovarianceSystem;
use crate::error::{Error, Result};
use nalgebra::DVector;

/// Scale-aware threshold on `b0 b2 - b1^2` below which `c_t` is treated as
/// numerically collinear with the ones vector.
const COLLINEARITY_TOL: f64 = 1e-10;

/// Solves `S x = rhs` through the stored Cholesky factor (forward then
/// backward substitution).
pub fn solve_spd(system: &CovarianceSystem, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    system.solve(rhs)
}

/// The scalar quantities `b0`, `b1`, `b2` for one prediction point, along
/// with the two solve results they came from (reused by the weight
/// formulas, so nothing is solved twice).
#[derive(Clone, Debug)]
pub struct BQuantities {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    sigma_inv_ct: DVector<f64>,
    sigma_inv_e: DVector<f64>,
}

/// Computes [`BQuantities`] for the given system and cross-covariance
/// vector.
pub fn b_quantities(system: &CovarianceSystem, ct: &DVector<f64>) -> Result<BQuantities> {
    if ct.len() != system.n() {
        return Err(Error::invalid(format!(
            "cross-covariance vector has length {}, system has {}",
            ct.len(),
            system.n()
        )));
    }
    let e = DVector::from_element(system.n(), 1.0);
    let sigma_inv_ct = system.solve(ct)?;
    let sigma_inv_e = system.solve(&e)?;
    let b0 = ct.dot(&sigma_inv_ct);
    let b1 = sigma_inv_ct.sum();
    let b2 = sigma_inv_e.sum();
    if !(b0.is_finite() && b1.is_finite() && b2.is_finite()) {
        return Err(Error::Numerical(
            "b-quantities are not finite; covariance system is unusable".into(),
        ));
    }
    if b2 <= 0.0 {
        return Err(Error::Numerical(format!(
            "e^T S^-1 e = {b2} must be positive for a positive-definite system"
        )));
    }
    Ok(BQuantities {
        b0,
        b1,
        b2,
        sigma_inv_ct,
        sigma_inv_e,
    })
}

impl BQuantities {
    /// Cached solve `S^-1 c_t`.
    pub fn sigma_inv_ct(&self) -> &DVector<f64> {
        &self.sigma_inv_ct
    }

    /// Cached solve `S^-1 e`.
    pub fn sigma_inv_e(&self) -> &DVector<f64> {
        &self.sigma_inv_e
    }

    /// The Gram determinant `b0 b2 - b1^2` of `{c_t, e}` in the `S^-1`
    /// inner product; non-negative up to rounding by Cauchy-Schwarz.
    pub fn gram_det(&self) -> f64 {
        self.b0 * self.b2 - self.b1 * self.b1
    }

    /// Whether `c_t` is numerically collinear with the ones vector (the
    /// degenerate geometry in which the constrained maximizer is not
    /// unique). Scale-aware: the Gram determinant is compared against
    /// `1e-10 * max(b0 b2, 1)`.
    pub fn is_collinear(&self) -> bool {
        self.gram_det() <= COLLINEARITY_TOL * (self.b0 * self.b2).max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{CovarianceModel, CovarianceSystem, ObservationSet};
    use nalgebra::{DMatrix, DVector};

    fn system_from(rows: usize, entries: &[f64]) -> CovarianceSystem {
        CovarianceSystem::from_matrix(DMatrix::from_row_slice(rows, rows, entries)).unwrap()
    }

    #[test]
    fn solve_matches_hand_computed_example() {
        let sys = system_from(2, &[1.0, 0.5, 0.5, 1.0]);
        let x = solve_spd(&sys, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-12, "x = {x}");
        assert!((x[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_wrong_length() {
        let sys = system_from(2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(solve_spd(&sys, &DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn residual_contract_on_irregular_designs() {
        let model = CovarianceModel::gaussian(2.0, 1.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![0.9 * i as f64 + 0.21 * ((i * 3) % 5) as f64])
            .collect();
        let obs = ObservationSet::new(pts, vec![0.0; 30]).unwrap();
        let sys = CovarianceSystem::build_sigma(&model, &obs).unwrap();
        // Deterministic but irregular right-hand sides.
        for k in 0..5 {
            let rhs = DVector::from_fn(30, |i, _| ((i * 7 + k * 13) % 11) as f64 - 5.0);
            let x = solve_spd(&sys, &rhs).unwrap();
            let mut lhs = sys.sigma() * &x;
            if sys.ridge_applied() > 0.0 {
                lhs += sys.ridge_applied() * &x;
            }
            let resid = (lhs - &rhs).norm();
            assert!(
                resid <= 1e-8 * rhs.norm(),
                "residual {resid:e} too large for rhs {k}"
            );
        }
    }

    #[test]
    fn b_quantities_match_identity_design() {
        let sys = system_from(2, &[1.0, 0.0, 0.0, 1.0]);
        let ct = DVector::from_vec(vec![0.5, 0.25]);
        let bq = b_quantities(&sys, &ct).unwrap();
        assert!((bq.b0 - 0.3125).abs() < 1e-15, "b0 = {}", bq.b0);
        assert!((bq.b1 - 0.75).abs() < 1e-15, "b1 = {}", bq.b1);
        assert!((bq.b2 - 2.0).abs() < 1e-15, "b2 = {}", bq.b2);
        assert!(!bq.is_collinear());
        assert_eq!(bq.sigma_inv_ct(), &ct);
    }

    #[test]
    fn b_quantities_at_observation_points() {
        // c_t equal to a matrix column: S^-1 c_t = e_j, b0 = sigma2, b1 = 1.
        let model = CovarianceModel::exponential(1.5, 2.0).unwrap();
        let obs = ObservationSet::new(
            vec![vec![0.0], vec![1.0], vec![3.5], vec![4.1]],
            vec![0.0; 4],
        )
        .unwrap();
        let sys = CovarianceSystem::build_sigma(&model, &obs).unwrap();
        for j in 0..4 {
            let ct = DVector::from_fn(4, |l, _| sys.sigma()[(l, j)]);
            let bq = b_quantities(&sys, &ct).unwrap();
            assert!(
                (bq.b0 - 1.5).abs() < 1e-10,
                "b0 at observation {j}: {}",
                bq.b0
            );
            assert!((bq.b1 - 1.0).abs() < 1e-10, "b1 at observation {j}: {}", bq.b1);
            for l in 0..4 {
                let want = if l == j { 1.0 } else { 0.0 };
                assert!(
                    (bq.sigma_inv_ct()[l] - want).abs() < 1e-10,
                    "S^-1 c_t is not e_{j}"
                );
            }
        }
    }

    #[test]
    fn collinearity_detected_for_single_observation() {
        let sys = system_from(1, &[2.0]);
        let bq = b_quantities(&sys, &DVector::from_vec(vec![0.7])).unwrap();
        // With n = 1 the Gram determinant vanishes identically.
        assert!(bq.gram_det().abs() < 1e-15);
        assert!(bq.is_collinear());
    }

    #[test]
    fn collinearity_detected_when_ct_parallel_to_ones() {
        let sys = system_from(2, &[1.0, 0.25, 0.25, 1.0]);
        let bq = b_quantities(&sys, &DVector::from_vec(vec![0.6, 0.6])).unwrap();
        assert!(bq.is_collinear());
    }

    #[test]
    fn rejects_mismatched_ct() {
        let sys = system_from(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(b_quantities(&sys, &DVector::from_vec(vec![1.0])).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::covariance::{CovarianceModel, CovarianceSystem, ObservationSet};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn arbitrary_design() -> impl Strategy<Value = (Vec<f64>, f64)> {
        // Sorted, well-separated 1-d locations plus a prediction point.
        (2usize..12, -5.0f64..5.0).prop_flat_map(|(n, t)| {
            (
                proptest::collection::vec(0.3f64..1.5, n),
                Just(t),
            )
                .prop_map(|(gaps, t)| {
                    let mut loc = Vec::with_capacity(gaps.len());
                    let mut x = 0.0;
                    for g in gaps {
                        x += g;
                        loc.push(x);
                    }
                    (loc, t)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn cauchy_schwarz_holds((locs, t) in arbitrary_design()) {
            let model = CovarianceModel::exponential(1.0, 1.0).unwrap();
            let obs = ObservationSet::new(
                locs.iter().map(|x| vec![*x]).collect(),
                vec![0.0; locs.len()],
            ).unwrap();
            let sys = CovarianceSystem::build_sigma(&model, &obs).unwrap();
            let ct = crate::covariance::build_ct(&model, &obs, &[t]).unwrap();
            let bq = b_quantities(&sys, &ct).unwrap();
            prop_assert!(bq.b2 > 0.0);
            prop_assert!(bq.b0 >= -1e-12);
            prop_assert!(
                bq.b1 * bq.b1 <= bq.b0 * bq.b2 + 1e-10 * (bq.b0 * bq.b2).max(1.0),
                "Cauchy-Schwarz violated: b0={} b1={} b2={}", bq.b0, bq.b1, bq.b2
            );
        }

        #[test]
        fn solve_residuals_stay_small((locs, _t) in arbitrary_design()) {
            let model = CovarianceModel::gaussian(1.0, 1.0).unwrap();
            let obs = ObservationSet::new(
                locs.iter().map(|x| vec![*x]).collect(),
                vec![0.0; locs.len()],
            ).unwrap();
            let sys = CovarianceSystem::build_sigma(&model, &obs).unwrap();
            let rhs = DVector::from_fn(locs.len(), |i, _| (i as f64 * 0.77).sin());
            let x = solve_spd(&sys, &rhs).unwrap();
            let mut lhs = sys.sigma() * &x;
            if sys.ridge_applied() > 0.0 {
                lhs += sys.ridge_applied() * &x;
            }
            prop_assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm().max(1e-300));
        }
    }
}
