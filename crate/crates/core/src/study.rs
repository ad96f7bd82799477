//! Reproducible simulation studies: repeated path simulation, prediction on
//! a fine evaluation grid, excursion-set error per level, per-replication
//! variance of the predicted paths, closed-form MSE curves, and a mesh
//! refinement experiment for the consistency bound.
//!
//! Determinism contract: every replication draws from a counter-derived
//! stream seeded by `(master_seed, replication index)`, so results are
//! byte-identical across runs and across thread counts.

use crate::covariance::{build_ct, CovarianceModel, CovarianceSystem, ObservationSet, Window};
use crate::error::{Error, Result};
use crate::excursion::ExcursionLevels;
use crate::predictors::{mse, weights_for, Method};
use crate::rng;
use crate::simulate::{
    restrict_to_observations, GridSpec, PathSampler, MAX_SIMULATION_POINTS,
};
use crate::spd::b_quantities;
use crate::special::GaussianMarginal;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative tolerance for the observation-mesh / evaluation-mesh ratio
/// being an integer, so observation sites land exactly on the evaluation
/// grid.
const MESH_RATIO_TOL: f64 = 1e-9;

/// Full description of a simulation study.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: CovarianceModel,
    pub marginal: GaussianMarginal,
    pub window: Window,
    /// Mesh of the coarse grid whose points are observed.
    pub obs_mesh: f64,
    /// Mesh of the fine grid where paths are simulated and predictions
    /// evaluated; must divide `obs_mesh`.
    pub eval_mesh: f64,
    pub levels: ExcursionLevels,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub master_seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        crate::simulate::check_marginal_consistency(&self.model, &self.marginal)?;
        if !self.obs_mesh.is_finite() || self.obs_mesh <= 0.0 {
            return Err(Error::invalid(format!(
                "obs_mesh must be positive, got {}",
                self.obs_mesh
            )));
        }
        if !self.eval_mesh.is_finite() || self.eval_mesh <= 0.0 {
            return Err(Error::invalid(format!(
                "eval_mesh must be positive, got {}",
                self.eval_mesh
            )));
        }
        if self.eval_mesh > self.obs_mesh {
            return Err(Error::invalid(format!(
                "eval_mesh = {} must not exceed obs_mesh = {}",
                self.eval_mesh, self.obs_mesh
            )));
        }
        let ratio = self.obs_mesh / self.eval_mesh;
        if (ratio - ratio.round()).abs() > MESH_RATIO_TOL * ratio {
            return Err(Error::invalid(format!(
                "obs_mesh / eval_mesh = {ratio} is not an integer: observations \
                 would fall off the evaluation grid"
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("need at least one method"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::invalid(format!("method {m} listed twice")));
            }
        }
        if self.replications == 0 {
            return Err(Error::invalid("need at least one replication"));
        }
        let eval = GridSpec::new(self.window.clone(), self.eval_mesh)?;
        if eval.len() > MAX_SIMULATION_POINTS {
            return Err(Error::invalid(format!(
                "evaluation grid has {} points; dense simulation is capped at {}",
                eval.len(),
                MAX_SIMULATION_POINTS
            )));
        }
        Ok(())
    }
}

/// One symmetric-difference volume: replication x method x level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub replication: usize,
    pub method: Method,
    pub level: f64,
    pub sym_diff: f64,
}

/// Sample variance (denominator `n - 1`) of one method's predicted path
/// over the evaluation grid, per replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub method: Method,
    pub replication: usize,
    pub var_hat: f64,
}

/// Five-number-plus-mean summary of the per-replication symmetric
/// differences at one (method, level) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub level: f64,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Closed-form pointwise MSE of one method at one evaluation-grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub method: Method,
    pub location: Vec<f64>,
    pub mse: f64,
}

/// Everything a study produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub raw: Vec<RawRow>,
    pub summary: Vec<SummaryRow>,
    pub variance: Vec<VarianceRow>,
    pub mse_curve: Vec<MseRow>,
}

/// Per evaluation point: prediction as `offset + lambda . x_obs`, one pair
/// per configured method.
struct PointPlan {
    weights: Vec<(DVector<f64>, f64)>,
}

fn plan_points(
    config: &StudyConfig,
    system: &CovarianceSystem,
    obs_template: &ObservationSet,
    eval_grid: &GridSpec,
) -> Result<(Vec<PointPlan>, Vec<MseRow>)> {
    let sigma2 = config.model.sigma2();
    let mu = config.marginal.mu();
    let mut plans = Vec::with_capacity(eval_grid.len());
    let mut mse_rows: Vec<Vec<MseRow>> = vec![Vec::new(); config.methods.len()];
    for t in eval_grid.points() {
        let ct = build_ct(&config.model, obs_template, t)?;
        let bq = b_quantities(system, &ct)?;
        let nearest = obs_template.nearest_to(t);
        let mut weights = Vec::with_capacity(config.methods.len());
        for (mi, &method) in config.methods.iter().enumerate() {
            let w = weights_for(method, system, &ct, sigma2, nearest)?;
            let offset = match method {
                Method::SimpleKriging | Method::LevelSetKnownMean => {
                    mu * (1.0 - w.lambda().sum())
                }
                Method::LevelSetUnknownMean | Method::OrdinaryKriging => 0.0,
            };
            weights.push((w.lambda().clone(), offset));
            mse_rows[mi].push(MseRow {
                method,
                location: t.clone(),
                mse: mse(method, &bq, sigma2)?,
            });
        }
        plans.push(PointPlan { weights });
    }
    Ok((plans, mse_rows.into_iter().flatten().collect()))
}

struct ReplicationOutcome {
    raw: Vec<RawRow>,
    variance: Vec<VarianceRow>,
}

fn run_replication(
    config: &StudyConfig,
    sampler: &PathSampler,
    obs_locations: &[Vec<f64>],
    plans: &[PointPlan],
    cell: f64,
    replication: usize,
) -> Result<ReplicationOutcome> {
    let seed = rng::replication_seed(config.master_seed, replication as u64);
    let path = sampler.sample(seed);
    let obs = restrict_to_observations(&path, obs_locations)?;
    let x = DVector::from_column_slice(obs.values());
    let truth = path.values();

    let n_methods = config.methods.len();
    let mut predicted: Vec<Vec<f64>> = vec![Vec::with_capacity(plans.len()); n_methods];
    for plan in plans {
        for (mi, (lambda, offset)) in plan.weights.iter().enumerate() {
            predicted[mi].push(offset + lambda.dot(&x));
        }
    }

    let mut raw = Vec::with_capacity(n_methods * config.levels.len());
    let mut variance = Vec::with_capacity(n_methods);
    for (mi, &method) in config.methods.iter().enumerate() {
        for &level in config.levels.levels() {
            let disagreements = truth
                .iter()
                .zip(&predicted[mi])
                .filter(|(t, p)| (**t > level) != (**p > level))
                .count();
            raw.push(RawRow {
                replication,
                method,
                level,
                sym_diff: cell * disagreements as f64,
            });
        }
        variance.push(VarianceRow {
            method,
            replication,
            var_hat: sample_variance(&predicted[mi]),
        });
    }
    Ok(ReplicationOutcome { raw, variance })
}

/// Runs the configured study. Replications are independent and processed
/// in parallel; output ordering does not depend on the thread count.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let eval_grid = GridSpec::new(config.window.clone(), config.eval_mesh)?;
    let obs_grid = GridSpec::new(config.window.clone(), config.obs_mesh)?;

    // Snap observation sites onto the evaluation grid so covariance columns
    // match the simulated path's coordinates exactly.
    let mut obs_locations = Vec::with_capacity(obs_grid.len());
    for p in obs_grid.points() {
        let idx = eval_grid.index_of(p).ok_or_else(|| {
            Error::GridMismatch(format!(
                "observation site {p:?} does not lie on the evaluation grid"
            ))
        })?;
        obs_locations.push(eval_grid.points()[idx].clone());
    }
    let obs_template =
        ObservationSet::new(obs_locations.clone(), vec![0.0; obs_locations.len()])?;
    let system = CovarianceSystem::build_sigma(&config.model, &obs_template)?;
    let (plans, mse_curve) = plan_points(config, &system, &obs_template, &eval_grid)?;
    let sampler = PathSampler::new(&config.model, &config.marginal, &eval_grid)?;
    let cell = config.eval_mesh.powi(eval_grid.dim() as i32);

    let outcomes: Vec<ReplicationOutcome> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, &sampler, &obs_locations, &plans, cell, r))
        .collect::<Result<_>>()?;

    let mut raw = Vec::with_capacity(config.replications * plans_rows(config));
    let mut variance = Vec::with_capacity(config.replications * config.methods.len());
    for outcome in outcomes {
        raw.extend(outcome.raw);
        variance.extend(outcome.variance);
    }
    let summary = summarize_raw(config, &raw);
    Ok(StudyReport {
        config: config.clone(),
        raw,
        summary,
        variance,
        mse_curve,
    })
}

fn plans_rows(config: &StudyConfig) -> usize {
    config.methods.len() * config.levels.len()
}

fn summarize_raw(config: &StudyConfig, raw: &[RawRow]) -> Vec<SummaryRow> {
    let mut rows = Vec::with_capacity(plans_rows(config));
    for &method in &config.methods {
        for &level in config.levels.levels() {
            let mut values: Vec<f64> = raw
                .iter()
                .filter(|r| r.method == method && r.level == level)
                .map(|r| r.sym_diff)
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite volumes"));
            rows.push(SummaryRow {
                method,
                level,
                mean: values.iter().sum::<f64>() / values.len() as f64,
                q1: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q3: quantile(&values, 0.75),
                min: values[0],
                max: values[values.len() - 1],
            });
        }
    }
    rows
}

/// Linear-interpolation quantile of an ascending-sorted slice (the common
/// "type 7" estimator: index `(n - 1) p`, interpolated).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    assert!((0.0..=1.0).contains(&p), "p = {p} outside [0, 1]");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    ss / (n - 1) as f64
}

/// One mesh size of the consistency experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub mesh: f64,
    /// Distance from the target to the nearest observation site.
    pub nearest_distance: f64,
    /// Closed-form MSE of the excursion-faithful predictor (known-mean
    /// variant when the mean is zero, unknown-mean otherwise).
    pub analytical_mse: f64,
    /// Monte-Carlo MSE from co-simulating the field at the sites and the
    /// target.
    pub empirical_mse: f64,
    /// Smoothness bound `2 sigma^2 K (d(t, grid)/l)^alpha`.
    pub holder_bound: f64,
}

/// Predicts at a fixed off-grid point from full-grid observations at a
/// sequence of mesh sizes, reporting closed-form MSE, Monte-Carlo MSE, and
/// the smoothness bound that the MSE is guaranteed not to exceed.
pub fn consistency_experiment(
    model: &CovarianceModel,
    marginal: &GaussianMarginal,
    window: &Window,
    t: &[f64],
    mesh_sequence: &[f64],
    replications: usize,
    master_seed: u64,
) -> Result<Vec<ConsistencyPoint>> {
    crate::simulate::check_marginal_consistency(model, marginal)?;
    if mesh_sequence.is_empty() {
        return Err(Error::invalid("need at least one mesh size"));
    }
    if replications == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    if !window.contains(t) {
        return Err(Error::invalid(format!(
            "target {t:?} lies outside the window"
        )));
    }
    let sigma2 = model.sigma2();
    let mu = marginal.mu();
    let method = if mu == 0.0 {
        Method::LevelSetKnownMean
    } else {
        Method::LevelSetUnknownMean
    };
    let mut out = Vec::with_capacity(mesh_sequence.len());
    for (mi, &mesh) in mesh_sequence.iter().enumerate() {
        let grid = GridSpec::new(window.clone(), mesh)?;
        if grid.index_of(t).is_some() {
            return Err(Error::invalid(format!(
                "target {t:?} coincides with a mesh-{mesh} observation site; \
                 prediction there is trivially exact"
            )));
        }
        let sites = grid.points().to_vec();
        let template = ObservationSet::new(sites.clone(), vec![0.0; sites.len()])?;
        let system = CovarianceSystem::build_sigma(model, &template)?;
        let ct = build_ct(model, &template, t)?;
        let nearest = template.nearest_to(t);
        let weights = weights_for(method, &system, &ct, sigma2, nearest)?;
        let bq = b_quantities(&system, &ct)?;
        let analytical = mse(method, &bq, sigma2)?;

        let nearest_distance = distance(&sites[nearest], t);
        let bound = 2.0 * model.holder_bound(nearest_distance);

        // Co-simulate observations and target from their joint covariance.
        let mut joint_points = sites.clone();
        joint_points.push(t.to_vec());
        let joint = CovarianceSystem::from_points(model, &joint_points)?;
        let factor_l = joint.factor_l();
        let n = sites.len();
        let mesh_seed = rng::replication_seed(master_seed, mi as u64);
        // Collect per-replication errors before summing so the result does
        // not depend on rayon's reduction order.
        let squared_errors: Vec<f64> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let mut stream = rng::chacha(rng::replication_seed(mesh_seed, r as u64));
                let z = DVector::from_fn(n + 1, |_, _| rng::standard_normal(&mut stream));
                let x = &factor_l * z;
                let observed: Vec<f64> = (0..n).map(|j| mu + x[j]).collect();
                let truth = mu + x[n];
                let raw: f64 = weights
                    .lambda()
                    .iter()
                    .zip(&observed)
                    .map(|(l, v)| l * v)
                    .sum();
                let prediction = match method {
                    Method::LevelSetKnownMean => mu + raw - mu * weights.lambda().sum(),
                    _ => raw,
                };
                let err = prediction - truth;
                err * err
            })
            .collect();
        let sum_sq: f64 = squared_errors.iter().sum();
        out.push(ConsistencyPoint {
            mesh,
            nearest_distance,
            analytical_mse: analytical,
            empirical_mse: sum_sq / replications as f64,
            holder_bound: bound,
        });
    }
    Ok(out)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
