//! Stationary covariance models, observation geometry, and the factorized
//! covariance system shared by every predictor.
//!
//! All models are isotropic: a lag vector enters only through its Euclidean
//! norm, scaled by the model's `length_scale`. Each named model carries the
//! Holder-continuity constants `K`, `alpha` of its unit profile
//! (`|c(0) - c(r)| <= K r^alpha`), which drive the mesh-refinement error
//! bounds in the study module.

use crate::error::{Error, Result};
use crate::special::bessel_j0;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

/// Ridge escalation ladder, as multiples of `sigma2`. The zero rung means
/// "try the raw matrix first"; the ladder never exceeds 1e-6 * sigma2.
const RIDGE_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// Parametric family of a stationary covariance model.
#[derive(Clone, Debug, PartialEq)]
pub enum CovarianceKind {
    /// `c(r) = exp(-r)`
    Exponential,
    /// `c(r) = exp(-r^2 / 2)`
    Gaussian,
    /// `c(r) = J0(r)`, oscillating with slow polynomial decay.
    BesselJ0,
    /// `c(r) = sin(r) / r`
    Sinc,
    /// Piecewise-linear interpolation of `(lag, value)` pairs, extended
    /// evenly and clamped at the last tabulated lag.
    UserTable(Vec<(f64, f64)>),
}

/// A stationary, isotropic covariance function `C(h) = sigma2 * c(|h| / l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct CovarianceModel {
    kind: CovarianceKind,
    sigma2: f64,
    length_scale: f64,
    holder_k: f64,
    holder_alpha: f64,
}

/// Serde mirror of [`CovarianceModel`]; validation happens in `TryFrom`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelSpec {
    kind: String,
    sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    holder_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    holder_alpha: Option<f64>,
}

impl TryFrom<ModelSpec> for CovarianceModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        let ModelSpec {
            kind,
            sigma2,
            length_scale,
            table,
            holder_k,
            holder_alpha,
        } = spec;
        let ls = length_scale.unwrap_or(1.0);
        if table.is_some() && kind != "user_table" {
            return Err(Error::invalid(format!(
                "covariance kind \"{kind}\" does not accept a table"
            )));
        }
        let mut model = match kind.as_str() {
            "exponential" => CovarianceModel::exponential(sigma2, ls)?,
            "gaussian" => CovarianceModel::gaussian(sigma2, ls)?,
            "bessel_j0" => CovarianceModel::bessel_j0(sigma2, ls)?,
            "sinc" => CovarianceModel::sinc(sigma2, ls)?,
            "user_table" => {
                let table = table.ok_or_else(|| {
                    Error::invalid("user_table model requires a \"table\" field")
                })?;
                let k = holder_k
                    .ok_or_else(|| Error::invalid("user_table model requires \"holder_k\""))?;
                let alpha = holder_alpha.ok_or_else(|| {
                    Error::invalid("user_table model requires \"holder_alpha\"")
                })?;
                let mut m = CovarianceModel::user_table(sigma2, table, k, alpha)?;
                m.length_scale = validated_length_scale(ls)?;
                m
            }
            other => {
                return Err(Error::invalid(format!(
                    "unknown covariance kind \"{other}\" \
                     (expected exponential, gaussian, bessel_j0, sinc, or user_table)"
                )))
            }
        };
        if let (Some(k), Some(alpha)) = (holder_k, holder_alpha) {
            model = model.with_holder(k, alpha)?;
        }
        Ok(model)
    }
}

impl From<CovarianceModel> for ModelSpec {
    fn from(m: CovarianceModel) -> Self {
        let (kind, table) = match &m.kind {
            CovarianceKind::Exponential => ("exponential", None),
            CovarianceKind::Gaussian => ("gaussian", None),
            CovarianceKind::BesselJ0 => ("bessel_j0", None),
            CovarianceKind::Sinc => ("sinc", None),
            CovarianceKind::UserTable(t) => ("user_table", Some(t.clone())),
        };
        ModelSpec {
            kind: kind.to_string(),
            sigma2: m.sigma2,
            length_scale: Some(m.length_scale),
            table,
            holder_k: Some(m.holder_k),
            holder_alpha: Some(m.holder_alpha),
        }
    }
}

fn validated_sigma2(sigma2: f64) -> Result<f64> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(Error::invalid(format!(
            "sigma2 must be positive and finite, got {sigma2}"
        )));
    }
    Ok(sigma2)
}

fn validated_length_scale(ls: f64) -> Result<f64> {
    if !ls.is_finite() || ls <= 0.0 {
        return Err(Error::invalid(format!(
            "length_scale must be positive and finite, got {ls}"
        )));
    }
    Ok(ls)
}

impl CovarianceModel {
    /// Exponential model `sigma2 * exp(-|h|/l)`; Holder constants `K = 1`,
    /// `alpha = 1` for the unit profile.
    pub fn exponential(sigma2: f64, length_scale: f64) -> Result<Self> {
        Ok(CovarianceModel {
            kind: CovarianceKind::Exponential,
            sigma2: validated_sigma2(sigma2)?,
            length_scale: validated_length_scale(length_scale)?,
            holder_k: 1.0,
            holder_alpha: 1.0,
        })
    }

    /// Squared-exponential model `sigma2 * exp(-(|h|/l)^2 / 2)`; `K = 1`,
    /// `alpha = 2`.
    pub fn gaussian(sigma2: f64, length_scale: f64) -> Result<Self> {
        Ok(CovarianceModel {
            kind: CovarianceKind::Gaussian,
            sigma2: validated_sigma2(sigma2)?,
            length_scale: validated_length_scale(length_scale)?,
            holder_k: 1.0,
            holder_alpha: 2.0,
        })
    }

    /// Bessel model `sigma2 * J0(|h|/l)`; `K = 1/4`, `alpha = 2`.
    pub fn bessel_j0(sigma2: f64, length_scale: f64) -> Result<Self> {
        Ok(CovarianceModel {
            kind: CovarianceKind::BesselJ0,
            sigma2: validated_sigma2(sigma2)?,
            length_scale: validated_length_scale(length_scale)?,
            holder_k: 0.25,
            holder_alpha: 2.0,
        })
    }

    /// Cardinal-sine model `sigma2 * sin(|h|/l) / (|h|/l)`; `K = 1/6`,
    /// `alpha = 2`.
    pub fn sinc(sigma2: f64, length_scale: f64) -> Result<Self> {
        Ok(CovarianceModel {
            kind: CovarianceKind::Sinc,
            sigma2: validated_sigma2(sigma2)?,
            length_scale: validated_length_scale(length_scale)?,
            holder_k: 1.0 / 6.0,
            holder_alpha: 2.0,
        })
    }

    /// Tabulated model. `table` holds `(lag, value)` pairs with strictly
    /// increasing lags starting at 0; the value at lag 0 must equal `sigma2`
    /// (within 1e-9 relative) and is snapped to it exactly. Lags are in
    /// length-scale units. Positive definiteness is not checkable from a
    /// table; a genuinely invalid table surfaces later as a ridge or a
    /// factorization failure.
    pub fn user_table(
        sigma2: f64,
        mut table: Vec<(f64, f64)>,
        holder_k: f64,
        holder_alpha: f64,
    ) -> Result<Self> {
        let sigma2 = validated_sigma2(sigma2)?;
        if table.is_empty() {
            return Err(Error::invalid("covariance table must be non-empty"));
        }
        if table.iter().any(|(l, v)| !l.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("covariance table entries must be finite"));
        }
        if table[0].0 != 0.0 {
            return Err(Error::invalid(format!(
                "covariance table must start at lag 0, got {}",
                table[0].0
            )));
        }
        if table.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid(
                "covariance table lags must be strictly increasing",
            ));
        }
        if (table[0].1 - sigma2).abs() > 1e-9 * sigma2 {
            return Err(Error::invalid(format!(
                "covariance table value at lag 0 ({}) must equal sigma2 ({sigma2})",
                table[0].1
            )));
        }
        table[0].1 = sigma2;
        Ok(CovarianceModel {
            kind: CovarianceKind::UserTable(table),
            sigma2,
            length_scale: 1.0,
            holder_k: validated_holder_k(holder_k)?,
            holder_alpha: validated_holder_alpha(holder_alpha)?,
        })
    }

    /// Overrides the Holder constants (e.g. when a sharper bound is known).
    pub fn with_holder(mut self, holder_k: f64, holder_alpha: f64) -> Result<Self> {
        self.holder_k = validated_holder_k(holder_k)?;
        self.holder_alpha = validated_holder_alpha(holder_alpha)?;
        Ok(self)
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn holder_k(&self) -> f64 {
        self.holder_k
    }

    pub fn holder_alpha(&self) -> f64 {
        self.holder_alpha
    }

    /// Upper bound on `C(0) - C(h)` for `|h| = dist`, from the Holder
    /// constants of the unit profile: `sigma2 * K * (dist/l)^alpha`.
    pub fn holder_bound(&self, dist: f64) -> f64 {
        self.sigma2 * self.holder_k * (dist / self.length_scale).powf(self.holder_alpha)
    }

    /// Evaluates the covariance at a lag vector (isotropic: only the
    /// Euclidean norm of `lag` matters). A zero lag returns `sigma2`
    /// exactly for every kind.
    pub fn evaluate(&self, lag: &[f64]) -> f64 {
        let r = norm(lag) / self.length_scale;
        self.sigma2 * self.unit_profile(r)
    }

    /// The correlation profile `c(r)` at scaled lag `r >= 0`; `c(0) = 1`.
    fn unit_profile(&self, r: f64) -> f64 {
        match &self.kind {
            CovarianceKind::Exponential => (-r).exp(),
            CovarianceKind::Gaussian => (-0.5 * r * r).exp(),
            CovarianceKind::BesselJ0 => bessel_j0(r),
            CovarianceKind::Sinc => {
                if r == 0.0 {
                    1.0
                } else {
                    r.sin() / r
                }
            }
            CovarianceKind::UserTable(table) => {
                if r >= table[table.len() - 1].0 {
                    return table[table.len() - 1].1 / self.sigma2;
                }
                // partition_point: first index with lag > r; r < last lag here.
                let hi = table.partition_point(|(lag, _)| *lag <= r);
                if hi == 0 {
                    return table[0].1 / self.sigma2;
                }
                let (l0, v0) = table[hi - 1];
                let (l1, v1) = table[hi];
                let w = (r - l0) / (l1 - l0);
                (v0 + w * (v1 - v0)) / self.sigma2
            }
        }
    }
}

fn validated_holder_k(k: f64) -> Result<f64> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::invalid(format!(
            "holder_k must be positive and finite, got {k}"
        )));
    }
    Ok(k)
}

fn validated_holder_alpha(alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha > 2.0 {
        return Err(Error::invalid(format!(
            "holder_alpha must lie in (0, 2], got {alpha}"
        )));
    }
    Ok(alpha)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compact axis-aligned observation window `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowSpec", into = "WindowSpec")]
pub struct Window {
    bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(transparent)]
struct WindowSpec {
    bounds: Vec<(f64, f64)>,
}

impl TryFrom<WindowSpec> for Window {
    type Error = Error;

    fn try_from(spec: WindowSpec) -> Result<Self> {
        Window::new(spec.bounds)
    }
}

impl From<Window> for WindowSpec {
    fn from(w: Window) -> Self {
        WindowSpec { bounds: w.bounds }
    }
}

impl Window {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("window must have at least one dimension"));
        }
        for (lo, hi) in &bounds {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid(format!(
                    "window bounds must be finite with lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Window { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Containment is inclusive of the boundary.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

/// Observed field values at pairwise-distinct locations.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    locations: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(locations: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("observation set must be non-empty"));
        }
        if locations.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        let dim = locations[0].len();
        if dim == 0 {
            return Err(Error::invalid("observation locations must have dimension >= 1"));
        }
        for (i, loc) in locations.iter().enumerate() {
            if loc.len() != dim {
                return Err(Error::invalid(format!(
                    "observation {i} has dimension {}, expected {dim}",
                    loc.len()
                )));
            }
            if loc.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "observation location {i} has non-finite coordinates"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation values must be finite"));
        }
        for i in 0..locations.len() {
            for j in (i + 1)..locations.len() {
                if locations[i] == locations[j] {
                    return Err(Error::DuplicateLocation { first: i, second: j });
                }
            }
        }
        Ok(ObservationSet { locations, values })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the observation nearest to `t` in Euclidean distance;
    /// ties resolve to the lowest index.
    pub fn nearest_to(&self, t: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (i, loc) in self.locations.iter().enumerate() {
            let d2: f64 = loc.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best = i;
                best_d2 = d2;
            }
        }
        best
    }
}

/// Covariance matrix of a point set together with its Cholesky factorization
/// and the ridge that (rarely) had to be added to reach positive
/// definiteness.
///
/// The factorization is of `sigma + ridge_applied * I`; `ridge_applied` is 0
/// whenever the raw matrix factors, and is capped at `1e-6 * sigma2` by the
/// escalation ladder. Solves never form an explicit inverse.
#[derive(Clone, Debug)]
pub struct CovarianceSystem {
    sigma: DMatrix<f64>,
    factor: nalgebra::Cholesky<f64, Dyn>,
    ridge_applied: f64,
    sigma2: f64,
}

impl CovarianceSystem {
    /// Builds the covariance matrix of the observation locations under
    /// `model` and factorizes it.
    pub fn build_sigma(model: &CovarianceModel, observations: &ObservationSet) -> Result<Self> {
        Self::from_points(model, observations.locations())
    }

    /// As [`build_sigma`](Self::build_sigma) for a raw list of points
    /// (assumed pairwise distinct; grids are distinct by construction).
    pub fn from_points(model: &CovarianceModel, points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::invalid("cannot build a covariance system from 0 points"));
        }
        let mut sigma = DMatrix::<f64>::zeros(n, n);
        let dim = points[0].len();
        let mut lag = vec![0.0; dim];
        for j in 0..n {
            sigma[(j, j)] = model.sigma2();
            for l in (j + 1)..n {
                for k in 0..dim {
                    lag[k] = points[l][k] - points[j][k];
                }
                let c = model.evaluate(&lag);
                sigma[(j, l)] = c;
                sigma[(l, j)] = c;
            }
        }
        Self::factorize(sigma, model.sigma2())
    }

    /// Wraps an explicitly given covariance matrix. The matrix must be
    /// square, symmetric, with a constant positive diagonal (the marginal
    /// variance).
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::invalid("covariance matrix must be square and non-empty"));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("covariance matrix entries must be finite"));
        }
        let n = sigma.nrows();
        let sigma2 = sigma[(0, 0)];
        if sigma2 <= 0.0 {
            return Err(Error::invalid(format!(
                "covariance diagonal must be positive, got {sigma2}"
            )));
        }
        let scale = sigma.amax();
        for j in 0..n {
            if (sigma[(j, j)] - sigma2).abs() > 1e-12 * sigma2 {
                return Err(Error::invalid(
                    "covariance diagonal must be constant (stationary field)",
                ));
            }
            for l in (j + 1)..n {
                if (sigma[(j, l)] - sigma[(l, j)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance matrix must be symmetric"));
                }
            }
        }
        Self::factorize(sigma, sigma2)
    }

    fn factorize(sigma: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        let n = sigma.nrows();
        for eps in RIDGE_LADDER {
            let ridge = eps * sigma2;
            let mut candidate = sigma.clone();
            if ridge > 0.0 {
                for j in 0..n {
                    candidate[(j, j)] += ridge;
                }
            }
            if let Some(factor) = nalgebra::Cholesky::new(candidate) {
                return Ok(CovarianceSystem {
                    sigma,
                    factor,
                    ridge_applied: ridge,
                    sigma2,
                });
            }
        }
        Err(Error::SingularCovariance {
            max_ridge: RIDGE_LADDER[RIDGE_LADDER.len() - 1] * sigma2,
        })
    }

    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// The raw (unridged) covariance matrix.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn ridge_applied(&self) -> f64 {
        self.ridge_applied
    }

    /// Solves `(sigma + ridge I) x = rhs` by forward/backward substitution
    /// through the stored Cholesky factor.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.n() {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, system has {}",
                rhs.len(),
                self.n()
            )));
        }
        Ok(self.factor.solve(rhs))
    }

    /// Lower-triangular Cholesky factor `L` with `L L^T = sigma + ridge I`.
    pub fn factor_l(&self) -> DMatrix<f64> {
        self.factor.l()
    }
}

/// Cross-covariance vector `c_t[j] = C(t - t_j)` between the prediction
/// point `t` and the observation locations.
pub fn build_ct(
    model: &CovarianceModel,
    observations: &ObservationSet,
    t: &[f64],
) -> Result<DVector<f64>> {
    if t.len() != observations.dim() {
        return Err(Error::invalid(format!(
            "prediction point has dimension {}, observations have {}",
            t.len(),
            observations.dim()
        )));
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("prediction point must be finite"));
    }
    let mut lag = vec![0.0; t.len()];
    let mut ct = DVector::zeros(observations.len());
    for (j, loc) in observations.locations().iter().enumerate() {
        for k in 0..t.len() {
            lag[k] = t[k] - loc[k];
        }
        ct[j] = model.evaluate(&lag);
    }
    Ok(ct)
}
