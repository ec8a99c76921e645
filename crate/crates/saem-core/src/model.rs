//! Statistical model specification: parameter transforms, covariate model,
//! random-effect structure, residual-error models, and the structural-model
//! trait implemented by the built-in library (see [`crate::builtins`]).
//!
//! ## Parameterization
//!
//! Individual parameters follow
//!
//! ```text
//! φ_i = μ + Σ_r β_r · c_{i,r} + η_i,     η_i ~ N(0, Ω)
//! ψ_i = h(φ_i)                            (componentwise transform)
//! ```
//!
//! with `h` the identity, exponential (log-normal parameter), or logistic
//! (logit-normal parameter) map per coordinate. The structural model and the
//! likelihood kernels consume ψ; estimation operates on φ where the model is
//! linear-Gaussian in the random effects.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::data::{OutcomeKind, SubjectData};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Componentwise map ψ = h(φ) from the Gaussian working scale to the natural
/// parameter scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// ψ = φ (parameter unrestricted).
    Identity,
    /// ψ = exp(φ) (parameter positive, log-normal).
    Log,
    /// ψ = 1/(1+exp(−φ)) (parameter in (0,1), logit-normal).
    Logit,
}

impl Transform {
    /// Natural-scale value ψ = h(φ).
    #[inline]
    pub fn psi(self, phi: f64) -> f64 {
        match self {
            Transform::Identity => phi,
            Transform::Log => phi.exp(),
            Transform::Logit => crate::numerics::logistic(phi),
        }
    }

    /// Working-scale value φ = h⁻¹(ψ).
    pub fn phi(self, psi: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(psi),
            Transform::Log => {
                if psi <= 0.0 {
                    Err(Error::validation(format!(
                        "log-transformed parameter requires a positive value (got {psi})"
                    )))
                } else {
                    Ok(psi.ln())
                }
            }
            Transform::Logit => {
                if psi <= 0.0 || psi >= 1.0 {
                    Err(Error::validation(format!(
                        "logit-transformed parameter requires a value in (0,1) (got {psi})"
                    )))
                } else {
                    Ok((psi / (1.0 - psi)).ln())
                }
            }
        }
    }

    /// Derivative dψ/dφ, used to push standard errors between scales.
    #[inline]
    pub fn dpsi_dphi(self, phi: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => phi.exp(),
            Transform::Logit => {
                let p = crate::numerics::logistic(phi);
                p * (1.0 - p)
            }
        }
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
            Transform::Logit => "logit",
        };
        f.write_str(s)
    }
}

// ---------------------------------------------------------------------------
// Parameter / covariate / random-effect specification
// ---------------------------------------------------------------------------

/// One structural-model parameter.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ParameterSpec {
    /// Parameter name (matches the structural model's declared order).
    pub name: String,
    /// Scale transform between working (φ) and natural (ψ) scale.
    pub transform: Transform,
    /// Initial value on the natural (ψ) scale.
    pub init: f64,
    /// Whether the parameter carries inter-individual variability (a random
    /// effect with nonzero variance in Ω).
    pub iiv: bool,
}

/// One covariate–parameter relation: adds `β · c_i` to the working-scale
/// parameter `param`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CovariateRelation {
    /// Target parameter index (into the parameter list).
    pub param: usize,
    /// Covariate column name (resolved against the dataset schema at fit time).
    pub covariate: String,
}

/// Variance pattern of the random effects.
///
/// Diagonal entries can be switched off individually (no IIV on that
/// parameter); off-diagonal covariances may be estimated only between
/// parameters whose diagonal entries are on.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OmegaPattern {
    /// Per-parameter IIV indicator (diagonal of Ω estimated).
    pub diag: Vec<bool>,
    /// Estimated covariances as (i, j) pairs with i < j.
    #[serde(default)]
    pub corr: Vec<(usize, usize)>,
}

impl OmegaPattern {
    /// Diagonal-only pattern from per-parameter indicators.
    pub fn diagonal(diag: Vec<bool>) -> Self {
        OmegaPattern { diag, corr: Vec::new() }
    }

    /// Validate against the number of parameters.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.diag.len() != d {
            return Err(Error::validation(format!(
                "Ω pattern has {} diagonal entries for {} parameters",
                self.diag.len(),
                d
            )));
        }
        if !self.diag.iter().any(|&x| x) {
            return Err(Error::validation(
                "at least one parameter must carry inter-individual variability",
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j) in &self.corr {
            if i >= j || j >= d {
                return Err(Error::validation(format!(
                    "Ω covariance pair ({i},{j}) must satisfy i < j < {d}"
                )));
            }
            if !self.diag[i] || !self.diag[j] {
                return Err(Error::validation(format!(
                    "Ω covariance ({i},{j}) requires IIV on both parameters"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::validation(format!("duplicate Ω covariance pair ({i},{j})")));
            }
        }
        Ok(())
    }

    /// Indices of parameters with IIV.
    pub fn iiv_indices(&self) -> Vec<usize> {
        self.diag
            .iter()
            .enumerate()
            .filter(|(_, &x)| x)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of free variance/covariance entries.
    pub fn n_free(&self) -> usize {
        self.diag.iter().filter(|&&x| x).count() + self.corr.len()
    }

    /// Apply the pattern mask to a candidate matrix: zero out entries that
    /// are not estimated.
    pub fn mask(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.diag.len();
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            if self.diag[i] {
                out[(i, i)] = m[(i, i)];
            }
        }
        for &(i, j) in &self.corr {
            out[(i, j)] = m[(i, j)];
            out[(j, i)] = m[(j, i)];
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Residual error model (Gaussian outcomes)
// ---------------------------------------------------------------------------

/// Residual-error model for Gaussian outcomes: y = f + g(f)·ε with ε~N(0,1),
/// except `Exponential`, which is y = f·exp(a·ε), i.e. a constant model on
/// the log scale.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorModel {
    /// g = a.
    Constant {
        /// Additive standard deviation a > 0.
        a: f64,
    },
    /// g = b·|f|.
    Proportional {
        /// Proportional coefficient b > 0.
        b: f64,
    },
    /// g = sqrt(a² + b²·f²).
    Combined {
        /// Additive component a > 0.
        a: f64,
        /// Proportional component b > 0.
        b: f64,
    },
    /// y = f·exp(a·ε): constant error of size a on log(y).
    Exponential {
        /// Log-scale standard deviation a > 0.
        a: f64,
    },
}

impl ErrorModel {
    /// Residual standard deviation at prediction f (on the modeling scale:
    /// log scale for `Exponential`).
    #[inline]
    pub fn sd(&self, f: f64) -> f64 {
        match *self {
            ErrorModel::Constant { a } => a,
            ErrorModel::Proportional { b } => b * f.abs(),
            ErrorModel::Combined { a, b } => (a * a + b * b * f * f).sqrt(),
            ErrorModel::Exponential { a } => a,
        }
    }

    /// Parameter values in reporting order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ErrorModel::Constant { a } => vec![("a", a)],
            ErrorModel::Proportional { b } => vec![("b", b)],
            ErrorModel::Combined { a, b } => vec![("a", a), ("b", b)],
            ErrorModel::Exponential { a } => vec![("a", a)],
        }
    }

    /// Number of free error parameters.
    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    /// True when observations must be log-transformed before fitting.
    pub fn on_log_scale(&self) -> bool {
        matches!(self, ErrorModel::Exponential { .. })
    }

    /// Kind label for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ErrorModel::Constant { .. } => "constant",
            ErrorModel::Proportional { .. } => "proportional",
            ErrorModel::Combined { .. } => "combined",
            ErrorModel::Exponential { .. } => "exponential",
        }
    }

    /// Validate positivity of the declared components.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ErrorModel::Constant { a } | ErrorModel::Exponential { a } => a > 0.0,
            ErrorModel::Proportional { b } => b > 0.0,
            ErrorModel::Combined { a, b } => a > 0.0 && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("error-model parameters must be positive"))
        }
    }
}

// ---------------------------------------------------------------------------
// Structural model trait
// ---------------------------------------------------------------------------

/// Structural model mapping natural-scale parameters ψ and a subject's
/// predictors to predictions (Gaussian) or per-row log-probabilities
/// (discrete outcomes).
pub trait Model: Send + Sync {
    /// Registry name of the model.
    fn name(&self) -> &str;

    /// Outcome kind this model produces.
    fn outcome(&self) -> OutcomeKind;

    /// Number of natural-scale parameters ψ.
    fn n_psi(&self) -> usize;

    /// Parameter names in ψ order.
    fn param_names(&self) -> Vec<String>;

    /// Gaussian models: prediction f(t_ij, ψ) per row. Discrete models return
    /// an unsupported-operation error.
    fn predict(&self, _psi: &[f64], _subject: &SubjectData) -> Result<Vec<f64>> {
        Err(Error::unsupported(format!(
            "{} is not a Gaussian-prediction model",
            self.name()
        )))
    }

    /// Discrete models: log-probability contribution per row (already floored
    /// at [`crate::numerics::LOG_PROB_FLOOR`]). Gaussian models return an
    /// unsupported-operation error (the engine builds their likelihood from
    /// [`Model::predict`] and the error model).
    fn log_prob_rows(&self, _psi: &[f64], _subject: &SubjectData) -> Result<Vec<f64>> {
        Err(Error::unsupported(format!(
            "{} does not define row log-probabilities",
            self.name()
        )))
    }

    /// Simulate responses on the subject's design (same rows, new y). For
    /// Gaussian models the engine adds residual error around
    /// [`Model::predict`]; discrete non-tte models implement category draws
    /// here.
    fn simulate(&self, _psi: &[f64], _subject: &SubjectData, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Err(Error::unsupported(format!(
            "{} does not implement design-preserving simulation",
            self.name()
        )))
    }

    /// Simulate one event/censoring time for a tte model, truncated at the
    /// administrative horizon `t_max` (returns `(time, event)`;
    /// `event = false` means censored at `t_max`).
    fn simulate_tte(&self, _psi: &[f64], _t_max: f64, _rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
        Err(Error::unsupported(format!(
            "{} is not a time-to-event model",
            self.name()
        )))
    }
}

// ---------------------------------------------------------------------------
// Full model specification
// ---------------------------------------------------------------------------

/// Complete nonlinear mixed-effects model: structural model plus parameter,
/// covariate, random-effect, and error specifications.
#[derive(Clone)]
pub struct NlmeModel {
    /// Structural model.
    pub model: Arc<dyn Model>,
    /// Parameter specifications, aligned with the structural model's ψ order.
    pub params: Vec<ParameterSpec>,
    /// Covariate–parameter relations in declared order.
    pub covariates: Vec<CovariateRelation>,
    /// Random-effect variance pattern.
    pub omega: OmegaPattern,
    /// Residual-error model (Gaussian outcomes only).
    pub error: Option<ErrorModel>,
}

impl std::fmt::Debug for NlmeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NlmeModel")
            .field("model", &self.model.name())
            .field("params", &self.params)
            .field("covariates", &self.covariates)
            .field("omega", &self.omega)
            .field("error", &self.error)
            .finish()
    }
}

impl NlmeModel {
    /// Number of structural parameters d.
    pub fn d(&self) -> usize {
        self.params.len()
    }

    /// Validate internal consistency and compatibility with a dataset's
    /// covariate columns.
    pub fn validate(&self, covariate_names: &[String]) -> Result<()> {
        if self.params.len() != self.model.n_psi() {
            return Err(Error::validation(format!(
                "model `{}` expects {} parameters, specification has {}",
                self.model.name(),
                self.model.n_psi(),
                self.params.len()
            )));
        }
        for p in &self.params {
            // Initial values must be transformable to the working scale.
            p.transform.phi(p.init)?;
        }
        self.omega.validate(self.d())?;
        for (k, p) in self.params.iter().enumerate() {
            if p.iiv != self.omega.diag[k] {
                return Err(Error::validation(format!(
                    "parameter `{}`: iiv flag disagrees with the Ω pattern",
                    p.name
                )));
            }
        }
        for rel in &self.covariates {
            if rel.param >= self.d() {
                return Err(Error::validation(format!(
                    "covariate relation targets parameter index {} out of range",
                    rel.param
                )));
            }
            if !covariate_names.contains(&rel.covariate) {
                return Err(Error::validation(format!(
                    "covariate `{}` not present in the dataset",
                    rel.covariate
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for rel in &self.covariates {
            if !seen.insert((rel.param, rel.covariate.clone())) {
                return Err(Error::validation(format!(
                    "duplicate covariate relation `{}` on parameter {}",
                    rel.covariate, rel.param
                )));
            }
        }
        match self.model.outcome() {
            OutcomeKind::Gaussian => {
                let err = self
                    .error
                    .as_ref()
                    .ok_or_else(|| Error::validation("Gaussian outcome requires an error model"))?;
                err.validate()?;
            }
            _ => {
                if self.error.is_some() {
                    return Err(Error::validation(
                        "error model is only meaningful for Gaussian outcomes",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Length of the fixed-effect vector b = (μ_1..μ_d, β_1..β_m).
    pub fn n_fixed(&self) -> usize {
        self.d() + self.covariates.len()
    }

    /// Names of the fixed effects in b order: parameter names, then
    /// `beta_<covariate>(<param>)` per relation.
    pub fn fixed_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        for rel in &self.covariates {
            names.push(format!("beta_{}({})", rel.covariate, self.params[rel.param].name));
        }
        names
    }

    /// Initial fixed-effect vector on the working (φ) scale: transformed
    /// initial values for μ, zeros for the covariate coefficients.
    pub fn initial_fixed(&self) -> Result<DVector<f64>> {
        let mut b = DVector::zeros(self.n_fixed());
        for (k, p) in self.params.iter().enumerate() {
            b[k] = p.transform.phi(p.init)?;
        }
        Ok(b)
    }

    /// Design matrix X_i (d × n_fixed) mapping b to the working-scale mean of
    /// φ_i: `E[φ_i] = X_i b`. `cov_values` are the subject's covariates in
    /// dataset order.
    pub fn design_matrix(&self, cov_values: &[f64], cov_names: &[String]) -> Result<DMatrix<f64>> {
        let d = self.d();
        let mut x = DMatrix::zeros(d, self.n_fixed());
        for k in 0..d {
            x[(k, k)] = 1.0;
        }
        for (r, rel) in self.covariates.iter().enumerate() {
            let j = cov_names
                .iter()
                .position(|c| *c == rel.covariate)
                .ok_or_else(|| {
                    Error::validation(format!("covariate `{}` not present in the dataset", rel.covariate))
                })?;
            let v = cov_values[j];
            if v.is_nan() {
                return Err(Error::validation(format!(
                    "missing value for covariate `{}` reached the design matrix",
                    rel.covariate
                )));
            }
            x[(rel.param, d + r)] = v;
        }
        Ok(x)
    }

    /// Map a working-scale vector φ to natural-scale ψ.
    pub fn psi_of_phi(&self, phi: &[f64]) -> Vec<f64> {
        phi.iter()
            .zip(&self.params)
            .map(|(&v, p)| p.transform.psi(v))
            .collect()
    }
}
