//! Model–data binding used by the estimation machinery.
//!
//! A [`PreparedModel`] resolves everything that is fixed for the duration of
//! a fit: per-subject covariate design matrices, the IIV coordinate layout,
//! the partition of fixed effects into GLS-updatable (attached to parameters
//! with IIV) and numerically-profiled (attached to parameters without IIV)
//! columns, and pre-transformed responses for the exponential error model.
//! It also centralizes the complete-data log-likelihood pieces every module
//! shares: the data term log p(y_i | φ_i) and the Gaussian prior term over
//! the IIV coordinates.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::model::{ErrorModel, NlmeModel};
use crate::numerics::LOG_PROB_FLOOR;

/// Half of log(2π); the Gaussian normalizing constant per observation.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// A validated model bound to a dataset, with all fit-invariant structures
/// precomputed.
pub struct PreparedModel {
    /// The model specification.
    pub model: NlmeModel,
    /// The analysis dataset (subjects with missing values on used covariates
    /// already excluded).
    pub data: Dataset,
    /// Per-subject design matrices X_i (d × n_fixed), so E[φ_i] = X_i b.
    pub x: Vec<DMatrix<f64>>,
    /// Indices of parameters with IIV (rows of the Ω support), ascending.
    pub iiv: Vec<usize>,
    /// Indices of parameters without IIV, ascending.
    pub no_iiv: Vec<usize>,
    /// Columns of b attached to IIV parameters (updated by GLS).
    pub cols_iiv: Vec<usize>,
    /// Columns of b attached to no-IIV parameters (updated by the numeric
    /// profiling step).
    pub cols_no_iiv: Vec<usize>,
    /// Response on the modeling scale: log-transformed when the error model
    /// is exponential, untouched otherwise.
    pub y: Vec<Vec<f64>>,
    /// Subject ids excluded for missing covariates (recorded for reporting).
    pub excluded: Vec<String>,
}

impl PreparedModel {
    /// Validate `model` against `data` and precompute the fit structures.
    ///
    /// Subjects missing a value for any covariate the model uses are
    /// excluded here (and listed in [`PreparedModel::excluded`]).
    pub fn new(model: &NlmeModel, data: &Dataset) -> Result<PreparedModel> {
        model.validate(&data.schema.covariates)?;
        if model.model.outcome() != data.outcome {
            return Err(Error::validation(format!(
                "model `{}` expects {} data, dataset is {}",
                model.model.name(),
                model.model.outcome(),
                data.outcome
            )));
        }
        let used_cov: Vec<usize> = {
            let mut ix: Vec<usize> = model
                .covariates
                .iter()
                .map(|rel| data.covariate_index(&rel.covariate))
                .collect::<Result<_>>()?;
            ix.sort_unstable();
            ix.dedup();
            ix
        };
        let (data, excluded) = data.require_covariates(&used_cov);
        if data.n_subjects() == 0 {
            return Err(Error::validation(
                "no subjects remain after excluding missing covariate values",
            ));
        }

        let x: Vec<DMatrix<f64>> = data
            .subjects
            .iter()
            .map(|s| model.design_matrix(&s.covariates, &data.schema.covariates))
            .collect::<Result<_>>()?;

        let iiv = model.omega.iiv_indices();
        let no_iiv: Vec<usize> = (0..model.d()).filter(|k| !model.omega.diag[*k]).collect();
        let d = model.d();
        let mut cols_iiv: Vec<usize> = iiv.clone();
        let mut cols_no_iiv: Vec<usize> = no_iiv.clone();
        for (r, rel) in model.covariates.iter().enumerate() {
            if model.omega.diag[rel.param] {
                cols_iiv.push(d + r);
            } else {
                cols_no_iiv.push(d + r);
            }
        }
        cols_iiv.sort_unstable();
        cols_no_iiv.sort_unstable();

        let log_scale = model
            .error
            .as_ref()
            .map(|e| e.on_log_scale())
            .unwrap_or(false);
        let mut y = Vec::with_capacity(data.n_subjects());
        for s in &data.subjects {
            if log_scale {
                if s.response.iter().any(|&v| v <= 0.0) {
                    return Err(Error::validation(format!(
                        "subject {}: exponential error model requires positive responses",
                        s.id
                    )));
                }
                y.push(s.response.iter().map(|&v| v.ln()).collect());
            } else {
                y.push(s.response.clone());
            }
        }

        Ok(PreparedModel { model: model.clone(), data, x, iiv, no_iiv, cols_iiv, cols_no_iiv, y, excluded })
    }

    /// Number of subjects in the analysis dataset.
    pub fn n_subjects(&self) -> usize {
        self.data.n_subjects()
    }

    /// Number of structural parameters d.
    pub fn d(&self) -> usize {
        self.model.d()
    }

    /// Number of IIV coordinates q.
    pub fn q(&self) -> usize {
        self.iiv.len()
    }

    /// Working-scale population parameter vector for subject i: X_i b.
    pub fn phi_pop(&self, i: usize, b: &DVector<f64>) -> DVector<f64> {
        &self.x[i] * b
    }

    /// Overwrite the no-IIV coordinates of φ with their deterministic values
    /// X_i b (those coordinates carry no random effect).
    pub fn clamp_no_iiv(&self, i: usize, b: &DVector<f64>, phi: &mut DVector<f64>) {
        if self.no_iiv.is_empty() {
            return;
        }
        let pop = self.phi_pop(i, b);
        for &k in &self.no_iiv {
            phi[k] = pop[k];
        }
    }

    /// Data log-likelihood log p(y_i | ψ(φ_i)).
    ///
    /// Per-row contributions are floored at [`LOG_PROB_FLOOR`]; a structurally
    /// invalid evaluation (non-finite prediction, non-positive residual SD,
    /// non-positive prediction under the exponential error model) yields
    /// `-inf`, which Metropolis–Hastings treats as an always-rejected state.
    pub fn data_loglik(&self, i: usize, phi: &DVector<f64>) -> f64 {
        let psi = self.model.psi_of_phi(phi.as_slice());
        let subject = &self.data.subjects[i];
        match self.model.model.outcome() {
            OutcomeKind::Gaussian => {
                let err = self.model.error.as_ref().expect("validated gaussian model");
                let f = match self.model.model.predict(&psi, subject) {
                    Ok(f) => f,
                    Err(_) => return f64::NEG_INFINITY,
                };
                let log_scale = err.on_log_scale();
                let mut total = 0.0;
                for (row, &yv) in self.y[i].iter().enumerate() {
                    let mut fv = f[row];
                    if log_scale {
                        if fv <= 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        fv = fv.ln();
                    }
                    let g = err.sd(f[row]);
                    if !fv.is_finite() || !(g > 1e-290) || !g.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    let z = (yv - fv) / g;
                    total += (-0.5 * z * z - g.ln() - HALF_LN_2PI).max(LOG_PROB_FLOOR);
                }
                total
            }
            _ => match self.model.model.log_prob_rows(&psi, subject) {
                Ok(rows) => rows.iter().sum(),
                Err(_) => f64::NEG_INFINITY,
            },
        }
    }

    /// Per-row Gaussian residual pieces (y − f on the modeling scale, and f
    /// on the natural scale) for the error-parameter sufficient statistics.
    pub fn gaussian_residuals(&self, i: usize, phi: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
        let err = self
            .model
            .error
            .as_ref()
            .ok_or_else(|| Error::unsupported("residuals require a Gaussian outcome"))?;
        let psi = self.model.psi_of_phi(phi.as_slice());
        let subject = &self.data.subjects[i];
        let f = self.model.model.predict(&psi, subject)?;
        let log_scale = err.on_log_scale();
        Ok(self.y[i]
            .iter()
            .enumerate()
            .map(|(row, &yv)| {
                let fv = if log_scale { f[row].max(1e-290).ln() } else { f[row] };
                (yv - fv, f[row])
            })
            .collect())
    }

    /// Restrict a full working-scale vector to the IIV coordinates.
    pub fn to_iiv(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.iiv.len(), self.iiv.iter().map(|&k| full[k]))
    }

    /// Scatter an IIV-coordinate vector into a full vector, leaving other
    /// coordinates untouched.
    pub fn from_iiv(&self, u: &DVector<f64>, full: &mut DVector<f64>) {
        for (j, &k) in self.iiv.iter().enumerate() {
            full[k] = u[j];
        }
    }

    /// The Ω submatrix over the IIV coordinates.
    pub fn omega_iiv(&self, omega: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.q();
        DMatrix::from_fn(q, q, |a, b| omega[(self.iiv[a], self.iiv[b])])
    }

    /// Global row offsets: starting row index of each subject in the stacked
    /// per-row vectors (used by the error-statistic accumulators).
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.n_subjects() + 1);
        let mut acc = 0usize;
        for s in &self.data.subjects {
            off.push(acc);
            acc += s.n_rows();
        }
        off.push(acc);
        off
    }
}

/// Spectral operations on the IIV covariance: sampling factor, precision,
/// and log-determinant, robust to near-singular Ω via eigenvalue clipping.
pub struct OmegaOps {
    /// Sampling factor A with A·Aᵀ = Ω (scaled eigenvectors).
    pub sample: DMatrix<f64>,
    /// Precision Ω⁻¹.
    pub precision: DMatrix<f64>,
    /// log det Ω.
    pub logdet: f64,
}

impl OmegaOps {
    /// Decompose an IIV-block covariance (clipping eigenvalues at 1e-12 for
    /// the inverse).
    pub fn new(omega: &DMatrix<f64>) -> OmegaOps {
        let eig = omega.clone().symmetric_eigen();
        let q = omega.nrows();
        let mut sample = DMatrix::zeros(q, q);
        let mut precision = DMatrix::zeros(q, q);
        let mut logdet = 0.0;
        for j in 0..q {
            let lam = eig.eigenvalues[j].max(1e-12);
            logdet += lam.ln();
            let v = eig.eigenvectors.column(j);
            sample.column_mut(j).copy_from(&(v * lam.sqrt()));
            precision += v * v.transpose() / lam;
        }
        OmegaOps { sample, precision, logdet }
    }

    /// Gaussian log-density log N(u; m, Ω) up to the dimension constant
    /// −q/2·ln 2π (which cancels in every ratio we form).
    #[inline]
    pub fn log_density_unnorm(&self, u: &DVector<f64>, m: &DVector<f64>) -> f64 {
        let e = u - m;
        -0.5 * (self.precision.clone() * &e).dot(&e) - 0.5 * self.logdet
    }
}

/// Restore an ErrorModel value with updated parameters, preserving the kind.
pub fn error_with_params(kind: &ErrorModel, a: f64, b: f64) -> ErrorModel {
    match kind {
        ErrorModel::Constant { .. } => ErrorModel::Constant { a },
        ErrorModel::Proportional { .. } => ErrorModel::Proportional { b },
        ErrorModel::Combined { .. } => ErrorModel::Combined { a, b },
        ErrorModel::Exponential { .. } => ErrorModel::Exponential { a },
    }
}
