//! Standard errors and confidence intervals: linearized Fisher information
//! (Gaussian outcomes), case bootstrap, and the conditional nonparametric
//! bootstrap.
//!
//! Parameter vectors follow the same layout as the fit report: natural-scale
//! population parameters, covariate coefficients, Ω entries on the pattern,
//! then error parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conditional::{estimate_conditional, ConditionalEstimates, ConditionalOptions};
use crate::data::{Dataset, OutcomeKind};
use crate::diagnostics::simulate_subject_rows;
use crate::error::{Error, Result};
use crate::model::ErrorModel;
use crate::numerics::{quantile, sd};
use crate::rng::{derive_seed, stream};
use crate::saem::prepared::PreparedModel;
use crate::saem::{param_labels, param_row, run_saem, SaemFit};

/// How an uncertainty result was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyMethod {
    /// Linearized Fisher information matrix (FOCE approximation).
    FimLinearized,
    /// Case bootstrap (resampling subjects with replacement).
    CaseBootstrap,
    /// Conditional nonparametric bootstrap (resampling rescaled conditional
    /// random effects, then simulating responses).
    ConditionalBootstrap,
}

impl std::fmt::Display for UncertaintyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UncertaintyMethod::FimLinearized => "fim-lin",
            UncertaintyMethod::CaseBootstrap => "case-boot",
            UncertaintyMethod::ConditionalBootstrap => "cond-boot",
        })
    }
}

/// Uncertainty of one reported parameter.
#[derive(Debug, Clone)]
pub struct ParameterUncertainty {
    /// Parameter label (same vocabulary as the fit report).
    pub name: String,
    /// Point estimate from the original fit.
    pub estimate: f64,
    /// Standard error.
    pub se: f64,
    /// Relative standard error, 100·SE/|estimate|.
    pub rse_pct: f64,
    /// 95% confidence interval (Wald for the FIM, percentile for bootstraps).
    pub ci: (f64, f64),
    /// Flagged unreliable (singular FIM direction, degenerate resampling).
    pub flagged: bool,
}

/// Standard errors and CIs for every reported parameter.
#[derive(Debug, Clone)]
pub struct UncertaintyResult {
    /// Producing method.
    pub method: UncertaintyMethod,
    /// Per-parameter uncertainty, in fit-report order.
    pub parameters: Vec<ParameterUncertainty>,
    /// Bootstrap replicates requested (0 for the FIM).
    pub b_total: usize,
    /// Successful replicates used.
    pub b_used: usize,
    /// Failed replicates (excluded).
    pub failures: usize,
    /// Per-replicate parameter rows (successful replicates only).
    pub replicates: Vec<Vec<f64>>,
    /// Whole-result reliability flag (>20% failures, degeneracy).
    pub unreliable: bool,
    /// Warnings.
    pub warnings: Vec<String>,
}

/// Bootstrap options.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    /// Number of replicates.
    pub b: usize,
    /// Master seed for resampling and replicate refits.
    pub seed: u64,
    /// Refit replicates from the fitted θ̂ instead of the original initial
    /// values (default false, avoiding optimistic anchoring).
    pub start_from_estimate: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { b: 200, seed: 1, start_from_estimate: false }
    }
}

// ---------------------------------------------------------------------------
// Linearized FIM
// ---------------------------------------------------------------------------

/// Standard errors from the Fisher information of the linearized (FOCE)
/// Gaussian model at θ̂.
///
/// The model prediction is expanded to first order in φ around each
/// subject's conditional mean, making y_i multivariate normal with a mean
/// linear in the fixed effects and a covariance linear in Ω (plus the error
/// variances). The FIM is block diagonal between those two groups.
pub fn fim_linearized(fit: &SaemFit) -> Result<UncertaintyResult> {
    if fit.data.outcome != OutcomeKind::Gaussian {
        return Err(Error::unsupported(
            "the linearized FIM is defined for Gaussian outcomes only; use a bootstrap method",
        ));
    }
    let pm = PreparedModel::new(&fit.model, &fit.data)?;
    let error = fit
        .error
        .as_ref()
        .ok_or_else(|| Error::computation("Gaussian model without an error model"))?;
    let cond = estimate_conditional(fit, &ConditionalOptions::default())?;
    let mut warnings = cond.warnings.clone();

    let model = &fit.model;
    let d = pm.d();
    let n_fixed = model.n_fixed();
    // Variance-parameter layout: Ω diagonal entries on the pattern, then
    // correlation pairs, then the error parameters.
    let omega_free: Vec<(usize, usize)> = (0..d)
        .filter(|&k| model.omega.diag[k])
        .map(|k| (k, k))
        .chain(model.omega.corr.iter().copied())
        .collect();
    let n_err = error.n_params();
    let n_var = omega_free.len() + n_err;

    let mut f_mean = DMatrix::<f64>::zeros(n_fixed, n_fixed);
    let mut f_var = DMatrix::<f64>::zeros(n_var, n_var);

    for i in 0..pm.n_subjects() {
        let mut phi = cond.subjects[i].mean.clone();
        pm.clamp_no_iiv(i, &fit.b, &mut phi);
        let n = pm.data.subjects[i].response.len();
        let base = pm.gaussian_residuals(i, &phi)?;

        // Full-coordinate Jacobian of the modeling-scale prediction.
        let mut jac = DMatrix::<f64>::zeros(n, d);
        for k in 0..d {
            let h = 1e-4 * (1.0 + phi[k].abs());
            let mut up = phi.clone();
            up[k] += h;
            let rp = pm.gaussian_residuals(i, &up)?;
            let mut dn = phi.clone();
            dn[k] -= h;
            let rm = pm.gaussian_residuals(i, &dn)?;
            for r in 0..n {
                jac[(r, k)] = -(rp[r].0 - rm[r].0) / (2.0 * h);
            }
        }
        // V_i = J Ω Jᵀ + diag(g²) over all coordinates (no-IIV columns of Ω
        // are zero, so only the IIV block contributes).
        let mut v = &jac * &fit.omega * jac.transpose();
        let mut f_nat = Vec::with_capacity(n);
        for r in 0..n {
            let g = match error {
                ErrorModel::Exponential { a } => *a,
                e => e.sd(base[r].1),
            };
            v[(r, r)] += g * g;
            f_nat.push(base[r].1);
        }
        let v_inv = v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::computation("linearized covariance is not positive definite"))?
            .inverse();

        // Mean block: ∂μ/∂b = J X_i exactly (the linearized mean is linear).
        let m_i = &jac * &pm.x[i];
        f_mean += m_i.transpose() * &v_inv * &m_i;

        // Variance block: ½ tr(V⁻¹ ∂V/∂a V⁻¹ ∂V/∂b).
        let mut dvs: Vec<DMatrix<f64>> = Vec::with_capacity(n_var);
        for &(k, l) in &omega_free {
            let jk = jac.column(k);
            let jl = jac.column(l);
            let dv = if k == l {
                &jk * jl.transpose()
            } else {
                &jk * jl.transpose() + jl * jk.transpose()
            };
            dvs.push(dv);
        }
        match error {
            ErrorModel::Constant { a } | ErrorModel::Exponential { a } => {
                dvs.push(DMatrix::identity(n, n) * (2.0 * a));
            }
            ErrorModel::Proportional { b } => {
                dvs.push(DMatrix::from_diagonal(&DVector::from_iterator(
                    n,
                    f_nat.iter().map(|f| 2.0 * b * f * f),
                )));
            }
            ErrorModel::Combined { a, b } => {
                dvs.push(DMatrix::identity(n, n) * (2.0 * a));
                dvs.push(DMatrix::from_diagonal(&DVector::from_iterator(
                    n,
                    f_nat.iter().map(|f| 2.0 * b * f * f),
                )));
            }
        }
        let half: Vec<DMatrix<f64>> = dvs.iter().map(|dv| &v_inv * dv).collect();
        for a in 0..n_var {
            for b2 in a..n_var {
                let tr = (&half[a] * &half[b2]).trace();
                f_var[(a, b2)] += 0.5 * tr;
                if a != b2 {
                    f_var[(b2, a)] += 0.5 * tr;
                }
            }
        }
    }

    // Invert each block, with spectral pseudo-inverse + flags when singular.
    let (cov_mean, flagged_mean) = robust_inverse(&f_mean, &mut warnings, "fixed-effect");
    let (cov_var, flagged_var) = robust_inverse(&f_var, &mut warnings, "variance");

    // Map to the reported layout with delta-method SEs for transformed
    // population parameters.
    let labels = param_labels(model);
    let estimates = param_row(model, &fit.b, &fit.omega, fit.error.as_ref());
    let mut parameters = Vec::with_capacity(labels.len());
    for (idx, (name, est)) in labels.iter().zip(&estimates).enumerate() {
        let (se, flagged) = if idx < n_fixed {
            let se_work = cov_mean[(idx, idx)].max(0.0).sqrt();
            let se = if idx < d {
                se_work * model.params[idx].transform.dpsi_dphi(fit.b[idx]).abs()
            } else {
                se_work
            };
            (se, flagged_mean[idx])
        } else {
            let j = idx - n_fixed;
            (cov_var[(j, j)].max(0.0).sqrt(), flagged_var[j])
        };
        let rse = if *est != 0.0 { 100.0 * se / est.abs() } else { f64::INFINITY };
        parameters.push(ParameterUncertainty {
            name: name.clone(),
            estimate: *est,
            se,
            rse_pct: rse,
            ci: (est - 1.96 * se, est + 1.96 * se),
            flagged,
        });
    }
    let unreliable = parameters.iter().any(|p| p.flagged);
    Ok(UncertaintyResult {
        method: UncertaintyMethod::FimLinearized,
        parameters,
        b_total: 0,
        b_used: 0,
        failures: 0,
        replicates: Vec::new(),
        unreliable,
        warnings,
    })
}

/// Invert a symmetric information matrix; on near-singularity switch to a
/// spectral pseudo-inverse and flag the parameters loading on null
/// directions.
fn robust_inverse(
    f: &DMatrix<f64>,
    warnings: &mut Vec<String>,
    what: &str,
) -> (DMatrix<f64>, Vec<bool>) {
    let n = f.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), Vec::new());
    }
    let eig = f.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_eig.max(1e-300) * 1e-10;
    let mut flagged = vec![false; n];
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut singular = false;
    for j in 0..n {
        let lam = eig.eigenvalues[j];
        let v = eig.eigenvectors.column(j);
        if lam <= tol {
            singular = true;
            for k in 0..n {
                if v[k].abs() > 1e-6 {
                    flagged[k] = true;
                }
            }
        } else {
            cov += v * v.transpose() / lam;
        }
    }
    if singular {
        warnings.push(format!(
            "{what} information block is singular; pseudo-inverse used and affected parameters flagged"
        ));
    }
    (cov, flagged)
}

// ---------------------------------------------------------------------------
// Case bootstrap
// ---------------------------------------------------------------------------

/// One case-bootstrap replicate dataset: N subjects drawn with replacement,
/// rows kept intact, ids relabeled to stay unique.
pub(crate) fn case_resample(ds: &Dataset, rng: &mut ChaCha8Rng) -> Dataset {
    let n = ds.n_subjects();
    let mut out = ds.clone();
    out.subjects = (0..n)
        .map(|k| {
            let pick = rng.random_range(0..n);
            let mut s = ds.subjects[pick].clone();
            s.id = format!("b{k}_{}", s.id);
            s
        })
        .collect();
    out
}

/// Case bootstrap: B refits on datasets of N subjects resampled with
/// replacement, each with the original options and a fresh seed.
pub fn case_bootstrap(fit: &SaemFit, opts: &BootstrapOptions) -> Result<UncertaintyResult> {
    if opts.b < 2 {
        return Err(Error::validation("case bootstrap needs B >= 2 replicates"));
    }
    let model = refit_model(fit, opts.start_from_estimate);
    let rows: Vec<Result<Vec<f64>>> = (0..opts.b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(opts.seed, "case-boot", &[rep as u64]);
            let boot_ds = case_resample(&fit.data, &mut rng);
            let mut saem_opts = fit.options.clone();
            saem_opts.seed = derive_seed(opts.seed, "case-boot-fit", &[rep as u64]);
            let refit = run_saem(&model, &boot_ds, &saem_opts)?;
            Ok(param_row(&refit.model, &refit.b, &refit.omega, refit.error.as_ref()))
        })
        .collect();
    let mut res = summarize_bootstrap(fit, UncertaintyMethod::CaseBootstrap, opts.b, rows)?;
    let n = fit.data.n_subjects();
    if n < 5 {
        // Resampling a handful of subjects cannot characterize between-subject
        // variability; with one subject every replicate is the original data.
        res.unreliable = true;
        res.warnings.push(format!(
            "case bootstrap over {n} subject(s) is degenerate; intervals are unreliable"
        ));
    }
    Ok(res)
}

/// The model used for replicate refits: original initial values by default,
/// or the fitted estimates when `start_from_estimate` is set.
fn refit_model(fit: &SaemFit, start_from_estimate: bool) -> crate::model::NlmeModel {
    if !start_from_estimate {
        return fit.model.clone();
    }
    let mut model = fit.model.clone();
    let psi_hat = fit.psi_pop();
    for (k, p) in model.params.iter_mut().enumerate() {
        p.init = psi_hat[k];
    }
    model
}

// ---------------------------------------------------------------------------
// Conditional bootstrap
// ---------------------------------------------------------------------------

/// Pool per-subject conditional η samples and rescale them so their
/// empirical covariance matches Ω̂ (shrinkage correction). Returns the
/// rescaled pool (IIV coordinates only).
pub(crate) fn rescaled_eta_pool(
    pm: &PreparedModel,
    fit: &SaemFit,
    cond: &ConditionalEstimates,
) -> Result<Vec<DVector<f64>>> {
    let q = pm.q();
    let mut pool: Vec<DVector<f64>> = Vec::new();
    for (i, s) in cond.subjects.iter().enumerate() {
        let pop = pm.to_iiv(&pm.phi_pop(i, &fit.b));
        for sample in &s.samples {
            pool.push(pm.to_iiv(sample) - &pop);
        }
    }
    if pool.len() < 2 {
        return Err(Error::computation(
            "conditional bootstrap needs retained conditional samples (none found)",
        ));
    }
    let m = pool.len() as f64;
    let mean = pool.iter().fold(DVector::<f64>::zeros(q), |acc, e| acc + e) / m;
    let mut c = DMatrix::<f64>::zeros(q, q);
    for e in &pool {
        let d = e - &mean;
        c += &d * d.transpose();
    }
    c /= m;
    // A = L_Ω · C^{-1/2} (spectral root), so A C Aᵀ = Ω̂.
    let omega_iiv = pm.omega_iiv(&fit.omega);
    let l_omega = omega_iiv
        .clone()
        .cholesky()
        .map(|ch| ch.l())
        .unwrap_or_else(|| {
            // Ω̂ may be floored/semi-definite; fall back to the spectral root.
            let eig = omega_iiv.clone().symmetric_eigen();
            let mut root = DMatrix::<f64>::zeros(q, q);
            for j in 0..q {
                let lam = eig.eigenvalues[j].max(0.0).sqrt();
                let v = eig.eigenvectors.column(j);
                root += &v * v.transpose() * lam;
            }
            root
        });
    let eig = c.symmetric_eigen();
    let mut c_inv_root = DMatrix::<f64>::zeros(q, q);
    for j in 0..q {
        let lam = eig.eigenvalues[j].max(1e-12);
        let v = eig.eigenvectors.column(j);
        c_inv_root += &v * v.transpose() / lam.sqrt();
    }
    let a = l_omega * c_inv_root;
    Ok(pool.into_iter().map(|e| &a * (e - &mean)).collect())
}

/// One conditional-bootstrap replicate dataset: η* resampled from the pooled
/// rescaled conditional samples, responses simulated on the original design.
pub(crate) fn conditional_replicate_dataset(
    pm: &PreparedModel,
    fit: &SaemFit,
    pool: &[DVector<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let mut out = fit.data.clone();
    for i in 0..pm.n_subjects() {
        let eta = &pool[rng.random_range(0..pool.len())];
        let mut phi = pm.phi_pop(i, &fit.b);
        for (j, &k) in pm.iiv.iter().enumerate() {
            phi[k] += eta[j];
        }
        let psi = fit.model.psi_of_phi(phi.as_slice());
        let y = simulate_subject_rows(&fit.model, pm, i, &psi, None, rng)?;
        out.subjects[i].response = y.clone();
        // Keep predictor columns that alias the response in sync.
        for (c, name) in out.schema.predictors.iter().enumerate() {
            if *name == out.schema.response {
                out.subjects[i].preds[c] = y.clone();
            }
        }
    }
    Ok(out)
}

/// Conditional nonparametric bootstrap.
pub fn conditional_bootstrap(
    fit: &SaemFit,
    cond: &ConditionalEstimates,
    opts: &BootstrapOptions,
) -> Result<UncertaintyResult> {
    if opts.b < 2 {
        return Err(Error::validation("conditional bootstrap needs B >= 2 replicates"));
    }
    if fit.data.outcome == OutcomeKind::Tte {
        return Err(Error::unsupported(
            "conditional bootstrap is not defined for single-event time-to-event data: with one event per subject there is no within-subject replication, so resampling conditional random effects is meaningless; use the case bootstrap",
        ));
    }
    let pm = PreparedModel::new(&fit.model, &fit.data)?;
    let pool = rescaled_eta_pool(&pm, fit, cond)?;
    let model = refit_model(fit, opts.start_from_estimate);

    // Surface a missing simulation kernel as a direct error, not a failed
    // replicate: dry-run one subject.
    {
        let mut rng = stream(opts.seed, "cond-boot-check", &[0]);
        let psi = fit.model.psi_of_phi(pm.phi_pop(0, &fit.b).as_slice());
        if let Err(e) = simulate_subject_rows(&fit.model, &pm, 0, &psi, None, &mut rng) {
            return Err(Error::unsupported(format!(
                "conditional bootstrap needs a simulation kernel for this model: {e}"
            )));
        }
    }

    let rows: Vec<Result<Vec<f64>>> = (0..opts.b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(opts.seed, "cond-boot", &[rep as u64]);
            let boot_ds = conditional_replicate_dataset(&pm, fit, &pool, &mut rng)?;
            let mut saem_opts = fit.options.clone();
            saem_opts.seed = derive_seed(opts.seed, "cond-boot-fit", &[rep as u64]);
            let refit = run_saem(&model, &boot_ds, &saem_opts)?;
            Ok(param_row(&refit.model, &refit.b, &refit.omega, refit.error.as_ref()))
        })
        .collect();
    summarize_bootstrap(fit, UncertaintyMethod::ConditionalBootstrap, opts.b, rows)
}

// ---------------------------------------------------------------------------
// Shared bootstrap aggregation
// ---------------------------------------------------------------------------

fn summarize_bootstrap(
    fit: &SaemFit,
    method: UncertaintyMethod,
    b_total: usize,
    rows: Vec<Result<Vec<f64>>>,
) -> Result<UncertaintyResult> {
    let mut warnings = Vec::new();
    let mut replicates = Vec::new();
    let mut failures = 0usize;
    for r in rows {
        match r {
            Ok(row) => replicates.push(row),
            Err(e) => {
                failures += 1;
                if failures <= 3 {
                    warnings.push(format!("replicate refit failed: {e}"));
                }
            }
        }
    }
    let b_used = replicates.len();
    if b_used < 2 {
        return Err(Error::computation(format!(
            "bootstrap failed: only {b_used} of {b_total} replicates refit successfully"
        )));
    }
    let mut unreliable = false;
    if failures * 5 > b_total {
        unreliable = true;
        warnings.push(format!(
            "{failures} of {b_total} replicates failed (>20%); results flagged unreliable"
        ));
    }

    let labels = param_labels(&fit.model);
    let estimates = param_row(&fit.model, &fit.b, &fit.omega, fit.error.as_ref());
    let mut parameters = Vec::with_capacity(labels.len());
    let mut any_degenerate = false;
    for (j, (name, est)) in labels.iter().zip(&estimates).enumerate() {
        let vals: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        let se = sd(&vals);
        let degenerate = se == 0.0;
        any_degenerate |= degenerate;
        let rse = if *est != 0.0 { 100.0 * se / est.abs() } else { f64::INFINITY };
        parameters.push(ParameterUncertainty {
            name: name.clone(),
            estimate: *est,
            se,
            rse_pct: rse,
            ci: (quantile(&vals, 0.025)?, quantile(&vals, 0.975)?),
            flagged: degenerate,
        });
    }
    if any_degenerate {
        warnings.push(
            "some parameters show zero resampling variability (degenerate bootstrap)".to_string(),
        );
        unreliable = true;
    }
    Ok(UncertaintyResult {
        method,
        parameters,
        b_total,
        b_used,
        failures,
        replicates,
        unreliable,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

/// Write the per-replicate estimate table (replicate, then one column per
/// parameter).
pub fn write_replicates_csv(
    path: impl AsRef<std::path::Path>,
    fit: &SaemFit,
    result: &UncertaintyResult,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["replicate".to_string()];
    header.extend(param_labels(&fit.model));
    w.write_record(&header)?;
    for (r, row) in result.replicates.iter().enumerate() {
        let mut rec = vec![format!("{}", r + 1)];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the summary table (parameter, estimate, SE, RSE%, CI, method, B,
/// failures).
pub fn write_uncertainty_csv(
    path: impl AsRef<std::path::Path>,
    result: &UncertaintyResult,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "parameter", "estimate", "se", "rse_pct", "ci_low", "ci_high", "method", "B", "failures",
    ])?;
    for p in &result.parameters {
        w.write_record([
            p.name.as_str(),
            &format!("{}", p.estimate),
            &format!("{}", p.se),
            &format!("{}", p.rse_pct),
            &format!("{}", p.ci.0),
            &format!("{}", p.ci.1),
            &result.method.to_string(),
            &format!("{}", result.b_used),
            &format!("{}", result.failures),
        ])?;
    }
    w.flush()?;
    Ok(())
}
