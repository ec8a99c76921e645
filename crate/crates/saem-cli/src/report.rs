//! The structured fit report.
//!
//! `saem fit` writes a single TOML file (`fit.toml`) holding everything a
//! downstream command needs: the data reference, the model specification as
//! configured (initial values included), the estimation options, the final
//! estimates, likelihood and information criteria when computed, run
//! statistics, and the sampler state required to resume conditional
//! sampling. `simulate`, `vpc`, `bootstrap`, `stepwise`, and `compare` all
//! accept this file and reconstruct a [`SaemFit`] from it plus the data
//! file — no auxiliary state is needed.
//!
//! The writer is deterministic: serialization order is fixed by struct
//! declaration order and every collection preserves insertion order, so a
//! byte-identical fit produces a byte-identical report.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use saem_core::builtins;
use saem_core::data::{load_dataset, Dataset, OutcomeKind, Schema};
use saem_core::likelihood::{LikelihoodEstimate, LikelihoodOptions};
use saem_core::model::{CovariateRelation, ErrorModel, NlmeModel, OmegaPattern, ParameterSpec, Transform};
use saem_core::saem::mcmc::Scales;
use saem_core::saem::{param_labels, AcceptanceRates, SaemFit, SaemOptions, Traces};
use saem_core::selection::CriterionReport;

use crate::config::parse_outcome;
use crate::{CliError, Result};

/// Format version of the report file.
pub const FORMAT_VERSION: u32 = 1;

/// Canonical file name of a fit report inside an output directory.
pub const REPORT_FILE: &str = "fit.toml";

// ---------------------------------------------------------------------------
// Serialized structure
// ---------------------------------------------------------------------------

/// Top-level report. Field order is the file's section order; scalar fields
/// must precede tables.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    /// Report format version.
    pub format_version: u32,
    /// Producing tool.
    pub tool: String,
    /// Subcommand that produced the report (`fit`, `stepwise`, ...).
    pub command: String,
    /// Data reference.
    pub data: ReportData,
    /// Model specification as configured (initial values, not estimates).
    pub model: ReportModel,
    /// Estimation options.
    pub options: ReportOptions,
    /// Final estimates.
    pub estimates: ReportEstimates,
    /// Marginal log-likelihood, when estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<ReportLikelihood>,
    /// Information criteria, when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<ReportCriteria>,
    /// Run statistics.
    pub run: ReportRun,
    /// Sampler state for downstream conditional sampling.
    pub state: ReportState,
}

/// `[data]` section.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportData {
    /// Data file path as passed to the fit. Relative paths resolve against
    /// the working directory first, then the report's own directory.
    pub path: String,
    /// Outcome kind.
    pub outcome: String,
    /// Subjects in the analysis dataset (after exclusions).
    pub n_subjects: usize,
    /// Observation rows carrying likelihood information.
    pub n_obs: usize,
    /// Derivation applied to the file before fitting (hurdle parts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derive: Option<String>,
    /// Covariates median-imputed after loading, in application order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub impute_median: Vec<String>,
    /// Column schema.
    pub schema: ReportSchema,
}

/// `[data.schema]` section (mirrors [`Schema`], with a TOML-safe optional
/// censoring entry).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSchema {
    /// Grouping column.
    pub group: String,
    /// Predictor columns (primary predictor first).
    pub predictors: Vec<String>,
    /// Response column.
    pub response: String,
    /// Covariate columns.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Censoring column (tte).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censoring: Option<String>,
}

impl From<&Schema> for ReportSchema {
    fn from(s: &Schema) -> Self {
        ReportSchema {
            group: s.group.clone(),
            predictors: s.predictors.clone(),
            response: s.response.clone(),
            covariates: s.covariates.clone(),
            censoring: s.censoring.clone(),
        }
    }
}

impl ReportSchema {
    fn to_schema(&self) -> Schema {
        Schema {
            group: self.group.clone(),
            predictors: self.predictors.clone(),
            response: self.response.clone(),
            covariates: self.covariates.clone(),
            censoring: self.censoring.clone(),
        }
    }
}

/// `[model]` section.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportModel {
    /// Built-in model name.
    pub name: String,
    /// Estimated Ω covariances as parameter-name pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub omega_corr: Vec<(String, String)>,
    /// Parameter specifications with their initial values.
    pub parameters: Vec<ReportParameter>,
    /// Covariate relations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<ReportCovariate>,
    /// Initial residual-error model (Gaussian outcomes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ReportError>,
}

/// One `[[model.parameters]]` entry.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParameter {
    /// Parameter name.
    pub name: String,
    /// Transform name.
    pub transform: String,
    /// Initial value (natural scale).
    pub init: f64,
    /// IIV indicator.
    pub iiv: bool,
}

/// One `[[model.covariates]]` entry.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportCovariate {
    /// Target parameter name.
    pub parameter: String,
    /// Covariate column.
    pub column: String,
}

/// Residual-error model entry (used for both the initial spec and the
/// estimate).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportError {
    /// Kind label.
    pub kind: String,
    /// Additive component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Proportional component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl From<&ErrorModel> for ReportError {
    fn from(e: &ErrorModel) -> Self {
        match *e {
            ErrorModel::Constant { a } => ReportError { kind: "constant".into(), a: Some(a), b: None },
            ErrorModel::Proportional { b } => {
                ReportError { kind: "proportional".into(), a: None, b: Some(b) }
            }
            ErrorModel::Combined { a, b } => {
                ReportError { kind: "combined".into(), a: Some(a), b: Some(b) }
            }
            ErrorModel::Exponential { a } => {
                ReportError { kind: "exponential".into(), a: Some(a), b: None }
            }
        }
    }
}

impl ReportError {
    fn to_error_model(&self) -> Result<ErrorModel> {
        let need = |v: Option<f64>, n: &str| {
            v.ok_or_else(|| {
                CliError::validation(format!(
                    "report error model `{}` is missing component `{n}`",
                    self.kind
                ))
            })
        };
        Ok(match self.kind.as_str() {
            "constant" => ErrorModel::Constant { a: need(self.a, "a")? },
            "proportional" => ErrorModel::Proportional { b: need(self.b, "b")? },
            "combined" => ErrorModel::Combined { a: need(self.a, "a")?, b: need(self.b, "b")? },
            "exponential" => ErrorModel::Exponential { a: need(self.a, "a")? },
            other => {
                return Err(CliError::validation(format!(
                    "report has unknown error-model kind `{other}`"
                )))
            }
        })
    }
}

/// `[options]` section (mirrors [`SaemOptions`]).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    /// Exploration iterations.
    pub k1: usize,
    /// Smoothing iterations.
    pub k2: usize,
    /// Chain count as configured (0 = automatic).
    pub chains: usize,
    /// Burn-in iterations.
    pub burn: usize,
    /// Kernel sub-iterations.
    pub mcmc: (usize, usize, usize),
    /// Annealing factor.
    pub tau: f64,
    /// Annealing window (absent = K1/2 rule).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<usize>,
    /// Target acceptance rate.
    pub target_accept: f64,
    /// Master seed.
    pub seed: u64,
    /// Initial covariate coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_init: Option<Vec<f64>>,
    /// Initial Ω matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_init: Option<Vec<Vec<f64>>>,
}

impl From<&SaemOptions> for ReportOptions {
    fn from(o: &SaemOptions) -> Self {
        ReportOptions {
            k1: o.k1,
            k2: o.k2,
            chains: o.n_chains,
            burn: o.n_burn,
            mcmc: o.n_mcmc,
            tau: o.tau,
            anneal: o.anneal_len,
            target_accept: o.target_accept,
            seed: o.seed,
            beta_init: o.beta_init.clone(),
            omega_init: o.omega_init.clone(),
        }
    }
}

impl ReportOptions {
    fn to_options(&self) -> SaemOptions {
        SaemOptions {
            k1: self.k1,
            k2: self.k2,
            n_chains: self.chains,
            n_burn: self.burn,
            n_mcmc: self.mcmc,
            tau: self.tau,
            anneal_len: self.anneal,
            target_accept: self.target_accept,
            seed: self.seed,
            omega_init: self.omega_init.clone(),
            beta_init: self.beta_init.clone(),
        }
    }
}

/// `[estimates]` section.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportEstimates {
    /// Reported parameter labels (natural-scale population parameters,
    /// covariate coefficients, Ω entries, error parameters).
    pub names: Vec<String>,
    /// Values aligned with `names`.
    pub values: Vec<f64>,
    /// Working-scale fixed-effect vector b.
    pub b: Vec<f64>,
    /// Full Ω matrix, row by row.
    pub omega: Vec<Vec<f64>>,
    /// Fitted residual-error model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ReportError>,
}

/// `[likelihood]` section.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportLikelihood {
    /// Method label (`is`, `gq`, `lin`).
    pub method: String,
    /// Total log-likelihood.
    pub loglik: f64,
    /// Monte-Carlo standard error (importance sampling).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_se: Option<f64>,
    /// Importance-sampling size used.
    pub n_is: usize,
    /// Quadrature nodes used.
    pub n_nodes: usize,
    /// Seed of the likelihood draws.
    pub seed: u64,
}

/// `[criteria]` section (mirrors [`CriterionReport`]).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportCriteria {
    /// Likelihood method the criteria are based on.
    pub method: String,
    /// Log-likelihood.
    pub loglik: f64,
    /// Parameters penalized at rate ln N.
    pub p_subject: usize,
    /// Parameters penalized at rate ln n_tot.
    pub p_obs: usize,
    /// Subjects N.
    pub n_subjects: usize,
    /// Observations n_tot.
    pub n_obs: usize,
    /// Akaike criterion.
    pub aic: f64,
    /// Schwarz criterion (ln N penalty).
    pub bic: f64,
    /// Hybrid criterion (split penalty).
    pub bicc: f64,
}

impl ReportCriteria {
    fn from_report(c: &CriterionReport) -> Self {
        ReportCriteria {
            method: c.method.clone(),
            loglik: c.loglik,
            p_subject: c.p_subject,
            p_obs: c.p_obs,
            n_subjects: c.n_subjects,
            n_obs: c.n_obs,
            aic: c.aic,
            bic: c.bic,
            bicc: c.bicc,
        }
    }

    /// Rebuild a [`CriterionReport`] under the given model name.
    pub fn to_report(&self, name: &str) -> CriterionReport {
        CriterionReport {
            name: name.to_string(),
            method: self.method.clone(),
            loglik: self.loglik,
            p_subject: self.p_subject,
            p_obs: self.p_obs,
            n_subjects: self.n_subjects,
            n_obs: self.n_obs,
            aic: self.aic,
            bic: self.bic,
            bicc: self.bicc,
        }
    }
}

/// `[run]` section.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRun {
    /// Iterations run (K1 + K2).
    pub iterations: usize,
    /// Chains actually used.
    pub chains_used: usize,
    /// Mean acceptance rate, kernel 1.
    pub accept_k1: f64,
    /// Mean acceptance rate, kernel 2.
    pub accept_k2: f64,
    /// Mean acceptance rate, kernel 3.
    pub accept_k3: f64,
    /// Warnings accumulated during the run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `[state]` section: the sampler state downstream commands resume from.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportState {
    /// Componentwise-kernel proposal scales.
    pub scales_cw: Vec<f64>,
    /// Block-kernel proposal scales.
    pub scales_block: Vec<f64>,
    /// Per-subject SA-averaged individual parameters (working scale).
    pub mean_phi: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Inputs for building a report that are not part of the [`SaemFit`].
#[derive(Debug, Clone)]
pub struct ReportMeta {
    /// Producing subcommand.
    pub command: String,
    /// Data path as passed on the command line / config.
    pub data_path: String,
    /// Derivation note (hurdle parts).
    pub derive: Option<String>,
    /// Median-imputed covariates, in order.
    pub impute_median: Vec<String>,
    /// Initial residual-error model (the configured one; the fitted model
    /// carries the final values).
    pub initial_error: Option<ErrorModel>,
}

impl FitReport {
    /// Build a report from a finished fit.
    pub fn from_fit(
        meta: &ReportMeta,
        fit: &SaemFit,
        ll: Option<(&LikelihoodEstimate, &LikelihoodOptions)>,
        criteria: Option<&CriterionReport>,
    ) -> FitReport {
        let model = &fit.model;
        let names = param_labels(model);
        let values: Vec<f64> =
            saem_core::saem::param_row(model, &fit.b, &fit.omega, fit.error.as_ref());
        let d = model.d();

        FitReport {
            format_version: FORMAT_VERSION,
            tool: "saem".to_string(),
            command: meta.command.clone(),
            data: ReportData {
                path: meta.data_path.clone(),
                outcome: fit.data.outcome.to_string(),
                n_subjects: fit.data.n_subjects(),
                n_obs: fit.data.n_obs(),
                derive: meta.derive.clone(),
                impute_median: meta.impute_median.clone(),
                schema: ReportSchema::from(&fit.data.schema),
            },
            model: ReportModel {
                name: model.model.name().to_string(),
                omega_corr: model
                    .omega
                    .corr
                    .iter()
                    .map(|&(i, j)| (model.params[i].name.clone(), model.params[j].name.clone()))
                    .collect(),
                parameters: model
                    .params
                    .iter()
                    .map(|p| ReportParameter {
                        name: p.name.clone(),
                        transform: p.transform.to_string(),
                        init: p.init,
                        iiv: p.iiv,
                    })
                    .collect(),
                covariates: model
                    .covariates
                    .iter()
                    .map(|rel| ReportCovariate {
                        parameter: model.params[rel.param].name.clone(),
                        column: rel.covariate.clone(),
                    })
                    .collect(),
                error: meta.initial_error.as_ref().map(ReportError::from),
            },
            options: ReportOptions::from(&fit.options),
            estimates: ReportEstimates {
                names,
                values,
                b: fit.b.iter().cloned().collect(),
                omega: (0..d)
                    .map(|i| (0..d).map(|j| fit.omega[(i, j)]).collect())
                    .collect(),
                error: fit.error.as_ref().map(ReportError::from),
            },
            likelihood: ll.map(|(est, opts)| ReportLikelihood {
                method: match est.method {
                    saem_core::likelihood::LikelihoodMethod::ImportanceSampling => "is".into(),
                    saem_core::likelihood::LikelihoodMethod::GaussHermite => "gq".into(),
                    saem_core::likelihood::LikelihoodMethod::Linearization => "lin".into(),
                },
                loglik: est.total,
                mc_se: est.mc_se,
                n_is: opts.n_is,
                n_nodes: opts.n_nodes,
                seed: opts.seed,
            }),
            criteria: criteria.map(|c| ReportCriteria::from_report(&c.name, c)),
            run: ReportRun {
                iterations: fit.iterations,
                chains_used: fit.options.resolve_chains(fit.data.n_subjects()),
                accept_k1: fit.accept.k1,
                accept_k2: fit.accept.k2,
                accept_k3: fit.accept.k3,
                warnings: fit.warnings.clone(),
            },
            state: ReportState {
                scales_cw: fit.scales.cw.clone(),
                scales_block: fit.scales.block.clone(),
                mean_phi: fit
                    .mean_phi
                    .iter()
                    .map(|phi| phi.iter().cloned().collect())
                    .collect(),
            },
        }
    }

    /// Serialize to TOML text.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| CliError::validation(format!("cannot serialize fit report: {e}")))
    }

    /// Write to a file.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Read a report from `path`. When `path` is a directory, its
    /// `fit.toml` is read.
    pub fn load(path: &Path) -> Result<(FitReport, PathBuf)> {
        let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| {
            CliError::validation(format!("cannot read fit report `{}`: {e}", file.display()))
        })?;
        let report: FitReport = toml::from_str(&text).map_err(|e| {
            CliError::validation(format!(
                "fit report `{}`: {}",
                file.display(),
                crate::config::compact_toml_error(&e)
            ))
        })?;
        if report.format_version != FORMAT_VERSION {
            return Err(CliError::validation(format!(
                "fit report `{}` has format version {} (this tool reads version {})",
                file.display(),
                report.format_version,
                FORMAT_VERSION
            )));
        }
        Ok((report, file))
    }

    /// Rebuild the model specification (initial values, fitted error).
    pub fn to_model(&self) -> Result<NlmeModel> {
        let entry = builtins::builtin(&self.model.name)?;
        let mut params: Vec<ParameterSpec> = Vec::with_capacity(self.model.parameters.len());
        for p in &self.model.parameters {
            let transform = match p.transform.as_str() {
                "identity" => Transform::Identity,
                "log" => Transform::Log,
                "logit" => Transform::Logit,
                other => {
                    return Err(CliError::validation(format!(
                        "report has unknown transform `{other}`"
                    )))
                }
            };
            params.push(ParameterSpec {
                name: p.name.clone(),
                transform,
                init: p.init,
                iiv: p.iiv,
            });
        }
        let index_of = |name: &str| -> Result<usize> {
            params.iter().position(|p| p.name == name).ok_or_else(|| {
                CliError::validation(format!("report references unknown parameter `{name}`"))
            })
        };
        let mut covariates = Vec::with_capacity(self.model.covariates.len());
        for c in &self.model.covariates {
            covariates.push(CovariateRelation {
                param: index_of(&c.parameter)?,
                covariate: c.column.clone(),
            });
        }
        let diag: Vec<bool> = params.iter().map(|p| p.iiv).collect();
        let mut corr = Vec::with_capacity(self.model.omega_corr.len());
        for (a, b) in &self.model.omega_corr {
            let i = index_of(a)?;
            let j = index_of(b)?;
            corr.push((i.min(j), i.max(j)));
        }
        let error = match &self.estimates.error {
            Some(e) => Some(e.to_error_model()?),
            None => None,
        };
        Ok(NlmeModel {
            model: entry.model,
            params,
            covariates,
            omega: OmegaPattern { diag, corr },
            error,
        })
    }

    /// Resolve the data path: as stored, falling back to the report's
    /// directory for relative paths.
    pub fn resolve_data_path(&self, report_file: &Path) -> PathBuf {
        let raw = PathBuf::from(&self.data.path);
        if raw.is_relative() && !raw.exists() {
            if let Some(dir) = report_file.parent() {
                let alt = dir.join(&raw);
                if alt.exists() {
                    return alt;
                }
            }
        }
        raw
    }

    /// Reload the analysis dataset: read the file, re-apply median
    /// imputation, and re-apply the model's missing-covariate exclusion.
    pub fn load_data(&self, report_file: &Path, model: &NlmeModel) -> Result<Dataset> {
        let outcome = parse_outcome(&self.data.outcome)?;
        let schema = self.data.schema.to_schema();
        let path = self.resolve_data_path(report_file);
        let mut ds = load_dataset(&path, &schema, outcome)?;
        for c in &self.data.impute_median {
            ds.impute_median(c)?;
        }
        let used: Vec<usize> = {
            let mut ix: Vec<usize> = model
                .covariates
                .iter()
                .map(|rel| ds.covariate_index(&rel.covariate))
                .collect::<Result<_>>()?;
            ix.sort_unstable();
            ix.dedup();
            ix
        };
        let (ds, _) = ds.require_covariates(&used);
        if ds.n_subjects() != self.data.n_subjects {
            return Err(CliError::validation(format!(
                "data file `{}` has {} subjects where the report recorded {}; the file changed since the fit",
                path.display(),
                ds.n_subjects(),
                self.data.n_subjects
            )));
        }
        Ok(ds)
    }

    /// Reconstruct a [`SaemFit`] equivalent to the one the report was
    /// written from. The reconstructed fit carries a single pseudo-chain at
    /// the SA-averaged individual parameters; every downstream consumer
    /// (simulation, conditional sampling, bootstrap, likelihood, stepwise)
    /// reads only the fields restored here.
    pub fn to_fit(&self, report_file: &Path) -> Result<SaemFit> {
        let model = self.to_model()?;
        let data = self.load_data(report_file, &model)?;

        let expected = param_labels(&model);
        if expected != self.estimates.names {
            return Err(CliError::validation(
                "report estimates are inconsistent with its model section",
            ));
        }
        let n_fixed = model.n_fixed();
        if self.estimates.b.len() != n_fixed {
            return Err(CliError::validation(format!(
                "report has {} fixed effects where the model needs {n_fixed}",
                self.estimates.b.len()
            )));
        }
        let d = model.d();
        if self.estimates.omega.len() != d
            || self.estimates.omega.iter().any(|row| row.len() != d)
        {
            return Err(CliError::validation(format!(
                "report Ω is not a {d}×{d} matrix"
            )));
        }
        let n = data.n_subjects();
        if self.state.mean_phi.len() != n {
            return Err(CliError::validation(format!(
                "report state holds {} subjects where the data has {n}",
                self.state.mean_phi.len()
            )));
        }
        if self.state.mean_phi.iter().any(|row| row.len() != d) {
            return Err(CliError::validation(
                "report state has individual parameters of the wrong dimension",
            ));
        }

        let b = DVector::from_vec(self.estimates.b.clone());
        let omega = DMatrix::from_fn(d, d, |i, j| self.estimates.omega[i][j]);
        let error = model.error;
        let mean_phi: Vec<DVector<f64>> = self
            .state
            .mean_phi
            .iter()
            .map(|row| DVector::from_vec(row.clone()))
            .collect();

        let traces = Traces {
            names: self.estimates.names.clone(),
            gamma: vec![0.0],
            rows: vec![self.estimates.values.clone()],
        };

        Ok(SaemFit {
            model,
            data,
            options: self.options.to_options(),
            b,
            omega,
            error,
            traces,
            phi_chains: vec![mean_phi.clone()],
            mean_phi,
            scales: Scales {
                cw: self.state.scales_cw.clone(),
                block: self.state.scales_block.clone(),
            },
            accept: AcceptanceRates {
                k1: self.run.accept_k1,
                k2: self.run.accept_k2,
                k3: self.run.accept_k3,
            },
            iterations: self.run.iterations,
            warnings: self.run.warnings.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Companion CSV artifacts
// ---------------------------------------------------------------------------

/// Write the per-iteration parameter traces (`iteration, gamma, <labels>`).
pub fn write_traces_csv(path: &Path, traces: &Traces) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string(), "gamma".to_string()];
    header.extend(traces.names.iter().cloned());
    w.write_record(&header)?;
    for (k, row) in traces.rows.iter().enumerate() {
        let mut rec = vec![format!("{k}"), format!("{}", traces.gamma[k])];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
