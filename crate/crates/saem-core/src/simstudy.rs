//! Simulation-study harness: repeated simulate-and-refit under a known truth.
//!
//! A scenario fixes a design (observation times, arms with covariate values),
//! a true model (population parameters, covariate coefficients, Ω, error),
//! the number of replicates S, the SAEM options for the refits, and an
//! initial-value setting. [`run_simstudy`] simulates S datasets from the
//! truth, fits each one, and reports the relative bias and relative root
//! mean square error of every reported parameter,
//!
//!   RB  = 100 · mean_s[(θ̂_s − θ⁰)/θ⁰],
//!   RRMSE = 100 · sqrt(mean_s[((θ̂_s − θ⁰)/θ⁰)²]),
//!
//! along with the per-replicate estimates themselves so the distribution can
//! be plotted. Random-effect variances are reported on the standard-deviation
//! scale (ω, not ω²) so their errors are comparable with the fixed effects.
//!
//! Replicates whose fit fails are excluded from the metrics, counted, and
//! reported. Everything is deterministic given the scenario seed: replicate
//! r simulates from the stream (seed, "simstudy", [r, subject]) and refits
//! with the SAEM seed derived as (seed, "simstudy-fit", [r]).

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{Dataset, OutcomeKind, Schema, SubjectData};
use crate::error::{Error, Result};
use crate::model::{NlmeModel, Transform};
use crate::rng::{derive_seed, stream};
use crate::saem::{param_labels, param_row, run_saem, SaemFit, SaemOptions};
use crate::saem::prepared::{OmegaOps, PreparedModel};

// ---------------------------------------------------------------------------
// Scenario specification
// ---------------------------------------------------------------------------

/// Initial-value setting for the replicate fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InitSetting {
    /// Start every fit at the true values (ψ⁰, β⁰, Ω⁰).
    Truth,
    /// Neutral defaults: working-scale means at 0 (ψ = 1 for log-normal
    /// parameters, 0.5 for logit-normal ones), zero covariate coefficients,
    /// Ω = I.
    Pop,
    /// Far from the truth: working-scale means sign-flipped (means at zero
    /// are shifted by +2 instead), zero covariate coefficients, Ω⁰ inflated
    /// fourfold.
    Far,
}

impl std::fmt::Display for InitSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitSetting::Truth => "true",
            InitSetting::Pop => "pop",
            InitSetting::Far => "far",
        })
    }
}

/// One treatment arm of the design: `n` subjects sharing covariate values.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Arm {
    /// Number of subjects in the arm.
    pub n: usize,
    /// Covariate values, aligned with the scenario's covariate names.
    pub covariates: Vec<f64>,
}

/// A complete simulation-study scenario.
#[derive(Debug, Clone)]
pub struct SimStudyScenario {
    /// Scenario label used in outputs.
    pub name: String,
    /// True model: population parameters in `params[].init`, residual error
    /// in `error`, covariate relations as fitted.
    pub model: NlmeModel,
    /// True covariate coefficients, aligned with `model.covariates`.
    pub beta_true: Vec<f64>,
    /// True Ω as a full d×d matrix (masked to the pattern).
    pub omega_true: Vec<Vec<f64>>,
    /// Observation times, strictly increasing.
    pub times: Vec<f64>,
    /// Covariate column names.
    pub covariate_names: Vec<String>,
    /// Arms of the design.
    pub arms: Vec<Arm>,
    /// Number of replicates S.
    pub s: usize,
    /// SAEM options for the replicate fits (seed is overridden per
    /// replicate).
    pub fit_options: SaemOptions,
    /// Initial-value setting for the replicate fits.
    pub init: InitSetting,
    /// Master seed for simulation and refits.
    pub seed: u64,
}

impl SimStudyScenario {
    fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::validation("a simulation study needs S >= 1 replicates"));
        }
        if self.times.is_empty() || self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("design times must be strictly increasing"));
        }
        if self.arms.is_empty() || self.arms.iter().all(|a| a.n == 0) {
            return Err(Error::validation("the design needs at least one subject"));
        }
        for arm in &self.arms {
            if arm.covariates.len() != self.covariate_names.len() {
                return Err(Error::validation(format!(
                    "arm has {} covariate values for {} covariate column(s)",
                    arm.covariates.len(),
                    self.covariate_names.len()
                )));
            }
        }
        if self.beta_true.len() != self.model.covariates.len() {
            return Err(Error::validation(format!(
                "beta_true has {} entries for {} covariate relation(s)",
                self.beta_true.len(),
                self.model.covariates.len()
            )));
        }
        if self.model.model.outcome() == OutcomeKind::Tte {
            return Err(Error::validation(
                "simulation-study templates cover Gaussian and discrete outcomes",
            ));
        }
        Ok(())
    }

    /// The template dataset: design rows with zero responses, waiting to be
    /// filled by simulation. For discrete outcomes the response column is
    /// aliased into the predictors, as the kernels expect.
    fn template(&self) -> Dataset {
        let discrete = self.model.model.outcome() != OutcomeKind::Gaussian;
        let mut predictors = vec!["time".to_string()];
        if discrete {
            predictors.push("y".to_string());
        }
        let schema = Schema {
            group: "id".into(),
            predictors,
            response: "y".into(),
            censoring: None,
            covariates: self.covariate_names.clone(),
        };
        let zeros = vec![0.0; self.times.len()];
        let mut subjects = Vec::new();
        for (a, arm) in self.arms.iter().enumerate() {
            for i in 0..arm.n {
                let mut preds = vec![self.times.clone()];
                if discrete {
                    preds.push(zeros.clone());
                }
                subjects.push(SubjectData {
                    id: format!("a{a}_{i}"),
                    preds,
                    response: zeros.clone(),
                    cens: None,
                    covariates: arm.covariates.clone(),
                });
            }
        }
        Dataset {
            subjects,
            schema,
            outcome: self.model.model.outcome(),
            load_warnings: vec![],
        }
    }

    /// The model used for replicate fits under the chosen initial setting.
    fn fit_model(&self) -> Result<NlmeModel> {
        let mut model = self.model.clone();
        match self.init {
            InitSetting::Truth => {}
            InitSetting::Pop => {
                for p in &mut model.params {
                    p.init = match p.transform {
                        Transform::Identity => 0.0,
                        Transform::Log => 1.0,
                        Transform::Logit => 0.5,
                    };
                }
            }
            InitSetting::Far => {
                for p in &mut model.params {
                    let phi = p.transform.phi(p.init)?;
                    let flipped = if phi == 0.0 { 2.0 } else { -phi };
                    p.init = p.transform.psi(flipped);
                }
            }
        }
        Ok(model)
    }

    /// SAEM options for one replicate fit under the chosen initial setting.
    fn fit_options_for(&self, rep: usize) -> SaemOptions {
        let mut opts = self.fit_options.clone();
        opts.seed = derive_seed(self.seed, "simstudy-fit", &[rep as u64]);
        match self.init {
            InitSetting::Truth => {
                opts.omega_init = Some(self.omega_true.clone());
                opts.beta_init = Some(self.beta_true.clone());
            }
            InitSetting::Pop => {
                opts.omega_init = None; // identity diagonal
                opts.beta_init = None;
            }
            InitSetting::Far => {
                let inflated = self
                    .omega_true
                    .iter()
                    .map(|row| row.iter().map(|v| 4.0 * v).collect())
                    .collect();
                opts.omega_init = Some(inflated);
                opts.beta_init = None;
            }
        }
        opts
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Result of a simulation study.
#[derive(Debug, Clone)]
pub struct SimStudyResult {
    /// Scenario label.
    pub scenario: String,
    /// Initial-value setting tag.
    pub init: InitSetting,
    /// Parameter labels (Ω diagonals on the standard-deviation scale, named
    /// `omega(p)`).
    pub labels: Vec<String>,
    /// True parameter values in label order.
    pub truth: Vec<f64>,
    /// Per-replicate estimates (successful fits only), in label order.
    pub estimates: Vec<Vec<f64>>,
    /// Relative bias per parameter, percent.
    pub rb: Vec<f64>,
    /// Relative root mean square error per parameter, percent.
    pub rrmse: Vec<f64>,
    /// Replicates whose fit failed.
    pub failures: usize,
    /// Notes and skipped-replicate reports.
    pub warnings: Vec<String>,
}

/// RB% and RRMSE% of `estimates` against `truth`. Parameters with a zero
/// true value get NaN metrics (relative errors are undefined there).
pub fn compute_metrics(truth: &[f64], estimates: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let p = truth.len();
    let s = estimates.len() as f64;
    let mut rb = vec![f64::NAN; p];
    let mut rrmse = vec![f64::NAN; p];
    for k in 0..p {
        if truth[k] == 0.0 || estimates.is_empty() {
            continue;
        }
        let rel: Vec<f64> = estimates.iter().map(|row| (row[k] - truth[k]) / truth[k]).collect();
        rb[k] = 100.0 * rel.iter().sum::<f64>() / s;
        rrmse[k] = 100.0 * (rel.iter().map(|e| e * e).sum::<f64>() / s).sqrt();
    }
    (rb, rrmse)
}

/// Convert a raw `param_row` (and its labels) to reporting scale: Ω diagonal
/// entries become standard deviations `omega(p)`.
fn reporting_row(labels: &[String], row: &[f64]) -> Vec<f64> {
    labels
        .iter()
        .zip(row)
        .map(|(l, &v)| if l.starts_with("omega2(") { v.sqrt() } else { v })
        .collect()
}

fn reporting_labels(labels: &[String]) -> Vec<String> {
    labels
        .iter()
        .map(|l| {
            if let Some(rest) = l.strip_prefix("omega2(") {
                format!("omega({rest}")
            } else {
                l.clone()
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The study
// ---------------------------------------------------------------------------

/// Run a simulation study: simulate S datasets from the scenario truth, fit
/// each under the scenario's initial-value setting, and summarize.
pub fn run_simstudy(scenario: &SimStudyScenario) -> Result<SimStudyResult> {
    scenario.validate()?;
    let template = scenario.template();

    // The truth fit: echo the true values through a zero-iteration run so
    // simulation can reuse the fitted-model plumbing.
    let truth_opts = SaemOptions {
        k1: 0,
        k2: 0,
        n_burn: 0,
        n_chains: 1,
        seed: scenario.seed,
        omega_init: Some(scenario.omega_true.clone()),
        beta_init: Some(scenario.beta_true.clone()),
        ..SaemOptions::default()
    };
    let truth_fit = run_saem(&scenario.model, &template, &truth_opts)?;
    let pm = PreparedModel::new(&truth_fit.model, &truth_fit.data)?;
    let ops = OmegaOps::new(&pm.omega_iiv(&truth_fit.omega));

    let raw_labels = param_labels(&scenario.model);
    let truth_row = reporting_row(
        &raw_labels,
        &param_row(&truth_fit.model, &truth_fit.b, &truth_fit.omega, truth_fit.error.as_ref()),
    );
    let labels = reporting_labels(&raw_labels);

    let fit_model = scenario.fit_model()?;
    let outcomes: Vec<(usize, Result<Vec<f64>>)> = (0..scenario.s)
        .into_par_iter()
        .map(|r| {
            let res = (|| {
                let ds = simulate_replicate(&truth_fit, &pm, &ops, scenario.seed, r)?;
                let fit = run_saem(&fit_model, &ds, &scenario.fit_options_for(r))?;
                Ok(reporting_row(
                    &raw_labels,
                    &param_row(&fit.model, &fit.b, &fit.omega, fit.error.as_ref()),
                ))
            })();
            (r, res)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut estimates = Vec::new();
    let mut failures = 0usize;
    for (r, res) in outcomes {
        match res {
            Ok(row) => estimates.push(row),
            Err(e) => {
                failures += 1;
                if failures <= 3 {
                    warnings.push(format!("replicate {r} failed: {e}"));
                }
            }
        }
    }
    if failures > 3 {
        warnings.push(format!("... and {} more failed replicates", failures - 3));
    }
    if estimates.is_empty() {
        return Err(Error::computation(format!(
            "all {} replicates failed (first: {})",
            scenario.s,
            warnings.first().map(String::as_str).unwrap_or("unknown")
        )));
    }
    if truth_row.iter().any(|&t| t == 0.0) {
        warnings.push(
            "parameters with a zero true value have undefined relative metrics".to_string(),
        );
    }

    let (rb, rrmse) = compute_metrics(&truth_row, &estimates);
    Ok(SimStudyResult {
        scenario: scenario.name.clone(),
        init: scenario.init,
        labels,
        truth: truth_row,
        estimates,
        rb,
        rrmse,
        failures,
        warnings,
    })
}

/// Simulate one replicate dataset from the truth fit, keeping the design and
/// syncing any response-aliased predictor columns.
fn simulate_replicate(
    truth_fit: &SaemFit,
    pm: &PreparedModel,
    ops: &OmegaOps,
    seed: u64,
    rep: usize,
) -> Result<Dataset> {
    let mut ds = truth_fit.data.clone();
    let aliased: Vec<usize> = ds
        .schema
        .predictors
        .iter()
        .enumerate()
        .filter(|(_, n)| **n == ds.schema.response)
        .map(|(j, _)| j)
        .collect();
    for i in 0..pm.n_subjects() {
        let mut rng = stream(seed, "simstudy", &[rep as u64, i as u64]);
        let psi = crate::diagnostics::draw_psi(pm, truth_fit, ops, i, &mut rng);
        let rows =
            crate::diagnostics::simulate_subject_rows(&truth_fit.model, pm, i, &psi, None, &mut rng)?;
        let subject = &mut ds.subjects[i];
        for &j in &aliased {
            subject.preds[j] = rows.clone();
        }
        subject.response = rows;
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Write per-replicate estimates in long (violin-plot-ready) form:
/// `scenario,init,replicate,parameter,truth,estimate`.
pub fn write_estimates_csv(res: &SimStudyResult, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "scenario,init,replicate,parameter,truth,estimate")?;
    for (r, row) in res.estimates.iter().enumerate() {
        for (k, label) in res.labels.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{:.8},{:.8}",
                res.scenario, res.init, r, label, res.truth[k], row[k]
            )?;
        }
    }
    Ok(())
}

/// Write the metrics table: `scenario,init,parameter,truth,rb_pct,rrmse_pct,
/// n_used,failures`.
pub fn write_metrics_csv(res: &SimStudyResult, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "scenario,init,parameter,truth,rb_pct,rrmse_pct,n_used,failures")?;
    for (k, label) in res.labels.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{:.8},{:.4},{:.4},{},{}",
            res.scenario,
            res.init,
            label,
            res.truth[k],
            res.rb[k],
            res.rrmse[k],
            res.estimates.len(),
            res.failures
        )?;
    }
    Ok(())
}
