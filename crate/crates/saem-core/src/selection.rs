//! Information criteria and stepwise model building.
//!
//! Two pieces live here. [`compute_criteria`] turns a fit plus a marginal
//! log-likelihood estimate into AIC, BIC, and the hybrid BICc whose penalty
//! splits the parameter count between a subject-level term (parameters tied
//! to the random effects, penalized by log N) and an observation-level term
//! (everything else, penalized by log n_tot). [`stepwise_select`] is the
//! joint covariate/variability search: starting from a base fit it proposes
//! single moves — add or remove one covariate–parameter relation, switch one
//! diagonal Ω entry on or off — refits every candidate, scores each by BICc,
//! and accepts the best strictly-improving move until none is left.
//!
//! All candidate likelihoods within one search use importance sampling with
//! the same seed and sample size, so the Monte-Carlo noise is shared and
//! comparisons stay fair; given the seeds the whole search is deterministic.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{estimate_loglik, LikelihoodEstimate, LikelihoodMethod, LikelihoodOptions};
use crate::model::{CovariateRelation, ErrorModel, NlmeModel};
use crate::saem::{run_saem, SaemFit};

// ---------------------------------------------------------------------------
// Information criteria
// ---------------------------------------------------------------------------

/// AIC/BIC/BICc for one fitted model, with the parameter-count split used by
/// the hybrid criterion.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionReport {
    /// Model name (structural model identifier).
    pub name: String,
    /// Method that produced the log-likelihood estimate.
    pub method: String,
    /// Marginal log-likelihood.
    pub loglik: f64,
    /// Subject-level parameter count p_R: fixed effects of parameters that
    /// carry a random effect (including their covariate coefficients) plus
    /// the estimated Ω entries.
    pub p_subject: usize,
    /// Observation-level parameter count p_F: fixed effects of parameters
    /// without a random effect (including their covariate coefficients) plus
    /// the residual-error parameters.
    pub p_obs: usize,
    /// Number of subjects N.
    pub n_subjects: usize,
    /// Number of observation rows n_tot (excludes time-0 anchor rows for
    /// time-to-event data).
    pub n_obs: usize,
    /// −2LL + 2p.
    pub aic: f64,
    /// −2LL + p·log N.
    pub bic: f64,
    /// −2LL + p_R·log N + p_F·log n_tot.
    pub bicc: f64,
}

/// The criteria formulas on their own, for a given count split and sample
/// sizes. `p = p_subject + p_obs` everywhere.
fn criteria_from_parts(
    loglik: f64,
    p_subject: usize,
    p_obs: usize,
    n_subjects: usize,
    n_obs: usize,
) -> (f64, f64, f64) {
    let m2ll = -2.0 * loglik;
    let p = (p_subject + p_obs) as f64;
    let aic = m2ll + 2.0 * p;
    let bic = m2ll + p * (n_subjects as f64).ln();
    let bicc = m2ll
        + p_subject as f64 * (n_subjects as f64).ln()
        + p_obs as f64 * (n_obs as f64).ln();
    (aic, bic, bicc)
}

/// Split the parameter count of a model into the subject-level part p_R
/// (fixed effects of random parameters, their covariate coefficients, and Ω
/// entries) and the observation-level part p_F (the rest, plus the residual
/// error parameters).
///
/// A covariate coefficient follows the parameter it acts on. The paper's
/// criterion does not restate the edge case of a covariate effect on a
/// parameter without inter-individual variability; such coefficients belong
/// to the non-random part of the model, so they are counted in p_F.
pub fn parameter_split(model: &NlmeModel) -> (usize, usize) {
    let mut p_r = 0usize;
    let mut p_f = 0usize;
    for (k, p) in model.params.iter().enumerate() {
        let coeffs = 1 + model.covariates.iter().filter(|rel| rel.param == k).count();
        if p.iiv {
            p_r += coeffs;
        } else {
            p_f += coeffs;
        }
    }
    // Ω entries: one variance per active diagonal, one covariance per pair.
    p_r += model.omega.diag.iter().filter(|&&on| on).count();
    p_r += model.omega.corr.len();
    // Residual-error parameters.
    p_f += match model.error {
        Some(ErrorModel::Combined { .. }) => 2,
        Some(_) => 1,
        None => 0,
    };
    (p_r, p_f)
}

/// Compute AIC, BIC, and BICc for a fit from a marginal log-likelihood
/// estimate.
pub fn compute_criteria(fit: &SaemFit, ll: &LikelihoodEstimate) -> Result<CriterionReport> {
    if !ll.total.is_finite() {
        return Err(Error::validation("log-likelihood must be finite to compute criteria"));
    }
    let (p_subject, p_obs) = parameter_split(&fit.model);
    let n_subjects = fit.data.n_subjects();
    let n_obs = fit.data.n_obs();
    let (aic, bic, bicc) = criteria_from_parts(ll.total, p_subject, p_obs, n_subjects, n_obs);
    Ok(CriterionReport {
        name: fit.model.model.name().to_string(),
        method: ll.method.to_string(),
        loglik: ll.total,
        p_subject,
        p_obs,
        n_subjects,
        n_obs,
        aic,
        bic,
        bicc,
    })
}

// ---------------------------------------------------------------------------
// Stepwise search
// ---------------------------------------------------------------------------

/// Search direction for [`stepwise_select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    /// Only additions: new covariate relations, new IIV terms.
    Forward,
    /// Only removals.
    Backward,
    /// Additions and removals at every step.
    Both,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Both => "both",
        })
    }
}

/// Options for the stepwise search.
#[derive(Debug, Clone)]
pub struct StepwiseOptions {
    /// Candidate covariate columns (must exist in the dataset). Relations
    /// already present in the base model can always be removed regardless of
    /// this list.
    pub candidates: Vec<String>,
    /// Search direction.
    pub direction: Direction,
    /// Whether diagonal Ω entries may be toggled. When false the IIV
    /// structure is kept fixed and only covariate moves are proposed.
    pub search_iiv: bool,
    /// Safety cap on accepted moves.
    pub max_steps: usize,
    /// Likelihood settings shared by every candidate in the search (fixed
    /// seed, so Monte-Carlo noise is common across comparisons).
    pub likelihood: LikelihoodOptions,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        StepwiseOptions {
            candidates: Vec::new(),
            direction: Direction::Both,
            search_iiv: true,
            max_steps: 50,
            likelihood: LikelihoodOptions::default(),
        }
    }
}

/// One elementary model move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    /// Add covariate `covariate` on parameter `param`.
    AddCovariate {
        /// Target parameter index.
        param: usize,
        /// Covariate column.
        covariate: String,
    },
    /// Remove an existing covariate relation.
    RemoveCovariate {
        /// Target parameter index.
        param: usize,
        /// Covariate column.
        covariate: String,
    },
    /// Switch on the diagonal Ω entry of `param`.
    AddIiv {
        /// Target parameter index.
        param: usize,
    },
    /// Switch off the diagonal Ω entry of `param` (and drop any covariances
    /// involving it).
    RemoveIiv {
        /// Target parameter index.
        param: usize,
    },
}

impl Move {
    /// Canonical ordering key: move kind, then parameter index, then
    /// covariate name. Ties in BICc are broken by this key, which makes the
    /// search invariant to the order candidates are supplied.
    fn key(&self) -> (u8, usize, &str) {
        match self {
            Move::AddCovariate { param, covariate } => (0, *param, covariate.as_str()),
            Move::RemoveCovariate { param, covariate } => (1, *param, covariate.as_str()),
            Move::AddIiv { param } => (2, *param, ""),
            Move::RemoveIiv { param } => (3, *param, ""),
        }
    }

    fn describe(&self, model: &NlmeModel) -> String {
        let pname = |k: usize| model.params[k].name.clone();
        match self {
            Move::AddCovariate { param, covariate } => {
                format!("add {covariate} on {}", pname(*param))
            }
            Move::RemoveCovariate { param, covariate } => {
                format!("remove {covariate} from {}", pname(*param))
            }
            Move::AddIiv { param } => format!("add IIV on {}", pname(*param)),
            Move::RemoveIiv { param } => format!("remove IIV from {}", pname(*param)),
        }
    }
}

/// One evaluated candidate in the step log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepRecord {
    /// Step number (1-based; all candidates of one step share it).
    pub step: usize,
    /// Human-readable move description.
    pub action: String,
    /// BICc of the incumbent model at this step.
    pub bicc_before: f64,
    /// BICc of the candidate (NaN when its refit failed).
    pub bicc_after: f64,
    /// Whether this candidate was the accepted move of its step.
    pub accepted: bool,
}

/// Outcome of a stepwise search.
#[derive(Debug)]
pub struct StepwiseResult {
    /// Final model specification.
    pub model: NlmeModel,
    /// Fit of the final model.
    pub fit: SaemFit,
    /// Criteria of the final model.
    pub report: CriterionReport,
    /// Every evaluated candidate, in evaluation order.
    pub log: Vec<StepRecord>,
    /// Skipped candidates and other notes.
    pub warnings: Vec<String>,
}

/// Apply a move to a model specification.
fn apply_move(model: &NlmeModel, mv: &Move) -> NlmeModel {
    let mut next = model.clone();
    match mv {
        Move::AddCovariate { param, covariate } => {
            next.covariates
                .push(CovariateRelation { param: *param, covariate: covariate.clone() });
            next.covariates.sort_by(|a, b| {
                (a.param, a.covariate.as_str()).cmp(&(b.param, b.covariate.as_str()))
            });
        }
        Move::RemoveCovariate { param, covariate } => {
            next.covariates
                .retain(|rel| !(rel.param == *param && rel.covariate == *covariate));
        }
        Move::AddIiv { param } => {
            next.params[*param].iiv = true;
            next.omega.diag[*param] = true;
        }
        Move::RemoveIiv { param } => {
            next.params[*param].iiv = false;
            next.omega.diag[*param] = false;
            next.omega.corr.retain(|&(i, j)| i != *param && j != *param);
        }
    }
    next
}

/// Enumerate the legal moves from `model` in canonical order.
fn enumerate_moves(model: &NlmeModel, opts: &StepwiseOptions) -> Vec<Move> {
    let mut moves = Vec::new();
    let present: BTreeSet<(usize, &str)> = model
        .covariates
        .iter()
        .map(|rel| (rel.param, rel.covariate.as_str()))
        .collect();
    let mut candidates = opts.candidates.clone();
    candidates.sort();
    candidates.dedup();
    let add = opts.direction != Direction::Backward;
    let remove = opts.direction != Direction::Forward;
    if add {
        for k in 0..model.d() {
            for cov in &candidates {
                if !present.contains(&(k, cov.as_str())) {
                    moves.push(Move::AddCovariate { param: k, covariate: cov.clone() });
                }
            }
        }
    }
    if remove {
        for rel in &model.covariates {
            moves.push(Move::RemoveCovariate { param: rel.param, covariate: rel.covariate.clone() });
        }
    }
    if opts.search_iiv {
        let n_on = model.omega.diag.iter().filter(|&&on| on).count();
        for k in 0..model.d() {
            if add && !model.omega.diag[k] {
                moves.push(Move::AddIiv { param: k });
            }
            // Keep at least one random effect: a model with empty Ω is
            // outside the class being searched.
            if remove && model.omega.diag[k] && n_on >= 2 {
                moves.push(Move::RemoveIiv { param: k });
            }
        }
    }
    moves.sort_by(|a, b| {
        let (ka, pa, ca) = a.key();
        let (kb, pb, cb) = b.key();
        (ka, pa, ca).cmp(&(kb, pb, cb))
    });
    moves
}

/// Refit a candidate model on the base fit's data and score it by BICc with
/// the shared likelihood settings.
fn score_candidate(
    model: &NlmeModel,
    base: &SaemFit,
    ll_opts: &LikelihoodOptions,
) -> Result<(SaemFit, CriterionReport)> {
    let fit = run_saem(model, &base.data, &base.options)?;
    let ll = estimate_loglik(&fit, LikelihoodMethod::ImportanceSampling, ll_opts)?;
    let report = compute_criteria(&fit, &ll)?;
    Ok((fit, report))
}

/// Joint stepwise covariate/IIV model building.
///
/// Starting from `base_fit`, each step enumerates the legal single moves,
/// refits every candidate on the same data with the same SAEM options, scores
/// each by BICc (importance sampling, one seed for the whole search), and
/// accepts the candidate with the lowest BICc if it strictly improves on the
/// incumbent. The search stops when no move improves, when the move set is
/// empty, or after `max_steps` accepted moves. Candidates whose refit or
/// likelihood fails are skipped and logged. Exact BICc ties are broken by the
/// canonical move order (kind, parameter, covariate), so the result does not
/// depend on the order candidates are supplied.
pub fn stepwise_select(base_fit: &SaemFit, opts: &StepwiseOptions) -> Result<StepwiseResult> {
    let cov_names = &base_fit.data.schema.covariates;
    for cand in &opts.candidates {
        if !cov_names.contains(cand) {
            return Err(Error::validation(format!(
                "candidate covariate `{cand}` not present in the dataset"
            )));
        }
    }
    let mut warnings = Vec::new();
    let mut log = Vec::new();

    // Score the incumbent once; later steps reuse the accepted candidate's
    // score, so every number in the search shares the same IS seed.
    let base_ll =
        estimate_loglik(base_fit, LikelihoodMethod::ImportanceSampling, &opts.likelihood)?;
    let mut current_report = compute_criteria(base_fit, &base_ll)?;
    let mut current_model = base_fit.model.clone();
    let mut current_fit: Option<SaemFit> = None; // None = still the base fit

    for step in 1..=opts.max_steps {
        let moves = enumerate_moves(&current_model, opts);
        if moves.is_empty() {
            break;
        }
        let scored: Vec<(Move, Result<(SaemFit, CriterionReport)>)> = moves
            .into_par_iter()
            .map(|mv| {
                let candidate = apply_move(&current_model, &mv);
                let res = score_candidate(&candidate, base_fit, &opts.likelihood);
                (mv, res)
            })
            .collect();

        // Serial accept decision over the canonical candidate order.
        let mut best: Option<usize> = None;
        for (idx, (mv, res)) in scored.iter().enumerate() {
            match res {
                Ok((_, report)) => {
                    log.push(StepRecord {
                        step,
                        action: mv.describe(&current_model),
                        bicc_before: current_report.bicc,
                        bicc_after: report.bicc,
                        accepted: false,
                    });
                    let better_than_best = match best {
                        None => report.bicc < current_report.bicc,
                        Some(b) => {
                            let best_bicc = scored[b].1.as_ref().unwrap().1.bicc;
                            report.bicc < best_bicc
                        }
                    };
                    if better_than_best {
                        best = Some(idx);
                    }
                }
                Err(e) => {
                    log.push(StepRecord {
                        step,
                        action: mv.describe(&current_model),
                        bicc_before: current_report.bicc,
                        bicc_after: f64::NAN,
                        accepted: false,
                    });
                    warnings.push(format!(
                        "step {step}: candidate `{}` skipped: {e}",
                        mv.describe(&current_model)
                    ));
                }
            }
        }
        let Some(best_idx) = best else { break };
        let accepted_at = log.len() - scored.len() + best_idx;
        log[accepted_at].accepted = true;
        let (mv, res) = &scored[best_idx];
        let (fit, report) = res.as_ref().unwrap();
        current_model = apply_move(&current_model, mv);
        current_report = report.clone();
        current_fit = Some(fit.clone());
    }

    let fit = match current_fit {
        Some(f) => f,
        None => base_fit.clone(),
    };
    Ok(StepwiseResult { model: current_model, fit, report: current_report, log, warnings })
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Write the step log as CSV: `step,move,bicc_before,bicc_after,accepted`.
/// Failed candidates have an empty `bicc_after` field.
pub fn write_step_log_csv(log: &[StepRecord], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,move,bicc_before,bicc_after,accepted")?;
    for rec in log {
        let after = if rec.bicc_after.is_finite() {
            format!("{:.6}", rec.bicc_after)
        } else {
            String::new()
        };
        writeln!(
            out,
            "{},{},{:.6},{},{}",
            rec.step, rec.action, rec.bicc_before, after, rec.accepted
        )?;
    }
    Ok(())
}

/// Write one or more criterion reports as CSV:
/// `model,method,loglik,p_subject,p_obs,n_subjects,n_obs,aic,bic,bicc`.
pub fn write_criteria_csv(reports: &[CriterionReport], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "model,method,loglik,p_subject,p_obs,n_subjects,n_obs,aic,bic,bicc")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{:.6},{},{},{},{},{:.6},{:.6},{:.6}",
            r.name, r.method, r.loglik, r.p_subject, r.p_obs, r.n_subjects, r.n_obs, r.aic, r.bic,
            r.bicc
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::builtin;
    use crate::data::{Dataset, OutcomeKind, Schema, SubjectData};
    use crate::model::{ErrorModel, OmegaPattern, ParameterSpec, Transform};
    use crate::saem::SaemOptions;
    use approx::assert_relative_eq;

    /// Gaussian lines with genuine subject effects and residual noise, where
    /// the slope depends on a binary covariate `grp` and a second covariate
    /// `junk` carries no signal.
    fn covariate_dataset(n: usize) -> Dataset {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let schema = Schema {
            group: "id".into(),
            predictors: vec!["time".into()],
            response: "y".into(),
            censoring: None,
            covariates: vec!["grp".into(), "junk".into()],
        };
        let times = [0.0, 1.0, 2.0, 3.0];
        let subjects = (0..n)
            .map(|i| {
                let mut rng = crate::rng::stream(40, "selection-test", &[i as u64]);
                let grp = (i % 2) as f64;
                let junk = ((i * 7) % 5) as f64 / 4.0;
                let b0 = 1.0 + 0.4 * rng.sample::<f64, _>(StandardNormal);
                let b1 = 0.5 + 1.2 * grp + 0.3 * rng.sample::<f64, _>(StandardNormal);
                let response = times
                    .iter()
                    .map(|&t| b0 + b1 * t + 0.15 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                SubjectData {
                    id: format!("s{i}"),
                    preds: vec![times.to_vec()],
                    response,
                    cens: None,
                    covariates: vec![grp, junk],
                }
            })
            .collect();
        Dataset { subjects, schema, outcome: OutcomeKind::Gaussian, load_warnings: vec![] }
    }

    fn linear_model(covariates: Vec<CovariateRelation>) -> NlmeModel {
        let entry = builtin("gaussian-linear").unwrap();
        NlmeModel {
            model: entry.model,
            params: vec![
                ParameterSpec { name: "b0".into(), transform: Transform::Identity, init: 1.0, iiv: true },
                ParameterSpec { name: "b1".into(), transform: Transform::Identity, init: 0.5, iiv: true },
            ],
            covariates,
            omega: OmegaPattern::diagonal(vec![true, true]),
            error: Some(ErrorModel::Constant { a: 0.3 }),
        }
    }

    fn quick_opts(seed: u64) -> SaemOptions {
        SaemOptions { k1: 60, k2: 30, n_burn: 3, n_chains: 1, seed, ..Default::default() }
    }

    #[test]
    fn criteria_match_hand_recomputation() {
        let ds = covariate_dataset(12);
        let model = linear_model(vec![]);
        let opts = SaemOptions { k1: 0, k2: 0, n_burn: 0, ..Default::default() };
        let fit = run_saem(&model, &ds, &opts).unwrap();
        let ll = estimate_loglik(
            &fit,
            LikelihoodMethod::ImportanceSampling,
            &LikelihoodOptions { n_is: 2_000, seed: 5, ..Default::default() },
        )
        .unwrap();
        let rep = compute_criteria(&fit, &ll).unwrap();
        // Hand count: two random fixed effects + two Ω variances in p_R, the
        // error sd in p_F.
        assert_eq!((rep.p_subject, rep.p_obs), (4, 1));
        assert_eq!(rep.n_subjects, 12);
        assert_eq!(rep.n_obs, 48);
        let p = 5.0;
        assert_relative_eq!(rep.aic, -2.0 * ll.total + 2.0 * p, epsilon = 1e-12);
        assert_relative_eq!(rep.bic, -2.0 * ll.total + p * 12f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(
            rep.bicc,
            -2.0 * ll.total + 4.0 * 12f64.ln() + 1.0 * 48f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nested_model_criterion_difference_matches_recomputation() {
        // Adding one covariate coefficient on a random parameter moves one
        // unit from nowhere into p_R; the criterion difference must equal the
        // LL difference plus the penalty difference computed by hand.
        let ds = covariate_dataset(12);
        let opts = SaemOptions { k1: 0, k2: 0, n_burn: 0, ..Default::default() };
        let ll_opts = LikelihoodOptions { n_is: 2_000, seed: 5, ..Default::default() };
        let small = run_saem(&linear_model(vec![]), &ds, &opts).unwrap();
        let big = run_saem(
            &linear_model(vec![CovariateRelation { param: 1, covariate: "grp".into() }]),
            &ds,
            &opts,
        )
        .unwrap();
        let ll_s = estimate_loglik(&small, LikelihoodMethod::ImportanceSampling, &ll_opts).unwrap();
        let ll_b = estimate_loglik(&big, LikelihoodMethod::ImportanceSampling, &ll_opts).unwrap();
        let rep_s = compute_criteria(&small, &ll_s).unwrap();
        let rep_b = compute_criteria(&big, &ll_b).unwrap();
        assert_eq!(rep_b.p_subject, rep_s.p_subject + 1);
        assert_eq!(rep_b.p_obs, rep_s.p_obs);
        let dll = -2.0 * (ll_b.total - ll_s.total);
        assert_relative_eq!(rep_b.aic - rep_s.aic, dll + 2.0, epsilon = 1e-10);
        assert_relative_eq!(rep_b.bic - rep_s.bic, dll + 12f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(rep_b.bicc - rep_s.bicc, dll + 12f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn zero_parameters_reduce_criteria_to_minus_two_ll() {
        let (aic, bic, bicc) = criteria_from_parts(-100.0, 0, 0, 20, 80);
        assert_relative_eq!(aic, 200.0, epsilon = 1e-12);
        assert_relative_eq!(bic, 200.0, epsilon = 1e-12);
        assert_relative_eq!(bicc, 200.0, epsilon = 1e-12);
    }

    #[test]
    fn covariate_on_fixed_parameter_counts_at_observation_level() {
        let entry = builtin("gaussian-linear").unwrap();
        let model = NlmeModel {
            model: entry.model,
            params: vec![
                ParameterSpec { name: "b0".into(), transform: Transform::Identity, init: 1.0, iiv: true },
                ParameterSpec { name: "b1".into(), transform: Transform::Identity, init: 0.5, iiv: false },
            ],
            covariates: vec![
                CovariateRelation { param: 0, covariate: "grp".into() },
                CovariateRelation { param: 1, covariate: "grp".into() },
            ],
            omega: OmegaPattern::diagonal(vec![true, false]),
            error: Some(ErrorModel::Combined { a: 0.3, b: 0.1 }),
        };
        // p_R: μ_b0 + β_grp(b0) + ω²_b0 = 3; p_F: μ_b1 + β_grp(b1) + a + b = 4.
        assert_eq!(parameter_split(&model), (3, 4));
    }

    #[test]
    fn empty_move_set_returns_base_unchanged() {
        let ds = covariate_dataset(8);
        let fit = run_saem(&linear_model(vec![]), &ds, &quick_opts(3)).unwrap();
        let opts = StepwiseOptions {
            candidates: vec![],
            search_iiv: false,
            likelihood: LikelihoodOptions { n_is: 1_000, seed: 9, ..Default::default() },
            ..Default::default()
        };
        let res = stepwise_select(&fit, &opts).unwrap();
        assert!(res.log.is_empty());
        assert!(res.model.covariates.is_empty());
        assert_eq!(res.model.omega.diag, vec![true, true]);
        assert_eq!(res.fit.b, fit.b);
    }

    #[test]
    fn forward_search_finds_the_informative_covariate() {
        let ds = covariate_dataset(16);
        let fit = run_saem(&linear_model(vec![]), &ds, &quick_opts(7)).unwrap();
        let opts = StepwiseOptions {
            candidates: vec!["grp".into(), "junk".into()],
            direction: Direction::Forward,
            search_iiv: false,
            likelihood: LikelihoodOptions { n_is: 1_500, seed: 13, ..Default::default() },
            ..Default::default()
        };
        let res = stepwise_select(&fit, &opts).unwrap();
        assert!(
            res.model
                .covariates
                .iter()
                .any(|rel| rel.param == 1 && rel.covariate == "grp"),
            "selected relations: {:?}",
            res.model.covariates
        );
        // The step log is strictly monotone over accepted moves.
        let accepted: Vec<&StepRecord> = res.log.iter().filter(|r| r.accepted).collect();
        assert!(!accepted.is_empty());
        for rec in &accepted {
            assert!(rec.bicc_after < rec.bicc_before, "{rec:?}");
        }
        for pair in accepted.windows(2) {
            assert!(pair[1].bicc_after < pair[0].bicc_after);
        }
    }

    #[test]
    fn backward_search_drops_an_uninformative_relation() {
        let ds = covariate_dataset(16);
        let base_model = linear_model(vec![CovariateRelation { param: 0, covariate: "junk".into() }]);
        let fit = run_saem(&base_model, &ds, &quick_opts(11)).unwrap();
        let opts = StepwiseOptions {
            candidates: vec![],
            direction: Direction::Backward,
            search_iiv: false,
            likelihood: LikelihoodOptions { n_is: 1_500, seed: 17, ..Default::default() },
            ..Default::default()
        };
        let res = stepwise_select(&fit, &opts).unwrap();
        assert!(res.model.covariates.is_empty(), "kept: {:?}", res.model.covariates);
    }

    #[test]
    fn selection_is_invariant_to_candidate_enumeration_order() {
        let ds = covariate_dataset(12);
        let fit = run_saem(&linear_model(vec![]), &ds, &quick_opts(19)).unwrap();
        let run = |cands: Vec<String>| {
            let opts = StepwiseOptions {
                candidates: cands,
                direction: Direction::Forward,
                search_iiv: false,
                max_steps: 2,
                likelihood: LikelihoodOptions { n_is: 1_000, seed: 23, ..Default::default() },
            };
            stepwise_select(&fit, &opts).unwrap()
        };
        let a = run(vec!["grp".into(), "junk".into()]);
        let b = run(vec!["junk".into(), "grp".into()]);
        assert_eq!(a.model.covariates, b.model.covariates);
        let acts = |r: &StepwiseResult| {
            r.log
                .iter()
                .map(|rec| (rec.step, rec.action.clone(), rec.accepted, rec.bicc_after.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(acts(&a), acts(&b));
    }

    #[test]
    fn unknown_candidate_covariate_is_rejected() {
        let ds = covariate_dataset(8);
        let fit = run_saem(&linear_model(vec![]), &ds, &quick_opts(3)).unwrap();
        let opts = StepwiseOptions {
            candidates: vec!["weight".into()],
            likelihood: LikelihoodOptions { n_is: 500, seed: 1, ..Default::default() },
            ..Default::default()
        };
        let err = stepwise_select(&fit, &opts).unwrap_err();
        assert!(err.to_string().contains("weight"), "{err}");
    }

    #[test]
    fn iiv_toggle_respects_the_at_least_one_rule() {
        let model = linear_model(vec![]);
        // Two IIV terms on: both removals are allowed.
        let opts = StepwiseOptions { direction: Direction::Backward, ..Default::default() };
        let moves = enumerate_moves(&model, &opts);
        assert_eq!(
            moves,
            vec![Move::RemoveIiv { param: 0 }, Move::RemoveIiv { param: 1 }]
        );
        // Only one left: no removal proposed.
        let narrowed = apply_move(&model, &Move::RemoveIiv { param: 1 });
        assert!(enumerate_moves(&narrowed, &opts).is_empty());
        // Forward proposes switching the missing one back on.
        let fwd = StepwiseOptions { direction: Direction::Forward, ..Default::default() };
        assert_eq!(enumerate_moves(&narrowed, &fwd), vec![Move::AddIiv { param: 1 }]);
    }

    #[test]
    fn step_log_csv_has_expected_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.csv");
        let log = vec![
            StepRecord {
                step: 1,
                action: "add grp on b1".into(),
                bicc_before: 120.0,
                bicc_after: 100.0,
                accepted: true,
            },
            StepRecord {
                step: 1,
                action: "add junk on b0".into(),
                bicc_before: 120.0,
                bicc_after: f64::NAN,
                accepted: false,
            },
        ];
        write_step_log_csv(&log, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,move,bicc_before,bicc_after,accepted");
        assert!(lines[1].starts_with("1,add grp on b1,120.000000,100.000000,true"));
        assert!(lines[2].ends_with(",,false"));
    }
}
