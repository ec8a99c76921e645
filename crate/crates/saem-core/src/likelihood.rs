//! Marginal log-likelihood of a fitted model, by importance sampling,
//! adaptive Gauss–Hermite quadrature, or linearization.
//!
//! All three methods integrate the random effects out of the complete-data
//! likelihood
//!   p(y_i | θ) = ∫ p(y_i | φ_i) p(φ_i | θ) dφ_i,
//! subject by subject. Importance sampling uses a multivariate t(5)
//! proposal centred at the conditional mean with componentwise conditional
//! SDs; quadrature adapts a tensor-product Gauss–Hermite grid to the same
//! location/scale; linearization (Gaussian outcomes only) replaces the model
//! with its first-order expansion around the conditional mean, for which the
//! integral is exact.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::conditional::{estimate_conditional, ConditionalEstimates, ConditionalOptions};
use crate::error::{Error, Result};
use crate::model::ErrorModel;
use crate::numerics::{gauss_hermite, logsumexp};
use crate::rng::stream;
use crate::saem::prepared::{OmegaOps, PreparedModel};
use crate::saem::SaemFit;

/// Likelihood estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMethod {
    /// Importance sampling with a t(5) proposal (any outcome).
    ImportanceSampling,
    /// Adaptive Gauss–Hermite quadrature (any outcome, ≤ 4 IIV dimensions).
    GaussHermite,
    /// First-order linearization (Gaussian outcomes only).
    Linearization,
}

impl std::fmt::Display for LikelihoodMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LikelihoodMethod::ImportanceSampling => "importance sampling",
            LikelihoodMethod::GaussHermite => "adaptive Gauss-Hermite",
            LikelihoodMethod::Linearization => "linearization",
        };
        f.write_str(s)
    }
}

/// Options for likelihood estimation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LikelihoodOptions {
    /// Importance-sampling sample size per subject.
    pub n_is: usize,
    /// Gauss–Hermite nodes per dimension.
    pub n_nodes: usize,
    /// Seed for the IS draws.
    pub seed: u64,
    /// Options for the conditional-sampling pass that locates the proposal.
    pub conditional: ConditionalOptions,
}

impl Default for LikelihoodOptions {
    fn default() -> Self {
        LikelihoodOptions {
            n_is: 10_000,
            n_nodes: 12,
            seed: 1,
            conditional: ConditionalOptions::default(),
        }
    }
}

/// A marginal log-likelihood estimate.
#[derive(Debug, Clone)]
pub struct LikelihoodEstimate {
    /// The method that produced it.
    pub method: LikelihoodMethod,
    /// Total log-likelihood Σ_i log p̂(y_i | θ).
    pub total: f64,
    /// Per-subject log-likelihood contributions.
    pub per_subject: Vec<f64>,
    /// Monte Carlo standard error of `total` (importance sampling only).
    pub mc_se: Option<f64>,
    /// Warnings (degenerate proposal SDs, unconverged conditionals, …).
    pub warnings: Vec<String>,
}

/// Degrees of freedom of the IS proposal.
const T_DF: f64 = 5.0;

/// Estimate the marginal log-likelihood of a fit.
pub fn estimate_loglik(
    fit: &SaemFit,
    method: LikelihoodMethod,
    opts: &LikelihoodOptions,
) -> Result<LikelihoodEstimate> {
    match method {
        LikelihoodMethod::ImportanceSampling => importance_sampling(fit, opts),
        LikelihoodMethod::GaussHermite => gauss_hermite_loglik(fit, opts),
        LikelihoodMethod::Linearization => linearized_loglik(fit),
    }
}

/// Conditional location/scale per subject for proposal construction, with a
/// floor on degenerate SDs.
fn proposal_moments(
    pm: &PreparedModel,
    cond: &ConditionalEstimates,
    warnings: &mut Vec<String>,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut floored = 0usize;
    let out = cond
        .subjects
        .iter()
        .map(|s| {
            let mean = pm.to_iiv(&s.mean);
            let mut sd = pm.to_iiv(&s.sd);
            for v in sd.iter_mut() {
                if !(*v > 1e-6) {
                    *v = 1e-6;
                    floored += 1;
                }
            }
            (mean, sd)
        })
        .collect();
    if floored > 0 {
        warnings.push(format!(
            "{floored} conditional SD(s) were degenerate and floored at 1e-6 for the proposal"
        ));
    }
    out
}

/// log of the standardized t(5) density at x (one coordinate).
fn log_t_density(x: f64) -> f64 {
    // ln Γ(3) − ln Γ(5/2) − ½ ln(5π) − 3 ln(1 + x²/5)
    ln_gamma(3.0) - ln_gamma(2.5) - 0.5 * (T_DF * std::f64::consts::PI).ln()
        - 3.0 * (x * x / T_DF).ln_1p()
}

fn importance_sampling(fit: &SaemFit, opts: &LikelihoodOptions) -> Result<LikelihoodEstimate> {
    let pm = PreparedModel::new(&fit.model, &fit.data)?;
    let cond = estimate_conditional(fit, &opts.conditional)?;
    let mut warnings = cond.warnings.clone();
    let moments = proposal_moments(&pm, &cond, &mut warnings);
    let ops = OmegaOps::new(&pm.omega_iiv(&fit.omega));
    let q = pm.q();
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let m = opts.n_is;

    let per: Vec<(f64, f64)> = (0..pm.n_subjects())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(opts.seed, "likelihood-is", &[i as u64]);
            let (mean, sd) = &moments[i];
            let prior_mean = pm.to_iiv(&pm.phi_pop(i, &fit.b));
            let mut phi = pm.phi_pop(i, &fit.b);
            let mut logs = Vec::with_capacity(m);
            for _ in 0..m {
                // Draw u ~ t(5) per coordinate: u = z / sqrt(w/df), w ~ χ²_df.
                let mut u = DVector::<f64>::zeros(q);
                let mut log_prop = 0.0;
                for j in 0..q {
                    let t = draw_t(&mut rng);
                    u[j] = mean[j] + sd[j] * t;
                    log_prop += log_t_density(t) - sd[j].ln();
                }
                pm.from_iiv(&u, &mut phi);
                pm.clamp_no_iiv(i, &fit.b, &mut phi);
                let data_ll = pm.data_loglik(i, &phi);
                let prior = ops.log_density_unnorm(&u, &prior_mean)
                    - q as f64 * half_ln_2pi;
                logs.push(data_ll + prior - log_prop);
            }
            // log-mean-exp, with a delta-method MC standard error.
            let lme = logsumexp(&logs) - (m as f64).ln();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (mut s1, mut s2) = (0.0, 0.0);
            for &l in &logs {
                let e = (l - max).exp();
                s1 += e;
                s2 += e * e;
            }
            let mean_e = s1 / m as f64;
            let var_e = (s2 / m as f64 - mean_e * mean_e).max(0.0);
            let se = (var_e / m as f64).sqrt() / mean_e.max(f64::MIN_POSITIVE);
            (lme, se)
        })
        .collect();

    let total = per.iter().map(|(l, _)| l).sum();
    let mc_se = per.iter().map(|(_, s)| s * s).sum::<f64>().sqrt();
    Ok(LikelihoodEstimate {
        method: LikelihoodMethod::ImportanceSampling,
        total,
        per_subject: per.into_iter().map(|(l, _)| l).collect(),
        mc_se: Some(mc_se),
        warnings,
    })
}

/// Draw from a standardized Student t with `T_DF` degrees of freedom.
fn draw_t(rng: &mut impl rand::Rng) -> f64 {
    use rand_distr::{ChiSquared, Distribution, StandardNormal};
    let z: f64 = StandardNormal.sample(rng);
    let chi = ChiSquared::new(T_DF).expect("valid df");
    let w: f64 = chi.sample(rng);
    z / (w / T_DF).sqrt()
}

fn gauss_hermite_loglik(fit: &SaemFit, opts: &LikelihoodOptions) -> Result<LikelihoodEstimate> {
    let pm = PreparedModel::new(&fit.model, &fit.data)?;
    let q = pm.q();
    if q > 4 {
        return Err(Error::unsupported(format!(
            "Gauss-Hermite quadrature supports at most 4 random-effect dimensions (model has {q}); use importance sampling"
        )));
    }
    let cond = estimate_conditional(fit, &opts.conditional)?;
    let mut warnings = cond.warnings.clone();
    let moments = proposal_moments(&pm, &cond, &mut warnings);
    let ops = OmegaOps::new(&pm.omega_iiv(&fit.omega));
    let (nodes, weights) = gauss_hermite(opts.n_nodes)?;
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let n_points = opts.n_nodes.pow(q as u32);

    let per: Vec<f64> = (0..pm.n_subjects())
        .into_par_iter()
        .map(|i| {
            let (mean, sd) = &moments[i];
            let prior_mean = pm.to_iiv(&pm.phi_pop(i, &fit.b));
            let mut phi = pm.phi_pop(i, &fit.b);
            let mut terms = Vec::with_capacity(n_points);
            let mut idx = vec![0usize; q];
            loop {
                // Adaptive node: u_j = mean_j + √2·sd_j·x_{idx_j}.
                let mut u = DVector::<f64>::zeros(q);
                let mut log_weight = 0.0;
                for j in 0..q {
                    let x = nodes[idx[j]];
                    u[j] = mean[j] + std::f64::consts::SQRT_2 * sd[j] * x;
                    // GH weight correction: w·e^{x²} · √2·sd_j (volume).
                    log_weight +=
                        weights[idx[j]].ln() + x * x + (std::f64::consts::SQRT_2 * sd[j]).ln();
                }
                pm.from_iiv(&u, &mut phi);
                pm.clamp_no_iiv(i, &fit.b, &mut phi);
                let data_ll = pm.data_loglik(i, &phi);
                let prior = ops.log_density_unnorm(&u, &prior_mean)
                    - q as f64 * half_ln_2pi;
                terms.push(data_ll + prior + log_weight);
                // Advance the mixed-radix counter.
                let mut j = 0;
                loop {
                    if j == q {
                        break;
                    }
                    idx[j] += 1;
                    if idx[j] < opts.n_nodes {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == q {
                    break;
                }
            }
            logsumexp(&terms)
        })
        .collect();

    Ok(LikelihoodEstimate {
        method: LikelihoodMethod::GaussHermite,
        total: per.iter().sum(),
        per_subject: per,
        mc_se: None,
        warnings,
    })
}

/// First-order linearized log-likelihood (Gaussian outcomes only): the model
/// prediction is expanded to first order in η around the conditional mean,
/// making y_i exactly multivariate normal.
fn linearized_loglik(fit: &SaemFit) -> Result<LikelihoodEstimate> {
    if fit.data.outcome.is_discrete() {
        return Err(Error::unsupported(
            "linearized likelihood is defined for Gaussian outcomes only; use importance sampling or quadrature",
        ));
    }
    let pm = PreparedModel::new(&fit.model, &fit.data)?;
    let cond = estimate_conditional(fit, &ConditionalOptions::default())?;
    let warnings = cond.warnings.clone();
    let per = linearized_per_subject(&pm, fit, &cond)?;
    Ok(LikelihoodEstimate {
        method: LikelihoodMethod::Linearization,
        total: per.iter().sum(),
        per_subject: per,
        mc_se: None,
        warnings,
    })
}

/// Per-subject linearized log-likelihood around given expansion points.
pub(crate) fn linearized_per_subject(
    pm: &PreparedModel,
    fit: &SaemFit,
    cond: &ConditionalEstimates,
) -> Result<Vec<f64>> {
    let error = fit
        .error
        .as_ref()
        .ok_or_else(|| Error::computation("Gaussian model without an error model"))?;
    let q = pm.q();
    let omega_iiv = pm.omega_iiv(&fit.omega);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    (0..pm.n_subjects())
        .map(|i| {
            let phi_hat = &cond.subjects[i].mean;
            let mut phi = phi_hat.clone();
            pm.clamp_no_iiv(i, &fit.b, &mut phi);
            let n = pm.data.subjects[i].response.len();
            // Residual on the modeling scale and prediction on natural scale.
            let base = pm.gaussian_residuals(i, &phi)?;
            // Jacobian of the modeling-scale prediction wrt the IIV coords.
            let mut jac = DMatrix::<f64>::zeros(n, q);
            let u0 = pm.to_iiv(&phi);
            for j in 0..q {
                let h = 1e-4 * (1.0 + u0[j].abs());
                let mut up = u0.clone();
                up[j] += h;
                let mut phi_p = phi.clone();
                pm.from_iiv(&up, &mut phi_p);
                let rp = pm.gaussian_residuals(i, &phi_p)?;
                let mut dn = u0.clone();
                dn[j] -= h;
                let mut phi_m = phi.clone();
                pm.from_iiv(&dn, &mut phi_m);
                let rm = pm.gaussian_residuals(i, &phi_m)?;
                for r in 0..n {
                    // residual = y − f, so ∂f/∂u = −∂residual/∂u.
                    jac[(r, j)] = -(rp[r].0 - rm[r].0) / (2.0 * h);
                }
            }
            // V = J Ω Jᵀ + diag(g²) with g from the error model at the
            // expansion point; mean deviation is the residual at φ̂ plus the
            // first-order pullback J(u0 − u_pop)… the expansion gives
            // y − f(φ̂) + J(û − u_pop) ~ N(0, V) approximately; we follow the
            // standard conditional-expansion form.
            let mut v = &jac * &omega_iiv * jac.transpose();
            for r in 0..n {
                let g = match error {
                    ErrorModel::Exponential { a } => *a,
                    e => e.sd(base[r].1),
                };
                v[(r, r)] += g * g;
            }
            let u_pop = pm.to_iiv(&pm.phi_pop(i, &fit.b));
            let mut dev = DVector::<f64>::zeros(n);
            for r in 0..n {
                dev[r] = base[r].0;
            }
            dev += &jac * (&u0 - &u_pop);
            let chol = v
                .clone()
                .cholesky()
                .ok_or_else(|| Error::computation("linearized covariance is not positive definite"))?;
            let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            let z = chol.solve(&dev);
            let mut ll = -0.5 * (n as f64 * ln_2pi + logdet + dev.dot(&z));
            if error.on_log_scale() {
                // Jacobian of the log transform: pm.y holds ln y here.
                ll -= pm.y[i].iter().sum::<f64>();
            }
            Ok(ll)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::builtin;
    use crate::model::{ErrorModel, NlmeModel, OmegaPattern, ParameterSpec, Transform};
    use crate::saem::{run_saem, SaemOptions};
    use crate::test_support::{binary_dataset, gaussian_dataset};
    use approx::assert_relative_eq;

    fn gaussian_fit(omega: (f64, f64), a: f64) -> SaemFit {
        let ds = gaussian_dataset(10);
        let entry = builtin("gaussian-linear").unwrap();
        let model = NlmeModel {
            model: entry.model,
            params: vec![
                ParameterSpec { name: "b0".into(), transform: Transform::Identity, init: 1.4, iiv: true },
                ParameterSpec { name: "b1".into(), transform: Transform::Identity, init: 0.5, iiv: true },
            ],
            covariates: vec![],
            omega: OmegaPattern::diagonal(vec![true, true]),
            error: Some(ErrorModel::Constant { a }),
        };
        let opts = SaemOptions {
            k1: 0,
            k2: 0,
            n_burn: 0,
            omega_init: Some(vec![vec![omega.0, 0.0], vec![0.0, omega.1]]),
            ..Default::default()
        };
        run_saem(&model, &ds, &opts).unwrap()
    }

    /// Exact marginal LL for the linear-Gaussian model:
    /// y_i ~ N(Z μ, Z Ω Zᵀ + a² I).
    fn exact_gaussian_ll(fit: &SaemFit) -> f64 {
        let times = [0.0, 1.0, 2.0, 3.0];
        let mut z = DMatrix::<f64>::zeros(4, 2);
        for (r, &t) in times.iter().enumerate() {
            z[(r, 0)] = 1.0;
            z[(r, 1)] = t;
        }
        let a = match fit.error.as_ref().unwrap() {
            ErrorModel::Constant { a } => *a,
            _ => unreachable!(),
        };
        let v = &z * &fit.omega * z.transpose() + DMatrix::identity(4, 4) * a * a;
        let chol = v.cholesky().unwrap();
        let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mu = &z * DVector::from_vec(vec![fit.b[0], fit.b[1]]);
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        fit.data
            .subjects
            .iter()
            .map(|s| {
                let y = DVector::from_vec(s.response.clone());
                let dev = &y - &mu;
                let sol = chol.solve(&dev);
                -0.5 * (4.0 * ln_2pi + logdet + dev.dot(&sol))
            })
            .sum()
    }

    #[test]
    fn importance_sampling_matches_analytic_gaussian_marginal() {
        let fit = gaussian_fit((1.2, 0.4), 0.6);
        let exact = exact_gaussian_ll(&fit);
        let opts = LikelihoodOptions { n_is: 20_000, seed: 11, ..Default::default() };
        let est = estimate_loglik(&fit, LikelihoodMethod::ImportanceSampling, &opts).unwrap();
        let se = est.mc_se.unwrap();
        assert!(
            (est.total - exact).abs() < (4.0 * se).max(0.05),
            "IS {} vs exact {} (mc_se {})",
            est.total,
            exact,
            se
        );
    }

    #[test]
    fn gauss_hermite_matches_analytic_gaussian_marginal() {
        // The slope/intercept posterior is strongly correlated (ρ ≈ −0.75)
        // and the adaptation is componentwise, so convergence in the node
        // count is geometric in ρ — 40 nodes per dimension is plenty.
        let fit = gaussian_fit((1.2, 0.4), 0.6);
        let exact = exact_gaussian_ll(&fit);
        let opts = LikelihoodOptions { n_nodes: 40, ..Default::default() };
        let est = estimate_loglik(&fit, LikelihoodMethod::GaussHermite, &opts).unwrap();
        assert_relative_eq!(est.total, exact, epsilon = 1e-4);
    }

    #[test]
    fn linearization_is_exact_for_a_linear_model() {
        let fit = gaussian_fit((1.0, 0.3), 0.5);
        let exact = exact_gaussian_ll(&fit);
        let est = estimate_loglik(&fit, LikelihoodMethod::Linearization, &Default::default()).unwrap();
        assert_relative_eq!(est.total, exact, epsilon = 1e-4);
    }

    #[test]
    fn linearization_refuses_discrete_outcomes() {
        let ds = binary_dataset(8);
        let entry = builtin("binary-logistic").unwrap();
        let model = NlmeModel {
            model: entry.model,
            params: entry.defaults.clone(),
            covariates: vec![],
            omega: OmegaPattern::diagonal(vec![true, false]),
            error: None,
        };
        let opts = SaemOptions { k1: 0, k2: 0, n_burn: 0, ..Default::default() };
        let fit = run_saem(&model, &ds, &opts).unwrap();
        let err = estimate_loglik(&fit, LikelihoodMethod::Linearization, &Default::default())
            .unwrap_err();
        assert!(err.to_string().contains("Gaussian outcomes only"), "{err}");
    }

    #[test]
    fn binary_one_dim_quadrature_matches_trapezoid_oracle() {
        // One IIV dimension: compare AGQ against a dense trapezoid rule.
        let ds = binary_dataset(8);
        let entry = builtin("binary-logistic").unwrap();
        let model = NlmeModel {
            model: entry.model,
            params: vec![
                ParameterSpec { name: "theta1".into(), transform: Transform::Identity, init: -0.4, iiv: true },
                ParameterSpec { name: "theta2".into(), transform: Transform::Identity, init: 0.2, iiv: false },
            ],
            covariates: vec![],
            omega: OmegaPattern::diagonal(vec![true, false]),
            error: None,
        };
        let opts = SaemOptions {
            k1: 0,
            k2: 0,
            n_burn: 0,
            omega_init: Some(vec![vec![1.3, 0.0], vec![0.0, 0.0]]),
            ..Default::default()
        };
        let fit = run_saem(&model, &ds, &opts).unwrap();
        let pm = PreparedModel::new(&fit.model, &fit.data).unwrap();
        // Trapezoid over u ∈ mean ± 12 sd with 8000 points.
        let omega2 = 1.3f64;
        let mut oracle = 0.0;
        for i in 0..pm.n_subjects() {
            let mu = pm.phi_pop(i, &fit.b)[0];
            let lo = mu - 12.0 * omega2.sqrt();
            let hi = mu + 12.0 * omega2.sqrt();
            let n = 8000;
            let h = (hi - lo) / n as f64;
            let mut vals = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let u = lo + k as f64 * h;
                let mut phi = pm.phi_pop(i, &fit.b);
                phi[0] = u;
                let data_ll = pm.data_loglik(i, &phi);
                let prior = -0.5 * ((u - mu) * (u - mu) / omega2)
                    - 0.5 * (2.0 * std::f64::consts::PI * omega2).ln();
                let mut v = data_ll + prior;
                if k == 0 || k == n {
                    v += (0.5f64).ln();
                }
                vals.push(v);
            }
            oracle += logsumexp(&vals) + h.ln();
        }
        let est = estimate_loglik(
            &fit,
            LikelihoodMethod::GaussHermite,
            &LikelihoodOptions { n_nodes: 30, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(est.total, oracle, epsilon = 1e-5);
    }

    #[test]
    fn node_count_invariance_once_converged() {
        // One random effect: the componentwise adaptation is exact here, so
        // once the rule has converged extra nodes must not move the result.
        let ds = gaussian_dataset(10);
        let entry = builtin("gaussian-linear").unwrap();
        let model = NlmeModel {
            model: entry.model,
            params: vec![
                ParameterSpec { name: "b0".into(), transform: Transform::Identity, init: 1.4, iiv: true },
                ParameterSpec { name: "b1".into(), transform: Transform::Identity, init: 0.5, iiv: false },
            ],
            covariates: vec![],
            omega: OmegaPattern::diagonal(vec![true, false]),
            error: Some(ErrorModel::Constant { a: 0.5 }),
        };
        let opts = SaemOptions {
            k1: 0,
            k2: 0,
            n_burn: 0,
            omega_init: Some(vec![vec![1.0, 0.0], vec![0.0, 0.0]]),
            ..Default::default()
        };
        let fit = run_saem(&model, &ds, &opts).unwrap();
        let e15 = estimate_loglik(
            &fit,
            LikelihoodMethod::GaussHermite,
            &LikelihoodOptions { n_nodes: 15, ..Default::default() },
        )
        .unwrap();
        let e25 = estimate_loglik(
            &fit,
            LikelihoodMethod::GaussHermite,
            &LikelihoodOptions { n_nodes: 25, ..Default::default() },
        )
        .unwrap();
        assert!((e15.total - e25.total).abs() < 1e-8, "{} vs {}", e15.total, e25.total);
    }

    #[test]
    fn mc_se_scales_inversely_with_sqrt_m() {
        let fit = gaussian_fit((1.2, 0.4), 0.6);
        let se = |m: usize, seed: u64| {
            let opts = LikelihoodOptions { n_is: m, seed, ..Default::default() };
            estimate_loglik(&fit, LikelihoodMethod::ImportanceSampling, &opts)
                .unwrap()
                .mc_se
                .unwrap()
        };
        // Average over a few seeds to stabilize the ratio.
        let (mut lo, mut hi) = (0.0, 0.0);
        for seed in 20..24 {
            lo += se(2_000, seed);
            hi += se(8_000, seed);
        }
        let ratio = lo / hi;
        assert!((ratio - 2.0).abs() < 0.4, "se ratio {ratio} (expected ~2)");
    }

    #[test]
    fn gauss_hermite_refuses_more_than_four_dimensions() {
        // Five IIV dimensions via the proportional-odds model.
        let entry = builtin("ordinal-po5").unwrap();
        let params = entry
            .defaults
            .iter()
            .map(|p| ParameterSpec { iiv: true, ..p.clone() })
            .collect::<Vec<_>>();
        let model = NlmeModel {
            model: entry.model,
            params,
            covariates: vec![],
            omega: OmegaPattern::diagonal(vec![true; 5]),
            error: None,
        };
        let mut cat = crate::test_support::binary_dataset(6);
        cat.outcome = crate::data::OutcomeKind::Categorical;
        for s in &mut cat.subjects {
            for y in &mut s.response {
                *y += 1.0; // responses in 1..=2 ⊂ 1..=5
            }
        }
        let opts = SaemOptions { k1: 0, k2: 0, n_burn: 0, ..Default::default() };
        let fit = run_saem(&model, &cat, &opts).unwrap();
        let err = estimate_loglik(&fit, LikelihoodMethod::GaussHermite, &Default::default())
            .unwrap_err();
        assert!(err.to_string().contains("at most 4"), "{err}");
    }
}
