//! Built-in structural model library.
//!
//! Registry names:
//!
//! | name               | outcome | ψ                                  |
//! |--------------------|---------|------------------------------------|
//! | `binary-logistic`  | binary  | θ1, θ2 (logit p = θ1 + θ2·t)       |
//! | `ordinal-po5`      | categorical | alp1..alp4, beta (5 levels, proportional odds) |
//! | `poisson-lin`      | count   | a0, a1 (log λ = a0 + a1·t)         |
//! | `zip-lin`          | count   | a0, a1, p0 (zero-inflated)         |
//! | `truncpoisson-lin` | count   | a0, a1 (zero-truncated)            |
//! | `tte-exponential`  | tte     | Te                                 |
//! | `tte-weibull`      | tte     | Te, gamma                          |
//! | `tte-gompertz`     | tte     | Te, gamma                          |
//! | `tte-gamma`        | tte     | Te, gamma                          |
//! | `tte-loglogistic`  | tte     | Te, gamma                          |
//! | `gaussian-linear`  | gaussian | b0, b1 (f = b0 + b1·t)            |
//!
//! All discrete kernels return per-row log-probabilities floored at
//! [`crate::numerics::LOG_PROB_FLOOR`]; time-to-event kernels implement the
//! interval decomposition over a subject's (anchor, event/censor) rows.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;

use crate::data::{OutcomeKind, SubjectData};
use crate::error::{Error, Result};
use crate::hazard::HazardFamily;
use crate::model::{Model, ParameterSpec, Transform};
use crate::numerics::{log1pexp, log_logistic, logaddexp, logistic, LOG_PROB_FLOOR};

#[inline]
fn floor_lp(lp: f64) -> f64 {
    if lp.is_nan() {
        LOG_PROB_FLOOR
    } else {
        lp.max(LOG_PROB_FLOOR)
    }
}

// ---------------------------------------------------------------------------
// binary-logistic
// ---------------------------------------------------------------------------

/// Binary longitudinal model with a linear time trend on the logit scale:
/// logit P(y_ij = 1) = θ1 + θ2·t_ij.
#[derive(Debug, Clone, Copy)]
pub struct BinaryLogistic;

impl Model for BinaryLogistic {
    fn name(&self) -> &str {
        "binary-logistic"
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Binary
    }
    fn n_psi(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta1".into(), "theta2".into()]
    }

    fn log_prob_rows(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .zip(&subject.response)
            .map(|(&t, &y)| {
                let l = psi[0] + psi[1] * t;
                let lp = if y == 1.0 { log_logistic(l) } else { -log1pexp(l) };
                floor_lp(lp)
            })
            .collect())
    }

    fn simulate(&self, psi: &[f64], subject: &SubjectData, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .map(|&t| {
                let p = logistic(psi[0] + psi[1] * t);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// ordinal-po5
// ---------------------------------------------------------------------------

/// Five-level proportional-odds model with a shared time slope:
///
/// ```text
/// logit P(y ≤ 1) = alp1 + beta·t
/// logit P(y ≤ k) = logit P(y ≤ k−1) + alp_k,   k = 2,3,4
/// ```
///
/// `alp2..alp4` are positive (log-transformed by default) so the cumulative
/// logits are ordered; responses take values 1..=5.
#[derive(Debug, Clone, Copy)]
pub struct OrdinalPo5;

impl OrdinalPo5 {
    /// Cumulative probabilities P(y ≤ k), k = 1..4.
    #[inline]
    fn cum_probs(psi: &[f64], t: f64) -> [f64; 4] {
        let beta = psi[4];
        let mut l = psi[0] + beta * t;
        let mut out = [0.0; 4];
        out[0] = logistic(l);
        for k in 1..4 {
            l += psi[k];
            out[k] = logistic(l);
        }
        out
    }
}

impl Model for OrdinalPo5 {
    fn name(&self) -> &str {
        "ordinal-po5"
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Categorical
    }
    fn n_psi(&self) -> usize {
        5
    }
    fn param_names(&self) -> Vec<String> {
        vec!["alp1".into(), "alp2".into(), "alp3".into(), "alp4".into(), "beta".into()]
    }

    fn log_prob_rows(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        subject
            .times()
            .iter()
            .zip(&subject.response)
            .map(|(&t, &y)| {
                let c = Self::cum_probs(psi, t);
                let k = y as usize;
                if !(1..=5).contains(&k) || y.fract() != 0.0 {
                    return Err(Error::validation(format!(
                        "ordinal-po5 response must be in 1..=5 (got {y})"
                    )));
                }
                let p = match k {
                    1 => c[0],
                    5 => 1.0 - c[3],
                    k => c[k - 1] - c[k - 2],
                };
                Ok(floor_lp(p.ln()))
            })
            .collect()
    }

    fn simulate(&self, psi: &[f64], subject: &SubjectData, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .map(|&t| {
                let c = Self::cum_probs(psi, t);
                let u: f64 = rng.random();
                let mut k = 5usize;
                for (j, &cj) in c.iter().enumerate() {
                    if u <= cj {
                        k = j + 1;
                        break;
                    }
                }
                k as f64
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Count models
// ---------------------------------------------------------------------------

#[inline]
fn poisson_log_pmf(y: f64, log_lambda: f64) -> f64 {
    let lambda = log_lambda.exp();
    y * log_lambda - lambda - ln_gamma(y + 1.0)
}

fn draw_poisson(lambda: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    rand_distr::Poisson::new(lambda)
        .map(|d| d.sample(rng) as f64)
        .unwrap_or(0.0)
}

/// Poisson counts with a log-linear time trend: log λ_ij = a0 + a1·t_ij.
#[derive(Debug, Clone, Copy)]
pub struct PoissonLin;

impl Model for PoissonLin {
    fn name(&self) -> &str {
        "poisson-lin"
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Count
    }
    fn n_psi(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["a0".into(), "a1".into()]
    }

    fn log_prob_rows(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .zip(&subject.response)
            .map(|(&t, &y)| floor_lp(poisson_log_pmf(y, psi[0] + psi[1] * t)))
            .collect())
    }

    fn simulate(&self, psi: &[f64], subject: &SubjectData, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .map(|&t| draw_poisson((psi[0] + psi[1] * t).exp(), rng))
            .collect())
    }
}

/// Zero-inflated Poisson: with probability p0 a structural zero, otherwise
/// Poisson with log λ_ij = a0 + a1·t_ij. `p0` lives in (0,1)
/// (logit-transformed by default) and is conventionally a population-level
/// parameter without IIV.
#[derive(Debug, Clone, Copy)]
pub struct ZipLin;

impl Model for ZipLin {
    fn name(&self) -> &str {
        "zip-lin"
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Count
    }
    fn n_psi(&self) -> usize {
        3
    }
    fn param_names(&self) -> Vec<String> {
        vec!["a0".into(), "a1".into(), "p0".into()]
    }

    fn log_prob_rows(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        let p0 = psi[2];
        let (log_p0, log_1mp0) = (p0.ln(), (-p0).ln_1p());
        Ok(subject
            .times()
            .iter()
            .zip(&subject.response)
            .map(|(&t, &y)| {
                let log_lambda = psi[0] + psi[1] * t;
                let lp = if y == 0.0 {
                    // log[p0 + (1−p0)·e^{−λ}]
                    logaddexp(log_p0, log_1mp0 - log_lambda.exp())
                } else {
                    log_1mp0 + poisson_log_pmf(y, log_lambda)
                };
                floor_lp(lp)
            })
            .collect())
    }

    fn simulate(&self, psi: &[f64], subject: &SubjectData, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .map(|&t| {
                if rng.random::<f64>() < psi[2] {
                    0.0
                } else {
                    draw_poisson((psi[0] + psi[1] * t).exp(), rng)
                }
            })
            .collect())
    }
}

/// Zero-truncated Poisson (y ≥ 1): Poisson conditioned on y > 0, with
/// log λ_ij = a0 + a1·t_ij.
#[derive(Debug, Clone, Copy)]
pub struct TruncPoissonLin;

impl Model for TruncPoissonLin {
    fn name(&self) -> &str {
        "truncpoisson-lin"
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Count
    }
    fn n_psi(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["a0".into(), "a1".into()]
    }

    fn log_prob_rows(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .zip(&subject.response)
            .map(|(&t, &y)| {
                if y == 0.0 {
                    return LOG_PROB_FLOOR;
                }
                let log_lambda = psi[0] + psi[1] * t;
                let lambda = log_lambda.exp();
                // log(1 − e^{−λ}) via expm1 for small λ.
                let log_norm = (-(-lambda).exp_m1()).ln();
                floor_lp(poisson_log_pmf(y, log_lambda) - log_norm)
            })
            .collect())
    }

    fn simulate(&self, psi: &[f64], subject: &SubjectData, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(subject
            .times()
            .iter()
            .map(|&t| {
                let lambda = (psi[0] + psi[1] * t).exp();
                // Inverse-CDF on the truncated pmf: p_k ∝ λ^k/k!, k ≥ 1.
                let u: f64 = rng.random();
                let norm = -(-lambda).exp_m1();
                let mut pk = lambda * (-lambda).exp() / norm;
                let mut cum = pk;
                let mut k = 1.0f64;
                while u > cum && k < 1e6 {
                    k += 1.0;
                    pk *= lambda / k;
                    cum += pk;
                }
                k
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Time-to-event
// ---------------------------------------------------------------------------

/// Single-event time-to-event model over a parametric hazard family.
///
/// Subject rows follow the (anchor, terminal) layout: a time-0 anchor row
/// contributing nothing, then event/censor rows. A row at time t with
/// censoring indicator 0 (event) contributes `log h(t) − [H(t) − H(t_prev)]`;
/// an indicator of 1 (censored) contributes `−[H(t) − H(t_prev)]`.
#[derive(Debug, Clone)]
pub struct TteModel {
    /// Hazard family.
    pub family: HazardFamily,
    name: String,
}

impl TteModel {
    /// Build the tte model for a family.
    pub fn new(family: HazardFamily) -> Self {
        TteModel { family, name: format!("tte-{}", family.name()) }
    }

    #[inline]
    fn unpack(&self, psi: &[f64]) -> (f64, f64) {
        let te = psi[0];
        let gamma = if self.family.n_params() == 2 { psi[1] } else { 1.0 };
        (te, gamma)
    }
}

impl Model for TteModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Tte
    }
    fn n_psi(&self) -> usize {
        self.family.n_params()
    }
    fn param_names(&self) -> Vec<String> {
        match self.family.n_params() {
            1 => vec!["Te".into()],
            _ => vec!["Te".into(), "gamma".into()],
        }
    }

    fn log_prob_rows(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        let (te, gamma) = self.unpack(psi);
        if te <= 0.0 || gamma <= 0.0 {
            return Ok(vec![LOG_PROB_FLOOR; subject.n_rows()]);
        }
        let cens = subject
            .cens
            .as_ref()
            .ok_or_else(|| Error::validation("tte model requires a censoring column"))?;
        let times = subject.times();
        let mut out = Vec::with_capacity(times.len());
        let mut t_prev = 0.0;
        for (row, &t) in times.iter().enumerate() {
            if t == 0.0 {
                out.push(0.0);
                continue;
            }
            let dh = self.family.cum_hazard(t, te, gamma) - self.family.cum_hazard(t_prev, te, gamma);
            let mut lp = -dh;
            if cens[row] == 0.0 {
                lp += self.family.log_hazard(t, te, gamma);
            }
            out.push(floor_lp(lp));
            t_prev = t;
        }
        Ok(out)
    }

    fn simulate_tte(&self, psi: &[f64], t_max: f64, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
        let (te, gamma) = self.unpack(psi);
        if te <= 0.0 || gamma <= 0.0 {
            return Err(Error::computation("tte simulation requires positive Te and gamma"));
        }
        let u: f64 = rng.random();
        let target = -u.ln();
        match self.family.inv_cum_hazard(target, te, gamma) {
            Some(t) if t <= t_max => Ok((t, true)),
            _ => Ok((t_max, false)),
        }
    }
}

// ---------------------------------------------------------------------------
// gaussian-linear
// ---------------------------------------------------------------------------

/// Gaussian linear trend f(t) = b0 + b1·t (a simple continuous model for
/// simulation studies and tests).
#[derive(Debug, Clone, Copy)]
pub struct GaussianLinear;

impl Model for GaussianLinear {
    fn name(&self) -> &str {
        "gaussian-linear"
    }
    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Gaussian
    }
    fn n_psi(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["b0".into(), "b1".into()]
    }

    fn predict(&self, psi: &[f64], subject: &SubjectData) -> Result<Vec<f64>> {
        Ok(subject.times().iter().map(|&t| psi[0] + psi[1] * t).collect())
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// A registry entry: the model object plus default parameter metadata
/// (names, transforms, neutral initial values, IIV defaults).
#[derive(Clone)]
pub struct BuiltinEntry {
    /// The structural model.
    pub model: Arc<dyn Model>,
    /// Default parameter specifications (override `init`/`iiv` as needed).
    pub defaults: Vec<ParameterSpec>,
}

fn spec(name: &str, transform: Transform, init: f64, iiv: bool) -> ParameterSpec {
    ParameterSpec { name: name.into(), transform, init, iiv }
}

/// Names of all built-in models, in registry order.
pub fn registry() -> Vec<&'static str> {
    vec![
        "binary-logistic",
        "ordinal-po5",
        "poisson-lin",
        "zip-lin",
        "truncpoisson-lin",
        "tte-exponential",
        "tte-weibull",
        "tte-gompertz",
        "tte-gamma",
        "tte-loglogistic",
        "gaussian-linear",
    ]
}

/// Look up a built-in model by registry name.
pub fn builtin(name: &str) -> Result<BuiltinEntry> {
    let entry = match name {
        "binary-logistic" => BuiltinEntry {
            model: Arc::new(BinaryLogistic),
            defaults: vec![
                spec("theta1", Transform::Identity, 0.0, true),
                spec("theta2", Transform::Identity, 0.0, false),
            ],
        },
        "ordinal-po5" => BuiltinEntry {
            model: Arc::new(OrdinalPo5),
            defaults: vec![
                spec("alp1", Transform::Identity, 0.0, true),
                spec("alp2", Transform::Log, 1.0, false),
                spec("alp3", Transform::Log, 1.0, false),
                spec("alp4", Transform::Log, 1.0, false),
                spec("beta", Transform::Identity, 0.0, false),
            ],
        },
        "poisson-lin" => BuiltinEntry {
            model: Arc::new(PoissonLin),
            defaults: vec![
                spec("a0", Transform::Identity, 1.0, true),
                spec("a1", Transform::Identity, 0.0, false),
            ],
        },
        "zip-lin" => BuiltinEntry {
            model: Arc::new(ZipLin),
            defaults: vec![
                spec("a0", Transform::Identity, 1.0, true),
                spec("a1", Transform::Identity, 0.0, false),
                spec("p0", Transform::Logit, 0.1, false),
            ],
        },
        "truncpoisson-lin" => BuiltinEntry {
            model: Arc::new(TruncPoissonLin),
            defaults: vec![
                spec("a0", Transform::Identity, 1.0, true),
                spec("a1", Transform::Identity, 0.0, false),
            ],
        },
        "gaussian-linear" => BuiltinEntry {
            model: Arc::new(GaussianLinear),
            defaults: vec![
                spec("b0", Transform::Identity, 0.0, true),
                spec("b1", Transform::Identity, 0.0, true),
            ],
        },
        _ => {
            if let Some(suffix) = name.strip_prefix("tte-") {
                let family = HazardFamily::from_name(suffix).map_err(|_| {
                    Error::validation(format!(
                        "unknown model `{name}`; available: {}",
                        registry().join(", ")
                    ))
                })?;
                let model = TteModel::new(family);
                let mut defaults = vec![spec("Te", Transform::Log, 100.0, true)];
                if family.n_params() == 2 {
                    defaults.push(spec("gamma", Transform::Log, 1.0, false));
                }
                BuiltinEntry { model: Arc::new(model), defaults }
            } else {
                return Err(Error::validation(format!(
                    "unknown model `{name}`; available: {}",
                    registry().join(", ")
                )));
            }
        }
    };
    Ok(entry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn subject(times: Vec<f64>, response: Vec<f64>, cens: Option<Vec<f64>>) -> SubjectData {
        SubjectData { id: "s1".into(), preds: vec![times], response, cens, covariates: vec![] }
    }

    #[test]
    fn registry_resolves_every_name() {
        for name in registry() {
            let entry = builtin(name).unwrap();
            assert_eq!(entry.model.name(), name);
            assert_eq!(entry.defaults.len(), entry.model.n_psi());
            let names: Vec<String> = entry.defaults.iter().map(|p| p.name.clone()).collect();
            assert_eq!(names, entry.model.param_names());
        }
        assert!(builtin("no-such-model").is_err());
    }

    #[test]
    fn binary_logistic_matches_direct_formula() {
        let s = subject(vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], None);
        let psi = [0.4, -0.3];
        let lp = BinaryLogistic.log_prob_rows(&psi, &s).unwrap();
        for (row, (&t, &y)) in s.times().iter().zip(&s.response).enumerate() {
            let p = logistic(psi[0] + psi[1] * t);
            let direct = if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
            assert!((lp[row] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_extreme_logits_stay_floored() {
        let s = subject(vec![0.0], vec![1.0], None);
        let lp = BinaryLogistic.log_prob_rows(&[-1e4, 0.0], &s).unwrap();
        assert_eq!(lp[0], LOG_PROB_FLOOR);
    }

    #[test]
    fn ordinal_probabilities_sum_to_one() {
        let psi = [-1.2, 0.8, 0.5, 1.5, 0.07];
        for t in [0.0, 3.0, 10.0] {
            let mut total = 0.0;
            for k in 1..=5 {
                let s = subject(vec![t], vec![k as f64], None);
                total += OrdinalPo5.log_prob_rows(&psi, &s).unwrap()[0].exp();
            }
            assert!((total - 1.0).abs() < 1e-10, "t={t}: Σp = {total}");
        }
    }

    #[test]
    fn ordinal_cumulative_logits_are_ordered() {
        let c = OrdinalPo5::cum_probs(&[-0.5, 0.3, 0.9, 0.2, 0.0], 0.0);
        for k in 1..4 {
            assert!(c[k] > c[k - 1]);
        }
    }

    #[test]
    fn ordinal_rejects_out_of_range_response() {
        let s = subject(vec![0.0], vec![6.0], None);
        assert!(OrdinalPo5.log_prob_rows(&[0.0, 1.0, 1.0, 1.0, 0.0], &s).is_err());
    }

    #[test]
    fn poisson_matches_enumerated_pmf() {
        // λ = e^{0.5} at t=0; check against directly computed pmf values.
        let psi = [0.5, 0.0];
        let lambda: f64 = 0.5f64.exp();
        for y in 0..6 {
            let s = subject(vec![0.0], vec![y as f64], None);
            let lp = PoissonLin.log_prob_rows(&psi, &s).unwrap()[0];
            let fact: f64 = (1..=y).map(|k| k as f64).product();
            let direct = (lambda.powi(y as i32) * (-lambda).exp() / fact).ln();
            assert!((lp - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn zip_mixes_zero_mass_correctly() {
        let psi = [0.8, 0.0, 0.3];
        let lambda: f64 = 0.8f64.exp();
        let s0 = subject(vec![0.0], vec![0.0], None);
        let lp0 = ZipLin.log_prob_rows(&psi, &s0).unwrap()[0];
        let direct0 = (0.3 + 0.7 * (-lambda).exp()).ln();
        assert!((lp0 - direct0).abs() < 1e-12);
        let s2 = subject(vec![0.0], vec![2.0], None);
        let lp2 = ZipLin.log_prob_rows(&psi, &s2).unwrap()[0];
        let direct2 = (0.7 * lambda.powi(2) * (-lambda).exp() / 2.0).ln();
        assert!((lp2 - direct2).abs() < 1e-12);
    }

    #[test]
    fn zip_reduces_to_poisson_at_zero_inflation() {
        // p0 → 0 keeps only the Poisson branch; compare at a tiny p0.
        let psi_zip = [0.9, -0.1, 1e-14];
        let psi_pois = [0.9, -0.1];
        for (t, y) in [(0.0, 0.0), (2.0, 3.0), (5.0, 1.0)] {
            let s = subject(vec![t], vec![y], None);
            let a = ZipLin.log_prob_rows(&psi_zip, &s).unwrap()[0];
            let b = PoissonLin.log_prob_rows(&psi_pois, &s).unwrap()[0];
            assert!((a - b).abs() < 1e-9, "t={t} y={y}: {a} vs {b}");
        }
    }

    #[test]
    fn truncated_poisson_renormalizes_over_positive_support() {
        let psi = [0.4, 0.0];
        // Σ_{y≥1} p(y) = 1 (numerically, truncated at 80).
        let total: f64 = (1..80)
            .map(|y| {
                let s = subject(vec![0.0], vec![y as f64], None);
                TruncPoissonLin.log_prob_rows(&psi, &s).unwrap()[0].exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
        // y = 0 is impossible.
        let s0 = subject(vec![0.0], vec![0.0], None);
        assert_eq!(TruncPoissonLin.log_prob_rows(&psi, &s0).unwrap()[0], LOG_PROB_FLOOR);
    }

    #[test]
    fn tte_event_and_censor_contributions() {
        let model = TteModel::new(HazardFamily::Weibull);
        let psi = [300.0, 1.4];
        // Event at t=200.
        let s_event = subject(vec![0.0, 200.0], vec![0.0, 200.0], Some(vec![0.0, 0.0]));
        let lp = model.log_prob_rows(&psi, &s_event).unwrap();
        assert_eq!(lp[0], 0.0);
        let expect = HazardFamily::Weibull.log_hazard(200.0, 300.0, 1.4)
            - HazardFamily::Weibull.cum_hazard(200.0, 300.0, 1.4);
        assert!((lp[1] - expect).abs() < 1e-12);
        // Censored at t=200: survival only.
        let s_cens = subject(vec![0.0, 200.0], vec![0.0, 200.0], Some(vec![0.0, 1.0]));
        let lp_c = model.log_prob_rows(&psi, &s_cens).unwrap();
        let expect_c = -HazardFamily::Weibull.cum_hazard(200.0, 300.0, 1.4);
        assert!((lp_c[1] - expect_c).abs() < 1e-12);
    }

    #[test]
    fn tte_exponential_total_is_the_textbook_likelihood() {
        // For the exponential model an event at t has log L = −log Te − t/Te.
        let model = TteModel::new(HazardFamily::Exponential);
        let te = 150.0;
        let s = subject(vec![0.0, 75.0], vec![0.0, 75.0], Some(vec![0.0, 0.0]));
        let lp: f64 = model.log_prob_rows(&[te], &s).unwrap().iter().sum();
        assert!((lp - (-(te.ln()) - 75.0 / te)).abs() < 1e-12);
    }

    #[test]
    fn tte_simulation_respects_horizon_and_inverse_cdf() {
        let model = TteModel::new(HazardFamily::Weibull);
        let mut rng = stream(7, "test-tte", &[0]);
        let psi = [100.0, 1.5];
        let mut n_events = 0;
        for _ in 0..2000 {
            let (t, event) = model.simulate_tte(&psi, 150.0, &mut rng).unwrap();
            assert!(t <= 150.0 && t >= 0.0);
            if event {
                n_events += 1;
            } else {
                assert_eq!(t, 150.0);
            }
        }
        // P(T ≤ 150) = 1 − exp(−(1.5)^1.5) ≈ 0.841.
        let p = 1.0 - (-(150.0f64 / 100.0).powf(1.5)).exp();
        let se = (p * (1.0 - p) / 2000.0).sqrt();
        assert!((n_events as f64 / 2000.0 - p).abs() < 4.0 * se);
    }

    #[test]
    fn simulated_binary_fractions_track_probability() {
        let mut rng = stream(11, "test-binary", &[0]);
        let s = subject(vec![0.0; 4000], vec![0.0; 4000], None);
        let sim = BinaryLogistic.simulate(&[0.7, 0.0], &s, &mut rng).unwrap();
        let p_hat = sim.iter().sum::<f64>() / sim.len() as f64;
        let p = logistic(0.7);
        assert!((p_hat - p).abs() < 4.0 * (p * (1.0 - p) / 4000.0).sqrt());
    }

    #[test]
    fn simulated_truncated_counts_never_zero() {
        let mut rng = stream(13, "test-trunc", &[0]);
        let s = subject(vec![0.0; 500], vec![0.0; 500], None);
        let sim = TruncPoissonLin.simulate(&[-2.0, 0.0], &s, &mut rng).unwrap();
        assert!(sim.iter().all(|&y| y >= 1.0));
        // At λ = e^{−2} ≈ 0.135, nearly all draws are 1.
        let mean = sim.iter().sum::<f64>() / sim.len() as f64;
        assert!(mean < 1.2);
    }

    #[test]
    fn gaussian_linear_predicts_the_line() {
        let s = subject(vec![0.0, 1.0, 2.0], vec![0.0; 3], None);
        let f = GaussianLinear.predict(&[2.0, 0.5], &s).unwrap();
        assert_eq!(f, vec![2.0, 2.5, 3.0]);
        assert!(GaussianLinear.log_prob_rows(&[2.0, 0.5], &s).is_err());
    }
}
