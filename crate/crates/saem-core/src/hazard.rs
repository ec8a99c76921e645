//! Parametric hazard families for the time-to-event models.
//!
//! Each family is parameterized by a characteristic time `Te > 0` and (except
//! the exponential) a shape `γ > 0`:
//!
//! | family       | h(t)                                   | H(t)                  |
//! |--------------|----------------------------------------|-----------------------|
//! | exponential  | 1/Te                                   | t/Te                  |
//! | weibull      | (γ/Te)(t/Te)^(γ−1)                     | (t/Te)^γ              |
//! | gompertz     | (γ/Te′)·exp(t/Te′), Te′=Te/ln(1+ln2/γ) | γ(exp(t/Te′) − 1)     |
//! | gamma        | gamma(γ) density of t/Te, scaled 1/Te  | P(γ, t/Te)            |
//! | log-logistic | (γ/Te)(t/Te)^(γ−1)/(1+(t/Te)^γ)        | ln(1 + (t/Te)^γ)      |
//!
//! `P` is the lower regularized incomplete gamma function, so the gamma
//! family is improper: H(∞) = 1 and a fraction exp(−1) of subjects never
//! experiences the event. The Gompertz reparameterization makes `Te` the
//! median event time (S(Te) = 1/2), as does the log-logistic form.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Parametric hazard family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardFamily {
    Exponential,
    Weibull,
    Gompertz,
    Gamma,
    LogLogistic,
}

impl HazardFamily {
    /// Number of natural parameters: 1 (`Te`) for the exponential, 2
    /// (`Te`, `γ`) otherwise.
    pub fn n_params(self) -> usize {
        match self {
            HazardFamily::Exponential => 1,
            _ => 2,
        }
    }

    /// Gompertz scale Te′ = Te / ln(1 + ln2/γ).
    #[inline]
    fn gompertz_scale(te: f64, gamma: f64) -> f64 {
        te / (1.0 + std::f64::consts::LN_2 / gamma).ln()
    }

    /// Log hazard at t > 0.
    pub fn log_hazard(self, t: f64, te: f64, gamma: f64) -> f64 {
        debug_assert!(t > 0.0 && te > 0.0);
        match self {
            HazardFamily::Exponential => -te.ln(),
            HazardFamily::Weibull => gamma.ln() - te.ln() + (gamma - 1.0) * (t / te).ln(),
            HazardFamily::Gompertz => {
                let s = Self::gompertz_scale(te, gamma);
                gamma.ln() - s.ln() + t / s
            }
            HazardFamily::Gamma => {
                let x = t / te;
                (gamma - 1.0) * x.ln() - x - ln_gamma(gamma) - te.ln()
            }
            HazardFamily::LogLogistic => {
                let z = gamma * (t / te).ln();
                gamma.ln() - te.ln() + (gamma - 1.0) * (t / te).ln() - crate::numerics::log1pexp(z)
            }
        }
    }

    /// Cumulative hazard H(t) = ∫₀ᵗ h(u) du (H(0) = 0).
    pub fn cum_hazard(self, t: f64, te: f64, gamma: f64) -> f64 {
        debug_assert!(t >= 0.0 && te > 0.0);
        if t == 0.0 {
            return 0.0;
        }
        match self {
            HazardFamily::Exponential => t / te,
            HazardFamily::Weibull => (t / te).powf(gamma),
            HazardFamily::Gompertz => {
                let s = Self::gompertz_scale(te, gamma);
                gamma * (t / s).exp_m1()
            }
            HazardFamily::Gamma => gamma_lr(gamma, t / te),
            HazardFamily::LogLogistic => crate::numerics::log1pexp(gamma * (t / te).ln()),
        }
    }

    /// Supremum of the cumulative hazard (1 for the improper gamma family,
    /// +∞ otherwise).
    pub fn max_cum_hazard(self) -> f64 {
        match self {
            HazardFamily::Gamma => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// Invert the cumulative hazard: the t with H(t) = `target`, or `None`
    /// when the target exceeds the attainable supremum. Closed forms where
    /// they exist; bisection to |H(t) − target| ≤ 1e-10 for the gamma family.
    pub fn inv_cum_hazard(self, target: f64, te: f64, gamma: f64) -> Option<f64> {
        debug_assert!(target >= 0.0 && te > 0.0);
        if target == 0.0 {
            return Some(0.0);
        }
        match self {
            HazardFamily::Exponential => Some(te * target),
            HazardFamily::Weibull => Some(te * target.powf(1.0 / gamma)),
            HazardFamily::Gompertz => {
                let s = Self::gompertz_scale(te, gamma);
                Some(s * (target / gamma).ln_1p())
            }
            HazardFamily::Gamma => {
                if target >= 1.0 - 1e-13 {
                    return None;
                }
                // Bracket the root by doubling, then bisect.
                let mut hi = te;
                let mut guard = 0;
                while self.cum_hazard(hi, te, gamma) < target {
                    hi *= 2.0;
                    guard += 1;
                    if guard > 200 {
                        return None;
                    }
                }
                crate::numerics::bisect(0.0, hi, target, 1e-10, 200, |t| {
                    self.cum_hazard(t, te, gamma)
                })
                .ok()
            }
            HazardFamily::LogLogistic => {
                // H = ln(1 + (t/Te)^γ) → t = Te·(e^H − 1)^(1/γ).
                Some(te * target.exp_m1().powf(1.0 / gamma))
            }
        }
    }

    /// Registry suffix of this family (`tte-<name>`).
    pub fn name(self) -> &'static str {
        match self {
            HazardFamily::Exponential => "exponential",
            HazardFamily::Weibull => "weibull",
            HazardFamily::Gompertz => "gompertz",
            HazardFamily::Gamma => "gamma",
            HazardFamily::LogLogistic => "loglogistic",
        }
    }

    /// Parse a family from its registry suffix.
    pub fn from_name(name: &str) -> Result<HazardFamily> {
        match name {
            "exponential" => Ok(HazardFamily::Exponential),
            "weibull" => Ok(HazardFamily::Weibull),
            "gompertz" => Ok(HazardFamily::Gompertz),
            "gamma" => Ok(HazardFamily::Gamma),
            "loglogistic" => Ok(HazardFamily::LogLogistic),
            other => Err(Error::validation(format!("unknown hazard family `{other}`"))),
        }
    }

    /// All families, in registry order.
    pub fn all() -> [HazardFamily; 5] {
        [
            HazardFamily::Exponential,
            HazardFamily::Weibull,
            HazardFamily::Gompertz,
            HazardFamily::Gamma,
            HazardFamily::LogLogistic,
        ]
    }
}
