//! Metropolis–Hastings simulation step: the three transition kernels that
//! draw individual working-scale parameters φ_i from their conditional
//! distribution p(φ_i | y_i; θ) ∝ p(y_i | φ_i) · N(φ_i; X_i b, Ω).
//!
//! - **Kernel 1** proposes independently from the prior N(X_i b, Ω), so the
//!   MH ratio reduces to the data-likelihood ratio.
//! - **Kernel 2** is a componentwise Gaussian random walk over the IIV
//!   coordinates.
//! - **Kernel 3** is a joint random walk over a random coordinate subset
//!   (subset size uniform on 1..=q).
//!
//! Random-walk proposal standard deviations are `scale_j · sqrt(Ω_jj)`;
//! the scales are shared across subjects and chains and adapted
//! multiplicatively (×1.1 / ×0.9) toward a target acceptance rate during
//! burn-in and exploration only.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::prepared::{OmegaOps, PreparedModel};

/// Adaptive random-walk proposal scales (one per IIV coordinate, separately
/// for the componentwise and block kernels).
#[derive(Debug, Clone)]
pub struct Scales {
    /// Componentwise-kernel scales.
    pub cw: Vec<f64>,
    /// Block-kernel scales.
    pub block: Vec<f64>,
}

/// Bounds on the adaptive scales.
const SCALE_MIN: f64 = 1e-3;
const SCALE_MAX: f64 = 1e3;

impl Scales {
    /// Unit scales for q IIV coordinates.
    pub fn new(q: usize) -> Scales {
        Scales { cw: vec![1.0; q], block: vec![1.0; q] }
    }

    /// One multiplicative adaptation step toward `target` acceptance, from
    /// pooled counts.
    pub fn adapt(&mut self, counts: &SweepCounts, target: f64) {
        for j in 0..self.cw.len() {
            if counts.cw_prop[j] > 0 {
                let rate = counts.cw_acc[j] as f64 / counts.cw_prop[j] as f64;
                self.cw[j] = (self.cw[j] * if rate > target { 1.1 } else { 0.9 })
                    .clamp(SCALE_MIN, SCALE_MAX);
            }
            if counts.block_prop[j] > 0 {
                let rate = counts.block_acc[j] as f64 / counts.block_prop[j] as f64;
                self.block[j] = (self.block[j] * if rate > target { 1.1 } else { 0.9 })
                    .clamp(SCALE_MIN, SCALE_MAX);
            }
        }
    }
}

/// Pooled acceptance counts for one iteration (merged over subjects and
/// chains in fixed order).
#[derive(Debug, Clone, Default)]
pub struct SweepCounts {
    /// Kernel-1 acceptances / proposals.
    pub k1_acc: u64,
    /// Kernel-1 proposals.
    pub k1_prop: u64,
    /// Componentwise acceptances per coordinate.
    pub cw_acc: Vec<u64>,
    /// Componentwise proposals per coordinate.
    pub cw_prop: Vec<u64>,
    /// Block acceptances per coordinate (counted when the coordinate is in
    /// the proposed subset).
    pub block_acc: Vec<u64>,
    /// Block proposals per coordinate.
    pub block_prop: Vec<u64>,
}

impl SweepCounts {
    /// Zeroed counts for q coordinates.
    pub fn new(q: usize) -> SweepCounts {
        SweepCounts {
            k1_acc: 0,
            k1_prop: 0,
            cw_acc: vec![0; q],
            cw_prop: vec![0; q],
            block_acc: vec![0; q],
            block_prop: vec![0; q],
        }
    }

    /// Merge another subject's counts into this one.
    pub fn merge(&mut self, other: &SweepCounts) {
        self.k1_acc += other.k1_acc;
        self.k1_prop += other.k1_prop;
        for j in 0..self.cw_acc.len() {
            self.cw_acc[j] += other.cw_acc[j];
            self.cw_prop[j] += other.cw_prop[j];
            self.block_acc[j] += other.block_acc[j];
            self.block_prop[j] += other.block_prop[j];
        }
    }

    /// Overall acceptance rates (kernel 1, componentwise, block).
    pub fn rates(&self) -> (f64, f64, f64) {
        let frac = |a: u64, p: u64| if p == 0 { f64::NAN } else { a as f64 / p as f64 };
        (
            frac(self.k1_acc, self.k1_prop),
            frac(self.cw_acc.iter().sum(), self.cw_prop.iter().sum()),
            frac(self.block_acc.iter().sum(), self.block_prop.iter().sum()),
        )
    }
}

#[inline]
fn accept(log_ratio: f64, rng: &mut ChaCha8Rng) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    // NaN (e.g. −inf − −inf) compares false → reject.
    rng.random::<f64>().ln() < log_ratio
}

/// One full simulation-step sweep for subject `i`: `n_mcmc.0` kernel-1
/// updates, `n_mcmc.1` componentwise sweeps, `n_mcmc.2` block updates.
/// `phi`/`ll` hold the current state and its cached data log-likelihood and
/// are updated in place. Returns the subject's acceptance counts.
#[allow(clippy::too_many_arguments)]
pub fn sweep_subject(
    pm: &PreparedModel,
    i: usize,
    b: &DVector<f64>,
    ops: &OmegaOps,
    omega_diag_iiv: &[f64],
    scales: &Scales,
    n_mcmc: (usize, usize, usize),
    rng: &mut ChaCha8Rng,
    phi: &mut DVector<f64>,
    ll: &mut f64,
) -> SweepCounts {
    let q = pm.q();
    let mut counts = SweepCounts::new(q);
    let prior_mean = pm.to_iiv(&pm.phi_pop(i, b));
    let mut u = pm.to_iiv(phi);

    // Kernel 1: independent proposals from the prior.
    for _ in 0..n_mcmc.0 {
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u_new = &prior_mean + &ops.sample * z;
        pm.from_iiv(&u_new, phi);
        let ll_new = pm.data_loglik(i, phi);
        counts.k1_prop += 1;
        if accept(ll_new - *ll, rng) {
            counts.k1_acc += 1;
            u = u_new;
            *ll = ll_new;
        } else {
            pm.from_iiv(&u, phi);
        }
    }

    // Kernel 2: componentwise random walk.
    for _ in 0..n_mcmc.1 {
        for j in 0..q {
            let sd = scales.cw[j] * omega_diag_iiv[j].sqrt().max(1e-15);
            let mut u_new = u.clone();
            u_new[j] += sd * rng.sample::<f64, _>(StandardNormal);
            pm.from_iiv(&u_new, phi);
            let ll_new = pm.data_loglik(i, phi);
            let log_ratio = ll_new - *ll
                + ops.log_density_unnorm(&u_new, &prior_mean)
                - ops.log_density_unnorm(&u, &prior_mean);
            counts.cw_prop[j] += 1;
            if accept(log_ratio, rng) {
                counts.cw_acc[j] += 1;
                u = u_new;
                *ll = ll_new;
            } else {
                pm.from_iiv(&u, phi);
            }
        }
    }

    // Kernel 3: block random walk over a random coordinate subset.
    let mut order: Vec<usize> = (0..q).collect();
    for _ in 0..n_mcmc.2 {
        let nd = rng.random_range(1..=q);
        // Partial Fisher–Yates shuffle to pick nd distinct coordinates.
        for k in 0..nd {
            let pick = rng.random_range(k..q);
            order.swap(k, pick);
        }
        let mut u_new = u.clone();
        for &j in &order[..nd] {
            let sd = scales.block[j] * omega_diag_iiv[j].sqrt().max(1e-15);
            u_new[j] += sd * rng.sample::<f64, _>(StandardNormal);
        }
        pm.from_iiv(&u_new, phi);
        let ll_new = pm.data_loglik(i, phi);
        let log_ratio = ll_new - *ll
            + ops.log_density_unnorm(&u_new, &prior_mean)
            - ops.log_density_unnorm(&u, &prior_mean);
        let accepted = accept(log_ratio, rng);
        for &j in &order[..nd] {
            counts.block_prop[j] += 1;
            if accepted {
                counts.block_acc[j] += 1;
            }
        }
        if accepted {
            u = u_new;
            *ll = ll_new;
        } else {
            pm.from_iiv(&u, phi);
        }
    }

    counts
}
