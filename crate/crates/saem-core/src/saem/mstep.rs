//! Stochastic-approximation state and the M-step updates.
//!
//! Sufficient statistics follow the SA rule
//! `Q̃_k = Q̃_{k−1} + γ_k (s(φ^{(k)}) − Q̃_{k−1})`, where `s` is averaged over
//! the L chains. The M-step then
//!
//! 1. solves the IIV-attached fixed effects by generalized least squares of
//!    the SA-averaged individual parameters on the covariate design (with
//!    the previous Ω as weight),
//! 2. updates Ω from the SA-averaged second moments, masked to the declared
//!    pattern and repaired to positive semi-definiteness by eigenvalue
//!    clipping when necessary,
//! 3. updates the Gaussian residual-error parameters from SA-averaged
//!    per-row residual statistics (closed form for constant/proportional/
//!    exponential; a small Nelder–Mead minimization for the combined model),
//! 4. floors the Ω diagonal and the error variances at τ·(previous value)
//!    while simulated annealing is active.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ErrorModel;
use crate::numerics::nelder_mead;

use super::prepared::{error_with_params, PreparedModel};

/// Stochastic-approximation accumulators.
#[derive(Debug, Clone)]
pub struct SaState {
    /// Per-subject SA-averaged chain-mean φ_i (the A_i of the GLS step).
    pub mean_phi: Vec<DVector<f64>>,
    /// SA-averaged Σ_i chain-mean φ_i φ_iᵀ.
    pub s2: DMatrix<f64>,
    /// SA-averaged per-row squared residual (y − f)², Gaussian outcomes only
    /// (stacked over subjects in dataset order).
    pub r2: Vec<f64>,
    /// SA-averaged per-row squared prediction f², Gaussian outcomes only.
    pub f2: Vec<f64>,
    /// Whether any update has been applied yet.
    initialized: bool,
}

impl SaState {
    /// Zero-initialized state. The zeros carry no information, so the first
    /// [`SaState::update`] overwrites them entirely whatever its γ.
    pub fn new(n_subjects: usize, d: usize, n_rows: usize) -> SaState {
        SaState {
            mean_phi: vec![DVector::zeros(d); n_subjects],
            s2: DMatrix::zeros(d, d),
            r2: vec![0.0; n_rows],
            f2: vec![0.0; n_rows],
            initialized: false,
        }
    }

    /// Apply the SA rule with step γ to all accumulators. `chain_mean_phi`
    /// is the per-subject chain-averaged φ; `chain_mean_outer` the summed
    /// chain-averaged outer products; `row_stats` the chain-averaged per-row
    /// ((y−f)², f²) pairs for Gaussian outcomes.
    ///
    /// The very first update uses an effective step of 1 regardless of γ:
    /// blending with the vacuous zero initialization would bias every
    /// statistic toward zero, which matters when the exploration phase is
    /// empty and the schedule starts below 1.
    pub fn update(
        &mut self,
        gamma: f64,
        chain_mean_phi: &[DVector<f64>],
        chain_mean_outer: &DMatrix<f64>,
        row_stats: Option<&[(f64, f64)]>,
    ) {
        let g = if self.initialized { gamma } else { 1.0 };
        self.initialized = true;
        for (m, a) in self.mean_phi.iter_mut().zip(chain_mean_phi) {
            *m += g * (a - &*m);
        }
        self.s2 += g * (chain_mean_outer - &self.s2);
        if let Some(rows) = row_stats {
            for (j, &(r2, f2)) in rows.iter().enumerate() {
                self.r2[j] += g * (r2 - self.r2[j]);
                self.f2[j] += g * (f2 - self.f2[j]);
            }
        }
    }
}

/// Solve the GLS normal equations for the IIV-attached fixed-effect columns,
/// holding the no-IIV columns of `b` fixed.
///
/// Over subjects i: minimize Σ (A_i − X_i b)ᵀ Ω̃⁻¹ (A_i − X_i b) restricted to
/// the IIV rows, which separates cleanly because each fixed-effect column
/// feeds exactly one parameter row.
pub fn gls_fixed_effects(
    pm: &PreparedModel,
    state: &SaState,
    omega_prec_iiv: &DMatrix<f64>,
    b: &mut DVector<f64>,
) -> Result<()> {
    let cols = &pm.cols_iiv;
    let nc = cols.len();
    if nc == 0 {
        return Ok(());
    }
    let q = pm.q();
    let mut ata = DMatrix::<f64>::zeros(nc, nc);
    let mut atb = DVector::<f64>::zeros(nc);
    for i in 0..pm.n_subjects() {
        // Restrict the design to IIV rows × IIV-attached columns.
        let xi = &pm.x[i];
        let mut xr = DMatrix::<f64>::zeros(q, nc);
        for (r, &row) in pm.iiv.iter().enumerate() {
            for (c, &col) in cols.iter().enumerate() {
                xr[(r, c)] = xi[(row, col)];
            }
        }
        let ai = pm.to_iiv(&state.mean_phi[i]);
        let wt_x = omega_prec_iiv * &xr;
        ata += xr.transpose() * &wt_x;
        atb += wt_x.transpose() * ai;
    }
    let chol = ata.clone().cholesky().ok_or_else(|| {
        let names = pm.model.fixed_names();
        let involved: Vec<String> = cols.iter().map(|&c| names[c].clone()).collect();
        Error::computation(format!(
            "singular fixed-effect design (collinear covariates among: {})",
            involved.join(", ")
        ))
    })?;
    let sol = chol.solve(&atb);
    for (c, &col) in cols.iter().enumerate() {
        b[col] = sol[c];
    }
    Ok(())
}

/// Ω update on the IIV block from SA-averaged first and second moments:
///
/// Ω̂ = (1/N)·[S2 − Σ(X_i b)A_iᵀ − ΣA_i(X_i b)ᵀ + Σ(X_i b)(X_i b)ᵀ]
///
/// restricted to the IIV coordinates, masked to the declared pattern, and
/// repaired to PSD by clipping eigenvalues at 1e-10 (appending a warning).
pub fn omega_update(
    pm: &PreparedModel,
    state: &SaState,
    b: &DVector<f64>,
    warnings: &mut Vec<String>,
) -> DMatrix<f64> {
    let d = pm.d();
    let n = pm.n_subjects() as f64;
    let mut acc = state.s2.clone();
    for i in 0..pm.n_subjects() {
        let pop = pm.phi_pop(i, b);
        let ai = &state.mean_phi[i];
        acc -= &pop * ai.transpose();
        acc -= ai * pop.transpose();
        acc += &pop * pop.transpose();
    }
    acc /= n;
    // Mask to the pattern (this also zeroes all no-IIV rows/columns) and
    // symmetrize against accumulated round-off.
    let mut omega = pm.model.omega.mask(&acc);
    omega = (&omega + omega.transpose()) * 0.5;

    // PSD check/repair on the IIV block.
    let block = pm.omega_iiv(&omega);
    let eig = block.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < 0.0) {
        warnings.push(format!(
            "Ω update produced a non-PSD matrix (min eigenvalue {:.3e}); repaired by clipping at 1e-10",
            eig.eigenvalues.min()
        ));
        let q = pm.q();
        let mut repaired = DMatrix::<f64>::zeros(q, q);
        for j in 0..q {
            let lam = eig.eigenvalues[j].max(1e-10);
            let v = eig.eigenvectors.column(j);
            repaired += v * v.transpose() * lam;
        }
        let mut full = DMatrix::<f64>::zeros(d, d);
        for (a, &ra) in pm.iiv.iter().enumerate() {
            for (bj, &rb) in pm.iiv.iter().enumerate() {
                full[(ra, rb)] = repaired[(a, bj)];
            }
        }
        omega = pm.model.omega.mask(&full);
    }
    omega
}

/// Update the Gaussian error parameters from the SA-averaged per-row
/// statistics. Returns the updated model.
pub fn error_update(prev: &ErrorModel, r2: &[f64], f2: &[f64]) -> Result<ErrorModel> {
    let n = r2.len() as f64;
    if r2.is_empty() {
        return Ok(*prev);
    }
    let updated = match *prev {
        ErrorModel::Constant { .. } | ErrorModel::Exponential { .. } => {
            let a2 = r2.iter().sum::<f64>() / n;
            error_with_params(prev, a2.sqrt().max(1e-10), 0.0)
        }
        ErrorModel::Proportional { .. } => {
            let b2 = r2
                .iter()
                .zip(f2)
                .map(|(&r, &f)| r / f.max(1e-12))
                .sum::<f64>()
                / n;
            error_with_params(prev, 0.0, b2.sqrt().max(1e-10))
        }
        ErrorModel::Combined { a, b } => {
            // Minimize Σ_j [ r2_j/(a²+b²f2_j) + ln(a²+b²f2_j) ] over
            // (ln a, ln b), the complete-data −2·log-likelihood profile with
            // the SA-averaged statistics plugged in.
            let obj = |x: &[f64]| {
                let (a2, b2) = ((2.0 * x[0]).exp(), (2.0 * x[1]).exp());
                r2.iter()
                    .zip(f2)
                    .map(|(&r, &f)| {
                        let g2 = a2 + b2 * f;
                        r / g2 + g2.ln()
                    })
                    .sum::<f64>()
            };
            let x0 = [a.max(1e-6).ln(), b.max(1e-6).ln()];
            let (x, _) = nelder_mead(&x0, &[0.3, 0.3], 400, 1e-12, obj);
            error_with_params(prev, x[0].exp(), x[1].exp())
        }
    };
    updated.validate().map_err(|_| Error::computation("error-model update left the positive domain"))?;
    Ok(updated)
}

/// Apply the simulated-annealing floor: each Ω diagonal entry (on the
/// pattern) and each error variance is kept at least τ·(previous value).
pub fn anneal_floor(
    pm: &PreparedModel,
    tau: f64,
    omega_prev: &DMatrix<f64>,
    omega: &mut DMatrix<f64>,
    error_prev: Option<&ErrorModel>,
    error: &mut Option<ErrorModel>,
) {
    for &k in &pm.iiv {
        let floor = tau * omega_prev[(k, k)];
        if omega[(k, k)] < floor {
            omega[(k, k)] = floor;
        }
    }
    if let (Some(prev), Some(cur)) = (error_prev, error.as_mut()) {
        let floor_sd = |new: f64, old: f64| {
            let floor2 = tau * old * old;
            if new * new < floor2 {
                floor2.sqrt()
            } else {
                new
            }
        };
        *cur = match (*prev, *cur) {
            (ErrorModel::Constant { a: pa }, ErrorModel::Constant { a }) => {
                ErrorModel::Constant { a: floor_sd(a, pa) }
            }
            (ErrorModel::Exponential { a: pa }, ErrorModel::Exponential { a }) => {
                ErrorModel::Exponential { a: floor_sd(a, pa) }
            }
            (ErrorModel::Proportional { b: pb }, ErrorModel::Proportional { b }) => {
                ErrorModel::Proportional { b: floor_sd(b, pb) }
            }
            (ErrorModel::Combined { a: pa, b: pb }, ErrorModel::Combined { a, b }) => {
                ErrorModel::Combined { a: floor_sd(a, pa), b: floor_sd(b, pb) }
            }
            (_, cur) => cur,
        };
    }
}

/// Profile the no-IIV fixed-effect block by (approximately) maximizing the
/// complete-data data log-likelihood in those coordinates, holding the
/// sampled IIV coordinates fixed: a damped-Newton search with central-
/// difference derivatives (2 rounds, with halving line search), falling back
/// to the previous value if no improvement is found. The caller blends the
/// result with step γ_k.
pub fn profile_no_iiv(
    pm: &PreparedModel,
    b: &DVector<f64>,
    phi_chains: &[Vec<DVector<f64>>],
) -> DVector<f64> {
    let cols = pm.cols_no_iiv.clone();
    let nb = cols.len();
    let mut v = DVector::from_iterator(nb, cols.iter().map(|&c| b[c]));
    if nb == 0 {
        return v;
    }

    let objective = |vals: &DVector<f64>| -> f64 {
        let mut b_try = b.clone();
        for (j, &c) in cols.iter().enumerate() {
            b_try[c] = vals[j];
        }
        let mut total = 0.0;
        for chain in phi_chains {
            for (i, phi) in chain.iter().enumerate() {
                let mut phi_try = phi.clone();
                pm.clamp_no_iiv(i, &b_try, &mut phi_try);
                let ll = pm.data_loglik(i, &phi_try);
                if ll.is_finite() {
                    total += ll;
                } else {
                    total += crate::numerics::LOG_PROB_FLOOR * pm.data.subjects[i].n_rows() as f64;
                }
            }
        }
        total
    };

    let mut f0 = objective(&v);
    for _round in 0..2 {
        // Central-difference gradient and Hessian.
        let h: Vec<f64> = v.iter().map(|x| 1e-4 * x.abs().max(1.0)).collect();
        let mut grad = DVector::<f64>::zeros(nb);
        let mut hess = DMatrix::<f64>::zeros(nb, nb);
        let mut f_plus = vec![0.0; nb];
        let mut f_minus = vec![0.0; nb];
        for j in 0..nb {
            let mut vp = v.clone();
            vp[j] += h[j];
            f_plus[j] = objective(&vp);
            let mut vm = v.clone();
            vm[j] -= h[j];
            f_minus[j] = objective(&vm);
            grad[j] = (f_plus[j] - f_minus[j]) / (2.0 * h[j]);
            hess[(j, j)] = (f_plus[j] - 2.0 * f0 + f_minus[j]) / (h[j] * h[j]);
        }
        for j in 0..nb {
            for k in (j + 1)..nb {
                let mut vpp = v.clone();
                vpp[j] += h[j];
                vpp[k] += h[k];
                let fpp = objective(&vpp);
                let mixed =
                    (fpp - f_plus[j] - f_plus[k] + f0) / (h[j] * h[k]);
                hess[(j, k)] = mixed;
                hess[(k, j)] = mixed;
            }
        }
        // Newton direction on the negated (convex) problem; fall back to
        // gradient ascent if the Hessian is not negative-definite.
        let step = match (-hess).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                let scale = 1.0 / grad.norm().max(1.0);
                grad.clone() * scale
            }
        };
        // Halving line search on the ascent direction.
        let mut improved = false;
        let mut lambda = 1.0;
        for _ in 0..6 {
            let cand = &v + &step * lambda;
            let fc = objective(&cand);
            if fc > f0 {
                v = cand;
                f0 = fc;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    v
}
