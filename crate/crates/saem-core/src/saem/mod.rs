//! The SAEM estimation engine.
//!
//! Iterations follow the classical two-phase schedule: after a short burn-in
//! of simulation-only sweeps, K1 exploration iterations use step size
//! γ_k = 1 (the stochastic update forgets the past), then K2 smoothing
//! iterations use γ_{K1+m} = 1/(m+1), which averages the trajectory and
//! drives almost-sure convergence to the maximum-likelihood estimate. With
//! L > 1 Markov chains the complete-data statistics are averaged over chains
//! at each stochastic-approximation update. Simulated annealing floors the
//! variance components at τ·(previous value) during the first half of the
//! exploration phase so the algorithm keeps exploring before contracting.
//!
//! Parameters without inter-individual variability leave the curved
//! exponential family; their fixed effects are updated by a damped-Newton
//! partial maximization of the complete-data log-likelihood, blended into
//! the trajectory with the same γ_k step (see `mstep::profile_no_iiv`).

pub mod mcmc;
pub mod mstep;
pub mod prepared;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ErrorModel, NlmeModel};
use crate::rng::stream;

use mcmc::{Scales, SweepCounts};
use mstep::{anneal_floor, error_update, gls_fixed_effects, omega_update, profile_no_iiv, SaState};
use prepared::{OmegaOps, PreparedModel};

/// Options controlling a SAEM run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SaemOptions {
    /// Exploration iterations K1 (γ_k = 1).
    pub k1: usize,
    /// Smoothing iterations K2 (γ_{K1+m} = 1/(m+1)).
    pub k2: usize,
    /// Number of Markov chains L (0 = automatic: ⌈50/N⌉, at least 1).
    pub n_chains: usize,
    /// Burn-in iterations (simulation-only sweeps before iteration 1).
    pub n_burn: usize,
    /// MCMC sub-iterations per iteration for kernels (1, 2, 3).
    pub n_mcmc: (usize, usize, usize),
    /// Simulated-annealing factor τ ∈ (0, 1].
    pub tau: f64,
    /// Annealing window length in iterations (None = ⌈K1/2⌉).
    pub anneal_len: Option<usize>,
    /// Target acceptance rate for random-walk adaptation.
    pub target_accept: f64,
    /// Master RNG seed.
    pub seed: u64,
    /// Initial Ω (full d×d, masked to the pattern; None = identity diagonal).
    pub omega_init: Option<Vec<Vec<f64>>>,
    /// Initial covariate coefficients, aligned with the model's covariate
    /// relations (None = zeros).
    pub beta_init: Option<Vec<f64>>,
}

impl Default for SaemOptions {
    fn default() -> Self {
        SaemOptions {
            k1: 300,
            k2: 100,
            n_chains: 1,
            n_burn: 5,
            n_mcmc: (2, 2, 2),
            tau: 0.97,
            anneal_len: None,
            target_accept: 0.4,
            seed: 1,
            omega_init: None,
            beta_init: None,
        }
    }
}

impl SaemOptions {
    /// Validate option ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::validation("annealing factor τ must lie in (0, 1]"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::validation("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Resolve the chain count for N subjects.
    pub fn resolve_chains(&self, n_subjects: usize) -> usize {
        if self.n_chains == 0 {
            (50usize.div_ceil(n_subjects.max(1))).max(1)
        } else {
            self.n_chains
        }
    }
}

/// Step size γ_k for 1-based iteration k: 1 during exploration, 1/(k−K1+1)
/// during smoothing (γ_{K1+1} = 1/2, γ_{K1+m} = 1/(m+1)).
pub fn gamma_schedule(k: usize, k1: usize) -> f64 {
    if k <= k1 {
        1.0
    } else {
        1.0 / (k - k1 + 1) as f64
    }
}

/// Per-iteration parameter traces.
#[derive(Debug, Clone)]
pub struct Traces {
    /// Column names (natural-scale population parameters, covariate
    /// coefficients, Ω entries, error parameters).
    pub names: Vec<String>,
    /// Step sizes per row (0 for the initial row).
    pub gamma: Vec<f64>,
    /// One row per iteration, starting with the initial values (length
    /// 1 + K1 + K2).
    pub rows: Vec<Vec<f64>>,
}

/// Mean Metropolis–Hastings acceptance rates over the whole run.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct AcceptanceRates {
    /// Kernel 1 (prior proposal).
    pub k1: f64,
    /// Kernel 2 (componentwise random walk).
    pub k2: f64,
    /// Kernel 3 (block random walk).
    pub k3: f64,
}

/// Result of a SAEM run.
#[derive(Debug, Clone)]
pub struct SaemFit {
    /// The model specification that was fit.
    pub model: NlmeModel,
    /// The analysis dataset (after exclusion of subjects with missing values
    /// on used covariates).
    pub data: Dataset,
    /// The options used.
    pub options: SaemOptions,
    /// Fixed effects b = (μ_1..μ_d, β_1..β_m) on the working (φ) scale.
    pub b: DVector<f64>,
    /// Random-effect covariance Ω (d×d; zero rows/columns outside the
    /// pattern support).
    pub omega: DMatrix<f64>,
    /// Residual-error model with final parameters (Gaussian outcomes).
    pub error: Option<ErrorModel>,
    /// Per-iteration traces (row 0 = initial values).
    pub traces: Traces,
    /// Last simulated individual parameters per chain: `phi_chains[c][i]`.
    pub phi_chains: Vec<Vec<DVector<f64>>>,
    /// SA-averaged per-subject individual parameters (working scale).
    pub mean_phi: Vec<DVector<f64>>,
    /// Final adapted random-walk proposal scales (reused by conditional
    /// sampling).
    pub scales: Scales,
    /// Mean acceptance rates.
    pub accept: AcceptanceRates,
    /// Iterations run (K1 + K2).
    pub iterations: usize,
    /// Warnings accumulated during the run.
    pub warnings: Vec<String>,
}

impl SaemFit {
    /// Population parameters on the natural scale: ψ_pop = h(μ).
    pub fn psi_pop(&self) -> Vec<f64> {
        let d = self.model.d();
        (0..d)
            .map(|k| self.model.params[k].transform.psi(self.b[k]))
            .collect()
    }

    /// Working-scale population vector for subject i: X_i b (requires the
    /// subject's covariates).
    pub fn phi_pop_i(&self, i: usize) -> Result<DVector<f64>> {
        let x = self.model.design_matrix(
            &self.data.subjects[i].covariates,
            &self.data.schema.covariates,
        )?;
        Ok(x * &self.b)
    }

    /// Named natural-scale report: ψ_pop entries, covariate coefficients,
    /// estimated Ω entries, error parameters. Matches the trace columns.
    pub fn natural_params(&self) -> Vec<(String, f64)> {
        param_labels(&self.model)
            .into_iter()
            .zip(param_row(&self.model, &self.b, &self.omega, self.error.as_ref()))
            .collect()
    }
}

/// Trace column labels for a model.
pub fn param_labels(model: &NlmeModel) -> Vec<String> {
    let mut names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
    for rel in &model.covariates {
        names.push(format!("beta_{}({})", rel.covariate, model.params[rel.param].name));
    }
    for (k, p) in model.params.iter().enumerate() {
        if model.omega.diag[k] {
            names.push(format!("omega2({})", p.name));
        }
    }
    for &(i, j) in &model.omega.corr {
        names.push(format!("cov({},{})", model.params[i].name, model.params[j].name));
    }
    if let Some(err) = &model.error {
        for (n, _) in err.params() {
            names.push(format!("error_{n}"));
        }
    }
    names
}

/// Trace row: natural-scale ψ_pop, raw β, estimated Ω entries, error
/// parameters.
pub fn param_row(
    model: &NlmeModel,
    b: &DVector<f64>,
    omega: &DMatrix<f64>,
    error: Option<&ErrorModel>,
) -> Vec<f64> {
    let d = model.d();
    let mut row: Vec<f64> = (0..d).map(|k| model.params[k].transform.psi(b[k])).collect();
    for r in 0..model.covariates.len() {
        row.push(b[d + r]);
    }
    for k in 0..d {
        if model.omega.diag[k] {
            row.push(omega[(k, k)]);
        }
    }
    for &(i, j) in &model.omega.corr {
        row.push(omega[(i, j)]);
    }
    if let Some(err) = error {
        for (_, v) in err.params() {
            row.push(v);
        }
    }
    row
}

/// Build the initial Ω from options and the pattern.
fn initial_omega(model: &NlmeModel, opts: &SaemOptions) -> Result<DMatrix<f64>> {
    let d = model.d();
    let mut omega = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        if model.omega.diag[k] {
            omega[(k, k)] = 1.0;
        }
    }
    if let Some(init) = &opts.omega_init {
        if init.len() != d || init.iter().any(|r| r.len() != d) {
            return Err(Error::validation(format!(
                "omega_init must be a {d}×{d} matrix"
            )));
        }
        for i in 0..d {
            for j in 0..d {
                let v = init[i][j];
                if i == j && model.omega.diag[i] {
                    if v <= 0.0 {
                        return Err(Error::validation(
                            "omega_init diagonal entries on the pattern must be positive",
                        ));
                    }
                    omega[(i, i)] = v;
                } else if i != j && v != 0.0 {
                    if !model.omega.corr.contains(&(i.min(j), i.max(j))) {
                        return Err(Error::validation(format!(
                            "omega_init has a nonzero entry ({i},{j}) outside the covariance pattern"
                        )));
                    }
                    omega[(i, j)] = v;
                }
            }
        }
    }
    Ok(omega)
}

/// Run the SAEM algorithm.
///
/// Subjects with missing values on covariates the model uses are excluded
/// (recorded in the fit warnings). The run is deterministic in the master
/// seed, independent of thread count: every (iteration, chain, subject)
/// triple draws from its own counter-derived RNG stream, and all reductions
/// happen in fixed order.
pub fn run_saem(model: &NlmeModel, data: &Dataset, opts: &SaemOptions) -> Result<SaemFit> {
    opts.validate()?;
    let mut pm = PreparedModel::new(model, data)?;
    let n = pm.n_subjects();
    let d = pm.d();
    let q = pm.q();
    let l = opts.resolve_chains(n);
    let n_rows = pm.data.n_rows();
    let gaussian = pm.model.error.is_some();

    let mut warnings: Vec<String> = pm.data.load_warnings.clone();
    let mut b = pm.model.initial_fixed()?;
    if let Some(beta) = &opts.beta_init {
        let m = pm.model.covariates.len();
        if beta.len() != m {
            return Err(Error::validation(format!(
                "beta_init has {} entries for {} covariate relation(s)",
                beta.len(),
                m
            )));
        }
        for (r, &v) in beta.iter().enumerate() {
            b[d + r] = v;
        }
    }
    let mut omega = initial_omega(&pm.model, opts)?;
    let mut error = pm.model.error;

    // Initial state: φ_i = X_i b for every chain.
    let mut chains: Vec<Vec<DVector<f64>>> = (0..l)
        .map(|_| (0..n).map(|i| pm.phi_pop(i, &b)).collect())
        .collect();
    let mut lls: Vec<Vec<f64>> = chains
        .iter()
        .map(|chain| {
            chain
                .iter()
                .enumerate()
                .map(|(i, phi)| pm.data_loglik(i, phi))
                .collect()
        })
        .collect();

    let bad: Vec<&str> = lls[0]
        .iter()
        .zip(&pm.data.subjects)
        .filter(|(ll, _)| !ll.is_finite())
        .map(|(_, s)| s.id.as_str())
        .collect();
    if 2 * bad.len() > n {
        return Err(Error::computation(format!(
            "non-finite likelihood at the initial values for {}/{} subjects (first: {})",
            bad.len(),
            n,
            bad.iter().take(5).cloned().collect::<Vec<_>>().join(",")
        )));
    } else if !bad.is_empty() {
        warnings.push(format!(
            "non-finite likelihood at the initial values for {} subject(s)",
            bad.len()
        ));
    }

    let mut scales = Scales::new(q);
    let mut state = SaState::new(n, d, n_rows);
    for (i, m) in state.mean_phi.iter_mut().enumerate() {
        *m = pm.phi_pop(i, &b);
    }
    let mut ops = OmegaOps::new(&pm.omega_iiv(&omega));
    let mut total_counts = SweepCounts::new(q);

    let names = param_labels(&pm.model);
    let mut traces = Traces {
        names,
        gamma: vec![0.0],
        rows: vec![param_row(&pm.model, &b, &omega, error.as_ref())],
    };

    let total_iters = opts.k1 + opts.k2;
    let anneal_len = opts.anneal_len.unwrap_or(opts.k1.div_ceil(2));
    let row_off = pm.row_offsets();

    // One simulation sweep over all subjects and chains; returns pooled
    // acceptance counts (merged in subject order for determinism).
    let sweep_all = |pm: &PreparedModel,
                     global_iter: u64,
                     b: &DVector<f64>,
                     ops: &OmegaOps,
                     omega: &DMatrix<f64>,
                     scales: &Scales,
                     chains: &mut [Vec<DVector<f64>>],
                     lls: &mut [Vec<f64>]|
     -> SweepCounts {
        let diag: Vec<f64> = pm.iiv.iter().map(|&k| omega[(k, k)]).collect();
        let chains_ref: &[Vec<DVector<f64>>] = chains;
        let lls_ref: &[Vec<f64>] = lls;
        let updates: Vec<(Vec<(DVector<f64>, f64)>, SweepCounts)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut counts = SweepCounts::new(q);
                let mut per_chain = Vec::with_capacity(l);
                for c in 0..l {
                    let mut phi = chains_ref[c][i].clone();
                    let mut ll = lls_ref[c][i];
                    let mut rng =
                        stream(opts.seed, "saem-mcmc", &[global_iter, c as u64, i as u64]);
                    let cnt = mcmc::sweep_subject(
                        pm, i, b, ops, &diag, scales, opts.n_mcmc, &mut rng, &mut phi, &mut ll,
                    );
                    counts.merge(&cnt);
                    per_chain.push((phi, ll));
                }
                (per_chain, counts)
            })
            .collect();
        let mut pooled = SweepCounts::new(q);
        for (i, (per_chain, counts)) in updates.into_iter().enumerate() {
            for (c, (phi, ll)) in per_chain.into_iter().enumerate() {
                chains[c][i] = phi;
                lls[c][i] = ll;
            }
            pooled.merge(&counts);
        }
        pooled
    };

    // Burn-in: simulation-only sweeps (scales adapt, parameters frozen).
    for it in 0..opts.n_burn {
        let counts = sweep_all(&pm, it as u64, &b, &ops, &omega, &scales, &mut chains, &mut lls);
        scales.adapt(&counts, opts.target_accept);
    }

    for k in 1..=total_iters {
        let gamma = gamma_schedule(k, opts.k1);
        let exploring = k <= opts.k1;
        let counts = sweep_all(
            &pm,
            (opts.n_burn + k) as u64,
            &b,
            &ops,
            &omega,
            &scales,
            &mut chains,
            &mut lls,
        );
        if exploring {
            scales.adapt(&counts, opts.target_accept);
        }
        total_counts.merge(&counts);

        // Chain-averaged complete-data statistics (fixed order: chain 0..L).
        let inv_l = 1.0 / l as f64;
        let mut chain_mean: Vec<DVector<f64>> = vec![DVector::zeros(d); n];
        let mut outer = DMatrix::<f64>::zeros(d, d);
        for chain in &chains {
            for (i, phi) in chain.iter().enumerate() {
                chain_mean[i] += phi * inv_l;
            }
        }
        for chain in &chains {
            for phi in chain.iter() {
                outer += phi * phi.transpose() * inv_l;
            }
        }
        let row_stats: Option<Vec<(f64, f64)>> = if gaussian {
            let mut rows = vec![(0.0, 0.0); n_rows];
            for chain in &chains {
                for (i, phi) in chain.iter().enumerate() {
                    let res = pm.gaussian_residuals(i, phi)?;
                    for (j, (e, f)) in res.into_iter().enumerate() {
                        let slot = &mut rows[row_off[i] + j];
                        slot.0 += e * e * inv_l;
                        slot.1 += f * f * inv_l;
                    }
                }
            }
            Some(rows)
        } else {
            None
        };
        state.update(gamma, &chain_mean, &outer, row_stats.as_deref());

        // No-IIV fixed effects: partial maximization blended with γ_k, then
        // refresh the deterministic coordinates and cached likelihoods.
        if !pm.cols_no_iiv.is_empty() {
            let v = profile_no_iiv(&pm, &b, &chains);
            for (j, &c) in pm.cols_no_iiv.iter().enumerate() {
                b[c] += gamma * (v[j] - b[c]);
            }
            for c in 0..l {
                for i in 0..n {
                    pm.clamp_no_iiv(i, &b, &mut chains[c][i]);
                }
            }
            let fresh: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| (0..l).map(|c| pm.data_loglik(i, &chains[c][i])).collect())
                .collect();
            for (i, per_chain) in fresh.into_iter().enumerate() {
                for (c, ll) in per_chain.into_iter().enumerate() {
                    lls[c][i] = ll;
                }
            }
        }

        // GLS for the IIV-attached fixed effects, with the previous Ω.
        gls_fixed_effects(&pm, &state, &ops.precision, &mut b)?;

        // Ω and error updates, then the annealing floor.
        let omega_prev = omega.clone();
        let error_prev = error;
        omega = omega_update(&pm, &state, &b, &mut warnings);
        if let Some(err) = &error {
            error = Some(error_update(err, &state.r2, &state.f2)?);
        }
        if exploring && k <= anneal_len {
            anneal_floor(&pm, opts.tau, &omega_prev, &mut omega, error_prev.as_ref(), &mut error);
        }
        ops = OmegaOps::new(&pm.omega_iiv(&omega));

        // The next simulation step must condition on the error parameters
        // just estimated, so push them into the prepared model and refresh
        // the cached data log-likelihoods (they were evaluated under the
        // previous error parameters).
        if gaussian && pm.model.error != error {
            pm.model.error = error;
            let fresh: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| (0..l).map(|c| pm.data_loglik(i, &chains[c][i])).collect())
                .collect();
            for (i, per_chain) in fresh.into_iter().enumerate() {
                for (c, ll) in per_chain.into_iter().enumerate() {
                    lls[c][i] = ll;
                }
            }
        }

        traces.gamma.push(gamma);
        traces.rows.push(param_row(&pm.model, &b, &omega, error.as_ref()));
    }

    let (r1, r2, r3) = total_counts.rates();
    let model_out = pm.model.clone();
    let data_out = pm.data.clone();
    Ok(SaemFit {
        model: model_out,
        data: data_out,
        options: opts.clone(),
        b,
        omega,
        error,
        traces,
        phi_chains: chains,
        mean_phi: state.mean_phi,
        scales,
        accept: AcceptanceRates { k1: r1, k2: r2, k3: r3 },
        iterations: total_iters,
        warnings,
    })
}
