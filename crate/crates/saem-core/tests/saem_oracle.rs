//! SAEM against the closed-form MLE of a balanced linear mixed model.
//!
//! For y_i = Z(β + η_i) + ε_i with a shared design Z across subjects, the
//! maximum-likelihood estimates have closed form: projecting each subject
//! onto col(Z) gives OLS coefficients b_i ~ N(β, Ω + a²(ZᵀZ)⁻¹) independent
//! of the residual projection, whose N(n−d) coordinates are i.i.d. N(0, a²).
//! Hence β̂ = mean(b_i), â² = Σ‖(I−P)y_i‖² / (N(n−d)), and
//! Ω̂ = cov(b_i) − â²(ZᵀZ)⁻¹ (ML covariance, divisor N), valid whenever Ω̂
//! stays positive definite. The test first verifies this solution against
//! the exact marginal likelihood, then requires SAEM to land within 1%.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use saem_core::builtins::builtin;
use saem_core::data::{Dataset, OutcomeKind, Schema, SubjectData};
use saem_core::model::{ErrorModel, NlmeModel, OmegaPattern, ParameterSpec, Transform};
use saem_core::saem::{run_saem, SaemOptions};

const TIMES: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
const N: usize = 60;

fn design() -> DMatrix<f64> {
    let mut z = DMatrix::zeros(4, 2);
    for (r, &t) in TIMES.iter().enumerate() {
        z[(r, 0)] = 1.0;
        z[(r, 1)] = t;
    }
    z
}

fn simulate(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = DVector::from_vec(vec![1.5, 0.8]);
    let omega = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.3]);
    let chol = omega.cholesky().unwrap();
    let a = 0.4;
    let z = design();
    let schema = Schema {
        group: "id".into(),
        predictors: vec!["time".into()],
        response: "y".into(),
        censoring: None,
        covariates: vec![],
    };
    let subjects = (0..N)
        .map(|i| {
            let eta = chol.l()
                * DVector::from_iterator(2, (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let mean = &z * (&beta + eta);
            let response = (0..4)
                .map(|r| mean[r] + a * rng.sample::<f64, _>(StandardNormal))
                .collect();
            SubjectData {
                id: format!("s{i}"),
                preds: vec![TIMES.to_vec()],
                response,
                cens: None,
                covariates: vec![],
            }
        })
        .collect();
    Dataset { subjects, schema, outcome: OutcomeKind::Gaussian, load_warnings: vec![] }
}

/// Closed-form ML estimates (β̂, Ω̂, â).
fn closed_form_mle(ds: &Dataset) -> (DVector<f64>, DMatrix<f64>, f64) {
    let z = design();
    let ztz = z.transpose() * &z;
    let ztz_inv = ztz.clone().try_inverse().unwrap();
    let proj = &z * &ztz_inv * z.transpose();
    let n = ds.n_subjects() as f64;
    let mut bs = Vec::with_capacity(ds.n_subjects());
    let mut rss = 0.0;
    for s in &ds.subjects {
        let y = DVector::from_vec(s.response.clone());
        let b_i = &ztz_inv * z.transpose() * &y;
        let resid = &y - &proj * &y;
        rss += resid.dot(&resid);
        bs.push(b_i);
    }
    let a2 = rss / (n * (4.0 - 2.0));
    let beta = bs.iter().sum::<DVector<f64>>() / n;
    let mut s_mat = DMatrix::zeros(2, 2);
    for b_i in &bs {
        let dev = b_i - &beta;
        s_mat += &dev * dev.transpose();
    }
    s_mat /= n;
    let omega = s_mat - ztz_inv * a2;
    (beta, omega, a2.sqrt())
}

/// Exact marginal log-likelihood of the balanced model.
fn marginal_ll(ds: &Dataset, beta: &DVector<f64>, omega: &DMatrix<f64>, a: f64) -> f64 {
    let z = design();
    let v = &z * omega * z.transpose() + DMatrix::identity(4, 4) * a * a;
    let chol = v.cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let mu = &z * beta;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    ds.subjects
        .iter()
        .map(|s| {
            let dev = DVector::from_vec(s.response.clone()) - &mu;
            let sol = chol.solve(&dev);
            -0.5 * (4.0 * ln_2pi + logdet + dev.dot(&sol))
        })
        .sum()
}

fn rel_err(x: f64, target: f64) -> f64 {
    (x - target).abs() / target.abs()
}

#[test]
fn saem_matches_closed_form_linear_mixed_mle_within_one_percent() {
    let ds = simulate(99);
    let (beta_hat, omega_hat, a_hat) = closed_form_mle(&ds);
    assert!(omega_hat.clone().cholesky().is_some(), "oracle Ω̂ must be positive definite");

    // Verify the oracle really is the maximizer of the exact marginal
    // likelihood before using it as a reference.
    let ll_star = marginal_ll(&ds, &beta_hat, &omega_hat, a_hat);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let db = DVector::from_iterator(2, (0..2).map(|_| 0.02 * rng.sample::<f64, _>(StandardNormal)));
        let mut domega = DMatrix::zeros(2, 2);
        let e: f64 = 0.02 * rng.sample::<f64, _>(StandardNormal);
        let f: f64 = 0.02 * rng.sample::<f64, _>(StandardNormal);
        let g: f64 = 0.02 * rng.sample::<f64, _>(StandardNormal);
        domega[(0, 0)] = e;
        domega[(1, 1)] = f;
        domega[(0, 1)] = g;
        domega[(1, 0)] = g;
        let da: f64 = 0.02 * rng.sample::<f64, _>(StandardNormal);
        let ll = marginal_ll(&ds, &(&beta_hat + db), &(&omega_hat + domega), a_hat + da);
        assert!(
            ll <= ll_star + 1e-9,
            "perturbed LL {ll} exceeds the claimed maximum {ll_star}"
        );
    }

    let entry = builtin("gaussian-linear").unwrap();
    let model = NlmeModel {
        model: entry.model,
        params: vec![
            ParameterSpec { name: "b0".into(), transform: Transform::Identity, init: 0.5, iiv: true },
            ParameterSpec { name: "b1".into(), transform: Transform::Identity, init: 0.2, iiv: true },
        ],
        covariates: vec![],
        omega: OmegaPattern { diag: vec![true, true], corr: vec![(0, 1)] },
        error: Some(ErrorModel::Constant { a: 1.0 }),
    };
    let opts =
        SaemOptions { k1: 300, k2: 800, n_chains: 6, seed: 11, ..Default::default() };
    let fit = run_saem(&model, &ds, &opts).unwrap();

    assert!(rel_err(fit.b[0], beta_hat[0]) < 0.01, "b0 {} vs {}", fit.b[0], beta_hat[0]);
    assert!(rel_err(fit.b[1], beta_hat[1]) < 0.01, "b1 {} vs {}", fit.b[1], beta_hat[1]);
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        assert!(
            rel_err(fit.omega[(i, j)], omega_hat[(i, j)]) < 0.01,
            "omega[{i}{j}] {} vs {}",
            fit.omega[(i, j)],
            omega_hat[(i, j)]
        );
    }
    let a_fit = match fit.error.unwrap() {
        ErrorModel::Constant { a } => a,
        _ => unreachable!(),
    };
    assert!(rel_err(a_fit, a_hat) < 0.01, "a {a_fit} vs {a_hat}");
}
