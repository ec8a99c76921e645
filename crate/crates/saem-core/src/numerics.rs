//! Small numerical building blocks: stable log-domain helpers, quantiles,
//! Gauss–Hermite rules, root finding, and a compact Nelder–Mead simplex.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Floor applied to log-probabilities so that extreme MCMC proposals keep
/// finite acceptance ratios instead of propagating −∞.
pub const LOG_PROB_FLOOR: f64 = -745.0;

/// Numerically stable log(1 + e^x).
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 33.0 {
        x
    } else if x > -37.0 {
        x.exp().ln_1p()
    } else {
        x.exp()
    }
}

/// Stable logistic function 1/(1+e^{−x}).
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log σ(x) = −log(1+e^{−x}), computed stably.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    -log1pexp(-x)
}

/// Stable log(Σ e^{x_i}) over a slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Stable log(e^a + e^b).
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + log1pexp(lo - hi)
}

/// Linear-interpolation quantile (R type 7). `p` in [0,1].
///
/// Sorts a copy of the input; NaNs are rejected.
pub fn quantile(xs: &[f64], p: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::computation("quantile of empty slice"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::computation("quantile input contains NaN"));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 1 {
        return Ok(v[0]);
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation (n−1 denominator).
pub fn sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Gauss–Hermite nodes and weights (physicists' convention):
/// ∫ e^{−x²} f(x) dx ≈ Σ w_i f(x_i), with Σ w_i = √π.
///
/// Computed by the Golub–Welsch eigendecomposition of the Jacobi matrix,
/// which is stable for the node counts used here (≤ ~60).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::validation("gauss_hermite requires n ≥ 1"));
    }
    if n == 1 {
        return Ok((vec![0.0], vec![std::f64::consts::PI.sqrt()]));
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let v0 = eig.eigenvectors[(0, j)];
            (node, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(pairs.into_iter().unzip())
}

/// Bisection root finding for a continuous monotone-bracketed function:
/// returns `t` with `f(t) ≈ target` given `f(lo) ≤ target ≤ f(hi)`
/// (or the reverse ordering). Tolerance is on the bracket width.
pub fn bisect(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    tol: f64,
    max_iter: usize,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    let flo = f(lo) - target;
    let fhi = f(hi) - target;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::computation(format!(
            "bisection bracket does not straddle target: f({lo})−t={flo}, f({hi})−t={fhi}"
        )));
    }
    let rising = fhi > 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid) - target;
        if fm == 0.0 || (hi - lo) < tol {
            return Ok(mid);
        }
        if (fm > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-sample Kolmogorov–Smirnov distance of `sample` against the CDF `f`.
pub fn ks_distance(sample: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = f(x);
        d = d.max(((i + 1) as f64 / n - c).abs());
        d = d.max((i as f64 / n - c).abs());
    }
    d
}

/// Minimize `f` with the Nelder–Mead simplex, starting at `x0` with the given
/// per-coordinate initial step. Returns (argmin, min). Intended for the small
/// (≤ ~8-dimensional) inner problems in this crate; deterministic.
pub fn nelder_mead(
    x0: &[f64],
    step: &[f64],
    max_iter: usize,
    ftol: f64,
    f: impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for j in 0..d {
        let mut v = x0.to_vec();
        v[j] += if step[j] != 0.0 { step[j] } else { 0.1 };
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iter {
        // Order vertices by objective value.
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_f: Vec<f64> = idx.iter().map(|&i| fv[i]).collect();
        simplex = ordered;
        fv = ordered_f;

        if (fv[d] - fv[0]).abs() <= ftol * (1.0 + fv[0].abs()) {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut cen = vec![0.0; d];
        for v in simplex.iter().take(d) {
            for j in 0..d {
                cen[j] += v[j] / d as f64;
            }
        }

        let refl: Vec<f64> = (0..d)
            .map(|j| cen[j] + alpha * (cen[j] - simplex[d][j]))
            .collect();
        let frefl = f(&refl);

        if frefl < fv[0] {
            // Try expanding further along the reflection direction.
            let exp: Vec<f64> = (0..d)
                .map(|j| cen[j] + gamma * (refl[j] - cen[j]))
                .collect();
            let fexp = f(&exp);
            if fexp < frefl {
                simplex[d] = exp;
                fv[d] = fexp;
            } else {
                simplex[d] = refl;
                fv[d] = frefl;
            }
        } else if frefl < fv[d - 1] {
            simplex[d] = refl;
            fv[d] = frefl;
        } else {
            // Contract toward the better of (worst, reflection).
            let (base, fbase) = if frefl < fv[d] {
                (refl.clone(), frefl)
            } else {
                (simplex[d].clone(), fv[d])
            };
            let con: Vec<f64> = (0..d).map(|j| cen[j] + rho * (base[j] - cen[j])).collect();
            let fcon = f(&con);
            if fcon < fbase {
                simplex[d] = con;
                fv[d] = fcon;
            } else {
                // Shrink the whole simplex toward the best vertex.
                for i in 1..=d {
                    for j in 0..d {
                        simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                    }
                    fv[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if fv[i] < fv[best] {
            best = i;
        }
    }
    (simplex[best].clone(), fv[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log1pexp_matches_naive_in_safe_range() {
        for &x in &[-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            assert_relative_eq!(log1pexp(x), (1.0f64 + x.exp()).ln(), max_relative = 1e-12);
        }
        // Extremes stay finite and monotone.
        assert_eq!(log1pexp(1000.0), 1000.0);
        assert!(log1pexp(-1000.0) >= 0.0);
    }

    #[test]
    fn logistic_symmetry_and_bounds() {
        for &x in &[-700.0, -5.0, 0.0, 5.0, 700.0] {
            let p = logistic(x);
            assert!((0.0..=1.0).contains(&p));
            assert_relative_eq!(p + logistic(-x), 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(logistic(0.0), 0.5);
    }

    #[test]
    fn logsumexp_matches_naive() {
        let xs = [0.3f64, -1.2, 2.0, 0.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(logsumexp(&xs), naive, max_relative = 1e-12);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn quantile_is_r_type7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        // R: quantile(1:4, 0.25) = 1.75
        assert_relative_eq!(quantile(&xs, 0.25).unwrap(), 1.75);
        assert_relative_eq!(quantile(&xs, 0.0).unwrap(), 1.0);
        assert_relative_eq!(quantile(&xs, 1.0).unwrap(), 4.0);
        assert_relative_eq!(quantile(&xs, 0.5).unwrap(), 2.5);
    }

    #[test]
    fn gauss_hermite_low_orders_match_tables() {
        // n=2: nodes ±1/√2, weights √π/2.
        let (x, w) = gauss_hermite(2).unwrap();
        assert_relative_eq!(x[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(w[0], std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-12);
        // n=5 largest node from Abramowitz & Stegun 25.4.46: 2.0201828704561
        let (x5, w5) = gauss_hermite(5).unwrap();
        assert_relative_eq!(x5[4], 2.02018287045609, epsilon = 1e-10);
        assert_relative_eq!(w5.iter().sum::<f64>(), std::f64::consts::PI.sqrt(), epsilon = 1e-10);
        // Exactly integrates x^4 e^{−x²}: 3√π/4.
        let i4: f64 = x5.iter().zip(&w5).map(|(x, w)| w * x.powi(4)).sum();
        assert_relative_eq!(i4, 0.75 * std::f64::consts::PI.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn bisect_finds_root() {
        let t = bisect(0.0, 10.0, 2.0, 1e-12, 200, |x| x * x).unwrap();
        assert_relative_eq!(t, 2.0f64.sqrt(), epsilon = 1e-9);
        // Decreasing function.
        let t2 = bisect(0.0, 10.0, 0.5, 1e-12, 200, |x| (-x).exp()).unwrap();
        assert_relative_eq!(t2, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn ks_distance_of_exact_uniform_grid_is_half_spacing() {
        // Points at (i−0.5)/n have KS distance 1/(2n) against U(0,1).
        let n = 100;
        let sample: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&sample, |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.5 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock() {
        let (x, fx) = nelder_mead(&[-1.2, 1.0], &[0.5, 0.5], 2000, 1e-12, |v| {
            (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2)
        });
        assert!(fx < 1e-6, "fx={fx}");
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-3);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-3);
    }
}
