//! Confounder importance via twin regressions.
//!
//! Two models are fitted on the same covariates: an ordinary-least-squares
//! outcome model (coefficients β̂) and a logistic treatment model
//! (coefficients α̂). Each coefficient vector is normalized by its own
//! maximum absolute entry, and the per-covariate importance is
//! θ*_j = (|β̂_j| + |α̂_j|)/2 on the normalized scale. Covariates are then
//! ranked by θ* descending; the matcher drops them from the bottom of that
//! ranking.
//!
//! Discrete covariates enter both regressions as their integer category
//! codes (binary 0/1 in the bundled scenarios); multi-level categories are
//! not one-hot expanded because downstream matching drops whole columns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{CovariateKind, Dataset};
use crate::error::{Error, Result};

/// Tuning knobs for the iteratively-reweighted-least-squares logistic fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Ridge penalty on non-intercept coefficients, for numerical stability.
    pub ridge_lambda: f64,
    /// Convergence threshold on max |Δcoefficient| per Newton step.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { ridge_lambda: 1e-6, tol: 1e-8, max_iter: 100 }
    }
}

/// Coefficients from one regression fit, intercept kept separate.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub intercept: f64,
    /// One coefficient per covariate column, dataset order.
    pub coefficients: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Per-covariate confounder importance θ* with the coefficient vectors that
/// produced it.
#[derive(Debug, Clone, Serialize)]
pub struct ImportanceVector {
    pub theta_star: Vec<f64>,
    /// Outcome-model (OLS) coefficients, unnormalized.
    pub beta_hat: Vec<f64>,
    /// Treatment-model (logistic) coefficients, unnormalized.
    pub alpha_hat: Vec<f64>,
    /// Permutation of 0..k sorting θ* descending, ties broken by ascending
    /// column index.
    pub order: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Builds the design matrix: intercept column of ones, then one column per
/// covariate (discrete codes cast to reals).
fn design_matrix(ds: &Dataset) -> DMatrix<f64> {
    let n = ds.n();
    let k = ds.k();
    let mut x = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for j in 0..k {
        match ds.kind(j) {
            CovariateKind::Continuous => {
                let col = ds.continuous(j);
                for i in 0..n {
                    x[(i, j + 1)] = col[i];
                }
            }
            CovariateKind::Discrete => {
                let col = ds.discrete(j);
                for i in 0..n {
                    x[(i, j + 1)] = f64::from(col[i]);
                }
            }
        }
    }
    x
}

/// Minimum-norm least-squares solve of `x·b ≈ y` via QR then SVD of the
/// small triangular factor. Returns the solution and the indices of design
/// columns participating in any detected linear dependency.
fn min_norm_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, Vec<usize>)> {
    let p = x.ncols();
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    let r = qr.r();
    let svd = r.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    // LAPACK-style rank tolerance.
    let tol = sigma_max * (x.nrows().max(p) as f64) * f64::EPSILON;
    let solution = svd
        .solve(&qty, tol)
        .map_err(|e| Error::Internal(format!("least-squares solve failed: {e}")))?;

    // Columns loading on near-null singular directions are linearly
    // dependent on the others; report them for the collinearity warning.
    let mut dependent = Vec::new();
    if let Some(v_t) = &svd.v_t {
        for (i, &sigma) in svd.singular_values.iter().enumerate() {
            if sigma <= tol {
                let row = v_t.row(i);
                let peak = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                for j in 0..p {
                    if row[j].abs() > 0.5 * peak && !dependent.contains(&j) {
                        dependent.push(j);
                    }
                }
            }
        }
    }
    dependent.sort_unstable();
    Ok((solution.column(0).into_owned(), dependent))
}

fn collinearity_warning(ds: &Dataset, dependent_design_cols: &[usize]) -> Option<String> {
    if dependent_design_cols.is_empty() {
        return None;
    }
    let names: Vec<&str> = dependent_design_cols
        .iter()
        .map(|&j| if j == 0 { "(intercept)" } else { ds.name(j - 1) })
        .collect();
    Some(format!(
        "design matrix is rank-deficient; used minimum-norm solution (dependent columns: {})",
        names.join(", ")
    ))
}

/// Fits the outcome model Y ~ intercept + X by ordinary least squares.
/// Rank-deficient designs are solved in the minimum-norm sense with a
/// collinearity warning naming the dependent columns.
pub fn fit_outcome_model(ds: &Dataset) -> Result<FitResult> {
    if ds.n() <= ds.k() + 1 {
        return Err(Error::Degenerate(format!(
            "outcome model needs n > k+1 (n={}, k={})",
            ds.n(),
            ds.k()
        )));
    }
    let x = design_matrix(ds);
    let y = DVector::from_column_slice(ds.outcome());
    let (beta, dependent) = min_norm_least_squares(&x, &y)?;
    let mut warnings = Vec::new();
    if let Some(w) = collinearity_warning(ds, &dependent) {
        log::warn!("outcome model: {w}");
        warnings.push(w);
    }
    Ok(FitResult {
        intercept: beta[0],
        coefficients: beta.as_slice()[1..].to_vec(),
        warnings,
    })
}

/// Numerically stable log(1 + e^η).
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Linear predictor clamp: beyond ±30 the logistic mean is within 1e-13 of
/// its asymptote and the IRLS weights underflow to zero.
const ETA_CLAMP: f64 = 30.0;

/// Non-intercept coefficients beyond this magnitude indicate (quasi-)perfect
/// separation once the ridge penalty is the only thing keeping them finite.
const SEPARATION_COEF_BOUND: f64 = 15.0;

/// Stop once the penalized-likelihood gradient is this small in max-norm.
const GRADIENT_TOL: f64 = 1e-9;

/// Penalized negative log-likelihood of the logistic model.
fn penalized_nll(x: &DMatrix<f64>, t: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> f64 {
    let eta = x * w;
    let mut nll = 0.0;
    for i in 0..t.len() {
        let e = eta[i].clamp(-ETA_CLAMP, ETA_CLAMP);
        nll += softplus(e) - t[i] * e;
    }
    let ridge: f64 = w.as_slice()[1..].iter().map(|c| c * c).sum();
    nll + 0.5 * lambda * ridge
}

/// Fits the treatment model T ~ intercept + X by ridge-penalized logistic
/// regression via iteratively reweighted least squares (Newton steps with
/// step-halving). Perfect separation is detected by runaway coefficients;
/// the penalized solution is returned with a warning in that case.
pub fn fit_treatment_model(ds: &Dataset, cfg: &LogisticConfig) -> Result<FitResult> {
    if ds.n() <= ds.k() + 1 {
        return Err(Error::Degenerate(format!(
            "treatment model needs n > k+1 (n={}, k={})",
            ds.n(),
            ds.k()
        )));
    }
    let x = design_matrix(ds);
    let t = DVector::from_iterator(ds.n(), ds.treatment().iter().map(|&b| f64::from(u8::from(b))));
    let p = ds.k() + 1;
    let lambda = cfg.ridge_lambda;

    let mut w = DVector::zeros(p);
    let mut nll = penalized_nll(&x, &t, &w, lambda);
    let mut converged = false;
    let mut warnings = Vec::new();

    for _ in 0..cfg.max_iter {
        let eta = &x * &w;
        let mut grad = DVector::zeros(p);
        let mut hessian = DMatrix::zeros(p, p);
        for i in 0..ds.n() {
            let e = eta[i].clamp(-ETA_CLAMP, ETA_CLAMP);
            let mu = expit(e);
            let resid = mu - t[i];
            let weight = mu * (1.0 - mu);
            let row = x.row(i);
            for a in 0..p {
                grad[a] += row[a] * resid;
                for b in a..p {
                    hessian[(a, b)] += weight * row[a] * row[b];
                }
            }
        }
        for a in 1..p {
            grad[a] += lambda * w[a];
            hessian[(a, a)] += lambda;
        }
        for a in 0..p {
            for b in 0..a {
                hessian[(a, b)] = hessian[(b, a)];
            }
        }

        if grad.amax() < GRADIENT_TOL {
            converged = true;
            break;
        }

        let step = hessian
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&grad))
            .unwrap_or_else(|| {
                // Weights can underflow on extreme fits; fall back to a
                // pseudo-inverse solve.
                let svd = hessian.svd(true, true);
                svd.solve(&grad, 1e-14).expect("SVD solve of symmetric matrix")
            });

        // Newton direction is -step; halve until the objective improves.
        // The acceptance slack covers floating-point noise in the objective:
        // near the optimum a full step improves it by less than summation
        // rounding, and rejecting that step would stall short of the
        // gradient tolerance above.
        let mut scale = 1.0;
        let mut candidate;
        let mut candidate_nll;
        loop {
            candidate = &w - step.scale(scale);
            candidate_nll = penalized_nll(&x, &t, &candidate, lambda);
            if candidate_nll <= nll + 1e-12 * (1.0 + nll.abs()) || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let delta = step.scale(scale).amax();
        w = candidate;
        nll = candidate_nll;
        // The step is applied before this check, so at convergence the
        // returned iterate sits one full Newton step past a point that
        // already moved < tol: its gradient is quadratically small.
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    if !converged {
        let msg = format!(
            "treatment model did not converge within {} IRLS iterations",
            cfg.max_iter
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let max_coef = w.as_slice()[1..].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if max_coef > SEPARATION_COEF_BOUND {
        let msg = format!(
            "possible perfect separation in treatment model (max |coefficient| = {max_coef:.2}); \
             returning ridge-penalized solution"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(FitResult {
        intercept: w[0],
        coefficients: w.as_slice()[1..].to_vec(),
        warnings,
    })
}

/// Combines the two coefficient vectors into the importance vector θ*.
///
/// Each vector is normalized by its own maximum absolute entry so both
/// models land on a common [0,1] scale, then θ*_j is the mean of the two
/// normalized magnitudes. An all-zero vector skips normalization (avoiding
/// 0/0) and contributes nothing.
pub fn compute_theta_star(beta_hat: &[f64], alpha_hat: &[f64]) -> Result<ImportanceVector> {
    if beta_hat.len() != alpha_hat.len() {
        return Err(Error::Internal(format!(
            "coefficient vectors disagree on k: {} vs {}",
            beta_hat.len(),
            alpha_hat.len()
        )));
    }
    if beta_hat.is_empty() {
        return Err(Error::Validation("importance needs at least one covariate".into()));
    }
    let normalized = |v: &[f64]| -> Vec<f64> {
        let max_abs = v.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if max_abs == 0.0 {
            vec![0.0; v.len()]
        } else {
            v.iter().map(|c| c.abs() / max_abs).collect()
        }
    };
    let beta_norm = normalized(beta_hat);
    let alpha_norm = normalized(alpha_hat);
    let theta_star: Vec<f64> =
        beta_norm.iter().zip(&alpha_norm).map(|(b, a)| (b + a) / 2.0).collect();

    let mut order: Vec<usize> = (0..theta_star.len()).collect();
    order.sort_by(|&a, &b| {
        theta_star[b].partial_cmp(&theta_star[a]).expect("theta* is finite").then(a.cmp(&b))
    });

    Ok(ImportanceVector {
        theta_star,
        beta_hat: beta_hat.to_vec(),
        alpha_hat: alpha_hat.to_vec(),
        order,
        warnings: Vec::new(),
    })
}

/// Runs both regressions and combines them into the importance vector.
pub fn compute_importance(ds: &Dataset, cfg: &LogisticConfig) -> Result<ImportanceVector> {
    let outcome = fit_outcome_model(ds)?;
    let treatment = fit_treatment_model(ds, cfg)?;
    let mut iv = compute_theta_star(&outcome.coefficients, &treatment.coefficients)?;
    iv.warnings.extend(outcome.warnings);
    iv.warnings.extend(treatment.warnings);
    Ok(iv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnData, ColumnSpec, CovariateKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn continuous_ds(cols: Vec<(&str, Vec<f64>)>, treatment: Vec<bool>, outcome: Vec<f64>) -> Dataset {
        let specs = cols
            .iter()
            .map(|(name, _)| ColumnSpec { name: (*name).into(), kind: CovariateKind::Continuous })
            .collect();
        let data = cols.into_iter().map(|(_, v)| ColumnData::Continuous(v)).collect();
        Dataset::new(specs, data, treatment, outcome).unwrap()
    }

    #[test]
    fn ols_recovers_exact_linear_relation() {
        // Y = 2·x1 exactly; x2 is an all-zero column, so the design is
        // rank-deficient and a collinearity warning must fire.
        let x1: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 - 4.0).collect();
        let y: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
        let treatment: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let ds = continuous_ds(vec![("x1", x1), ("x2", vec![0.0; 20])], treatment, y);
        let fit = fit_outcome_model(&ds).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-8, "beta1 = {}", fit.coefficients[0]);
        assert!(fit.coefficients[1].abs() < 1e-8, "beta2 = {}", fit.coefficients[1]);
        assert!(!fit.warnings.is_empty(), "expected collinearity warning");
        assert!(fit.warnings[0].contains("x2"), "warning was: {}", fit.warnings[0]);
    }

    #[test]
    fn ols_null_coefficients_stay_small() {
        // Y independent of X, n=10000: every |β̂_j| should be well under 0.1.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 10_000;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let treatment: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let ds = continuous_ds(vec![("x1", x1), ("x2", x2)], treatment, y);
        let fit = fit_outcome_model(&ds).unwrap();
        for (j, b) in fit.coefficients.iter().enumerate() {
            assert!(b.abs() < 0.1, "beta{j} = {b}");
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 500;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| 1.5 * a - 0.7 * b + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let treatment: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let ds = continuous_ds(vec![("x1", x1.clone()), ("x2", x2.clone())], treatment, y.clone());
        let fit = fit_outcome_model(&ds).unwrap();
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - fit.intercept - fit.coefficients[0] * x1[i] - fit.coefficients[1] * x2[i])
            .collect();
        // Normal equations: X^T r = 0 for each design column.
        let dot0: f64 = resid.iter().sum();
        let dot1: f64 = resid.iter().zip(&x1).map(|(r, v)| r * v).sum();
        let dot2: f64 = resid.iter().zip(&x2).map(|(r, v)| r * v).sum();
        assert!(dot0.abs() < 1e-6, "intercept column: {dot0}");
        assert!(dot1.abs() < 1e-6, "x1: {dot1}");
        assert!(dot2.abs() < 1e-6, "x2: {dot2}");
    }

    #[test]
    fn logistic_null_coefficients_stay_small() {
        // T is a fair coin independent of X, n=10000.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 10_000;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let treatment: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let ds = continuous_ds(vec![("x1", x1), ("x2", x2)], treatment, vec![0.0; n]);
        let fit = fit_treatment_model(&ds, &LogisticConfig::default()).unwrap();
        for (j, a) in fit.coefficients.iter().enumerate() {
            assert!(a.abs() < 0.1, "alpha{j} = {a}");
        }
        assert!(fit.warnings.is_empty(), "unexpected warnings: {:?}", fit.warnings);
    }

    #[test]
    fn logistic_recovers_known_coefficients() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 20_000;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let treatment: Vec<bool> = x1
            .iter()
            .map(|&v| {
                let p = expit(0.8 * v - 0.3);
                rng.random_bool(p)
            })
            .collect();
        let ds = continuous_ds(vec![("x1", x1)], treatment, vec![0.0; n]);
        let fit = fit_treatment_model(&ds, &LogisticConfig::default()).unwrap();
        assert!((fit.coefficients[0] - 0.8).abs() < 0.08, "alpha1 = {}", fit.coefficients[0]);
        assert!((fit.intercept + 0.3).abs() < 0.08, "intercept = {}", fit.intercept);
    }

    #[test]
    fn logistic_gradient_small_at_solution() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let n = 5_000;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let treatment: Vec<bool> = x1.iter().map(|&v| rng.random_bool(expit(1.2 * v))).collect();
        let ds = continuous_ds(vec![("x1", x1.clone())], treatment.clone(), vec![0.0; n]);
        let cfg = LogisticConfig::default();
        let fit = fit_treatment_model(&ds, &cfg).unwrap();
        // Gradient of the penalized negative log-likelihood at the solution.
        let mut g_intercept = 0.0;
        let mut g_x1 = 0.0;
        for i in 0..n {
            let mu = expit(fit.intercept + fit.coefficients[0] * x1[i]);
            let resid = mu - f64::from(u8::from(treatment[i]));
            g_intercept += resid;
            g_x1 += resid * x1[i];
        }
        g_x1 += cfg.ridge_lambda * fit.coefficients[0];
        assert!(g_intercept.abs() < 1e-6, "intercept gradient: {g_intercept}");
        assert!(g_x1.abs() < 1e-6, "x1 gradient: {g_x1}");
    }

    #[test]
    fn logistic_flags_perfect_separation() {
        // T = 1 exactly when x > 0: canonically separable.
        let x1: Vec<f64> = (0..40).map(|i| i as f64 - 19.5).collect();
        let treatment: Vec<bool> = x1.iter().map(|&v| v > 0.0).collect();
        let ds = continuous_ds(vec![("x1", x1)], treatment, vec![0.0; 40]);
        let fit = fit_treatment_model(&ds, &LogisticConfig::default()).unwrap();
        assert!(
            fit.warnings.iter().any(|w| w.contains("separation")),
            "warnings were: {:?}",
            fit.warnings
        );
        assert!(fit.coefficients[0].is_finite());
    }

    #[test]
    fn theta_star_symmetric_example() {
        let iv = compute_theta_star(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(iv.theta_star, vec![0.5, 0.5]);
        // Equal θ*: tie broken by ascending column index.
        assert_eq!(iv.order, vec![0, 1]);
    }

    #[test]
    fn theta_star_scale_invariant_example() {
        let iv = compute_theta_star(&[2.0, 1.0], &[2.0, 1.0]).unwrap();
        assert_eq!(iv.theta_star, vec![1.0, 0.5]);
        assert_eq!(iv.order, vec![0, 1]);
        // Rescaling both vectors leaves θ* unchanged.
        let scaled = compute_theta_star(&[20.0, 10.0], &[0.2, 0.1]).unwrap();
        assert_eq!(scaled.theta_star, iv.theta_star);
    }

    #[test]
    fn theta_star_all_zero_vector_contributes_nothing() {
        let iv = compute_theta_star(&[0.0, 0.0], &[3.0, -6.0]).unwrap();
        assert_eq!(iv.theta_star, vec![0.25, 0.5]);
        assert_eq!(iv.order, vec![1, 0]);
    }

    #[test]
    fn theta_star_entries_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = rng.random_range(1..8);
            let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
            let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
            let iv = compute_theta_star(&beta, &alpha).unwrap();
            for &t in &iv.theta_star {
                assert!((0.0..=1.0).contains(&t));
            }
            // order is a permutation with descending θ*.
            let mut seen = vec![false; k];
            for &j in &iv.order {
                seen[j] = true;
            }
            assert!(seen.iter().all(|&s| s));
            for pair in iv.order.windows(2) {
                assert!(iv.theta_star[pair[0]] >= iv.theta_star[pair[1]]);
            }
        }
    }
}
