//! Penalized logistic regression with a radial spline block for age.
//!
//! Only the spline coefficients are penalized. The intercept is implicit
//! and never part of the design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eval::cv::make_cv_plan;
use crate::eval::metrics::log_loss;
use crate::math::{logit, sigmoid, softplus};
use crate::schema::{ColumnKind, DesignMatrix, SplineMeta};
use crate::{Error, Result};

/// Ridge applied to every coefficient when the unpenalized fit fails.
pub const RIDGE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Fixed(f64),
    /// Chosen from the grid by inner cross-validated log-loss.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamParams {
    pub penalty: Penalty,
    pub lambda_grid: Vec<f64>,
    pub inner_folds: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GamParams {
    fn default() -> Self {
        GamParams {
            penalty: Penalty::Auto,
            lambda_grid: (-4..=4).map(|e| 10f64.powi(e)).collect(),
            inner_folds: 5,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// Extra ridge on all coefficients; zero unless the fallback was used.
    pub ridge: f64,
    pub penalized: Vec<bool>,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub spline: Option<SplineMeta>,
    /// Inner CV log-loss per grid value when the penalty was chosen.
    pub lambda_path: Vec<(f64, f64)>,
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

/// Columns whose coefficients are penalized.
pub fn spline_mask(x: &DesignMatrix) -> Vec<bool> {
    x.columns().iter().map(|c| matches!(c.kind, ColumnKind::Spline(_))).collect()
}

/// Penalized log-likelihood `l(b) - (lambda/2) |xi|^2` and its gradient.
/// `beta[0]` is the intercept.
pub fn gam_objective(x: &DesignMatrix, y: &[f64], beta: &[f64], lambda: f64, mask: &[bool]) -> (f64, Vec<f64>) {
    let p = x.n_cols();
    let mut grad = vec![0.0; p + 1];
    let mut ll = 0.0;
    for i in 0..x.n_rows() {
        let row = x.row(i);
        let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        ll += y[i] * eta - softplus(eta);
        let r = y[i] - sigmoid(eta);
        grad[0] += r;
        for j in 0..p {
            grad[j + 1] += r * row[j];
        }
    }
    for j in 0..p {
        if mask[j] {
            ll -= 0.5 * lambda * beta[j + 1] * beta[j + 1];
            grad[j + 1] -= lambda * beta[j + 1];
        }
    }
    (ll, grad)
}

impl GamModel {
    pub fn fit(x: &DesignMatrix, y: &[f64], params: &GamParams, seed: u64) -> Result<GamModel> {
        check_inputs(x, y)?;
        match params.penalty {
            Penalty::Fixed(lambda) => fit_with_fallback(x, y, lambda, params),
            Penalty::Auto => {
                if params.lambda_grid.is_empty() {
                    return Err(Error::InvalidParameter("empty penalty grid".into()));
                }
                let plan = make_cv_plan(y, params.inner_folds, 1, seed)?;
                let mut path = Vec::with_capacity(params.lambda_grid.len());
                for &lambda in &params.lambda_grid {
                    let mut total = 0.0;
                    for (r, f) in plan.tasks() {
                        let train = plan.train_rows(r, f);
                        let test = plan.test_rows(r, f);
                        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                        let ys: Vec<f64> = test.iter().map(|&i| y[i]).collect();
                        total += match fit_with_fallback(&x.select_rows(&train), &yt, lambda, params) {
                            Ok(m) => log_loss(&m.predict(&x.select_rows(&test))?, &ys)?,
                            Err(_) => f64::INFINITY,
                        };
                    }
                    path.push((lambda, total / plan.folds as f64));
                }
                // Ties go to the heavier penalty.
                let mut best = path[0];
                for &(l, v) in &path[1..] {
                    if v < best.1 - 1e-12 || ((v - best.1).abs() <= 1e-12 && l > best.0) {
                        best = (l, v);
                    }
                }
                if !best.1.is_finite() {
                    return Err(Error::IrlsDivergence);
                }
                let mut m = fit_with_fallback(x, y, best.0, params)?;
                m.lambda_path = path;
                Ok(m)
            }
        }
    }

    pub fn linear_predictor(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        x.check_columns(self.coefficients.len())?;
        if let (Some(a), Some(b)) = (x.spline(), &self.spline) {
            if a != b {
                return Err(Error::Spline("design encoded with a different spline basis".into()));
            }
        }
        Ok((0..x.n_rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        Ok(self.linear_predictor(x)?.into_iter().map(sigmoid).collect())
    }
}

fn check_inputs(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch { left: x.n_rows(), right: y.len() });
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

fn fit_with_fallback(x: &DesignMatrix, y: &[f64], lambda: f64, params: &GamParams) -> Result<GamModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("penalty {lambda}")));
    }
    match irls(x, y, lambda, 0.0, params, false) {
        Err(Error::IrlsDivergence) => irls(x, y, lambda, RIDGE_FLOOR, params, true),
        other => other,
    }
}

fn irls(x: &DesignMatrix, y: &[f64], lambda: f64, ridge: f64, params: &GamParams, accept_unconverged: bool) -> Result<GamModel> {
    let n = x.n_rows();
    let p = x.n_cols();
    let q = p + 1;
    let mask = spline_mask(x);
    let pen: Vec<f64> = (0..q).map(|j| ridge + if j > 0 && mask[j - 1] { lambda } else { 0.0 }).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut beta = vec![0.0; q];
    beta[0] = logit(ybar);

    let objective = |b: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..n {
            let eta = b[0] + x.row(i).iter().zip(&b[1..]).map(|(a, c)| a * c).sum::<f64>();
            v += y[i] * eta - softplus(eta);
        }
        v - 0.5 * b.iter().zip(&pen).map(|(c, l)| l * c * c).sum::<f64>()
    };

    let mut current = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut xrow = vec![0.0; q];
    while iterations < params.max_iter {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(q, q);
        let mut g = DVector::<f64>::zeros(q);
        for i in 0..n {
            xrow[0] = 1.0;
            xrow[1..].copy_from_slice(x.row(i));
            let eta: f64 = xrow.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            let r = y[i] - mu;
            for a in 0..q {
                if xrow[a] == 0.0 {
                    continue;
                }
                g[a] += r * xrow[a];
                let wa = w * xrow[a];
                for b in a..q {
                    h[(a, b)] += wa * xrow[b];
                }
            }
        }
        for a in 0..q {
            g[a] -= pen[a] * beta[a];
            h[(a, a)] += pen[a];
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        let Some(chol) = h.cholesky() else {
            return Err(Error::IrlsDivergence);
        };
        let delta = chol.solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        let mut trial = beta.clone();
        for _ in 0..40 {
            for j in 0..q {
                trial[j] = beta[j] + t * delta[j];
            }
            let v = objective(&trial);
            if v.is_finite() && v >= current - 1e-12 * current.abs() {
                current = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::IrlsDivergence);
        }
        let change = delta.iter().fold(0.0f64, |m, d| m.max((t * d).abs()));
        std::mem::swap(&mut beta, &mut trial);
        if change < params.tol {
            converged = true;
            break;
        }
    }
    if !converged && !accept_unconverged {
        return Err(Error::IrlsDivergence);
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("gam coefficient".into()));
    }
    let fitted: Vec<f64> = (0..n)
        .map(|i| sigmoid(beta[0] + x.row(i).iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()))
        .collect();
    let deviance = 2.0 * log_loss(&fitted, y)? * n as f64;
    Ok(GamModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        lambda,
        ridge,
        penalized: mask,
        deviance,
        iterations,
        converged,
        spline: x.spline().cloned(),
        lambda_path: Vec::new(),
        fitted,
    })
}
