//! Radial cubic basis for the nonlinear age effect.
//!
//! Columns are `|a - k_j|^3` at `K` knots, multiplied by `Omega^{-1/2}` where
//! `Omega[j][l] = |k_j - k_l|^3`, so that independent normal coefficients on
//! the transformed columns correspond to a thin-plate type penalty. Ages are
//! divided by the sample range before cubing to keep the columns O(1).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineMeta {
    pub knots: Vec<f64>,
    pub scale: f64,
    /// K x K, row-major.
    pub transform: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SplineBasis {
    /// n x K, row-major.
    pub values: Vec<f64>,
    pub meta: SplineMeta,
}

impl SplineMeta {
    pub fn n_basis(&self) -> usize {
        self.knots.len()
    }

    /// Unscaled radial terms `|(a - k_j) / scale|^3`.
    pub fn radial(&self, age: f64) -> Vec<f64> {
        self.knots
            .iter()
            .map(|k| ((age - k) / self.scale).abs().powi(3))
            .collect()
    }

    pub fn evaluate_into(&self, age: f64, out: &mut [f64]) {
        let k = self.n_basis();
        let r = self.radial(age);
        for (j, o) in out.iter_mut().enumerate().take(k) {
            *o = (0..k).map(|i| r[i] * self.transform[i * k + j]).sum();
        }
    }

    pub fn evaluate(&self, age: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis()];
        self.evaluate_into(age, &mut out);
        out
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds the basis with `k` knots at equally spaced quantiles of the
/// distinct ages (probabilities `j / (k + 1)`).
pub fn build_spline_basis(ages: &[f64], k: usize) -> Result<SplineBasis> {
    if k < 2 {
        return Err(Error::Spline(format!("need at least 2 knots, got {k}")));
    }
    let mut distinct: Vec<f64> = ages.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Spline(format!(
            "{} distinct ages, fewer than {k} knots",
            distinct.len()
        )));
    }
    let knots: Vec<f64> = (1..=k)
        .map(|j| quantile_sorted(&distinct, j as f64 / (k + 1) as f64))
        .collect();
    let scale = distinct[distinct.len() - 1] - distinct[0];

    let omega = DMatrix::from_fn(k, k, |i, j| ((knots[i] - knots[j]) / scale).abs().powi(3));
    let eig = SymmetricEigen::new(omega);
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_abs > 1e-12 * max_abs) {
        return Err(Error::Spline(
            "knot penalty matrix is singular (duplicate knots); reduce the knot count".into(),
        ));
    }
    // Omega^{-1/2} in the singular-value sense: Q diag(sign(l) / sqrt|l|) Q^T.
    let d = eig.eigenvalues.map(|l| l.signum() / l.abs().sqrt());
    let q = &eig.eigenvectors;
    let t = q * DMatrix::from_diagonal(&d) * q.transpose();
    let transform: Vec<f64> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| t[(i, j)]).collect();

    let meta = SplineMeta {
        knots,
        scale,
        transform,
    };
    let mut values = vec![0.0; ages.len() * k];
    for (row, &a) in values.chunks_mut(k).zip(ages) {
        meta.evaluate_into(a, row);
    }
    Ok(SplineBasis { values, meta })
}
