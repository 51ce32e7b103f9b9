//! Gradient boosting of regression trees under Bernoulli deviance.

use serde::{Deserialize, Serialize};

use super::binned::{unique_patterns, BinnedMatrix};
use super::tree::{grow_tree, validate_params, SplitCriterion, Tree, TreeParams};
use crate::math::{sigmoid, softplus};
use crate::schema::DesignMatrix;
use crate::{Error, Result};

/// Terminal-node estimates are clipped to this magnitude on the log-odds scale.
pub const LEAF_CLIP: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_trees: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_node_weight: f64,
}

impl GbmParams {
    pub fn new(n_trees: usize, shrinkage: f64, max_depth: usize) -> Self {
        GbmParams { n_trees, shrinkage, max_depth, min_node_weight: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gbm {
    pub params: GbmParams,
    pub n_features: usize,
    /// Initial log-odds.
    pub init: f64,
    /// Trees with unscaled Newton leaf values.
    pub trees: Vec<Tree>,
    /// Weighted mean training deviance, before any tree and after each one.
    pub deviance: Vec<f64>,
    pub weighted: bool,
}

impl Gbm {
    /// Fits with unit weights when `weights` is `None`.
    pub fn fit(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>, params: &GbmParams) -> Result<Gbm> {
        Self::fit_traced(x, y, weights, params, |_, _| {})
    }

    /// As [`Gbm::fit`], calling `trace(m, f)` with the training log-odds of
    /// every row after `m` trees.
    pub fn fit_traced(
        x: &DesignMatrix,
        y: &[f64],
        weights: Option<&[f64]>,
        params: &GbmParams,
        mut trace: impl FnMut(usize, &[f64]),
    ) -> Result<Gbm> {
        let n = x.n_rows();
        if y.len() != n {
            return Err(Error::LengthMismatch { left: n, right: y.len() });
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(Error::LengthMismatch { left: n, right: w.len() });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
            }
        }
        if !(params.shrinkage > 0.0 && params.shrinkage <= 1.0) {
            return Err(Error::InvalidParameter(format!("shrinkage {} outside (0, 1]", params.shrinkage)));
        }
        if params.max_depth == 0 {
            return Err(Error::InvalidParameter("interaction depth must be at least 1".into()));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter("labels must be 0/1".into()));
        }
        let tree_params = TreeParams {
            criterion: SplitCriterion::SquaredError,
            max_depth: Some(params.max_depth),
            min_node_weight: params.min_node_weight,
            mtry: None,
            seed: 0,
        };
        validate_params(&tree_params, x.n_cols())?;

        // Rows sharing a covariate pattern share every split, prediction and
        // gradient, so the fit works on pattern totals.
        let (reps, ids) = unique_patterns(x);
        let data = BinnedMatrix::new(x, &reps);
        let n_pat = reps.len();
        let mut wsum = vec![0.0; n_pat];
        let mut ysum = vec![0.0; n_pat];
        for i in 0..n {
            let wi = weights.map_or(1.0, |w| w[i]);
            wsum[ids[i] as usize] += wi;
            ysum[ids[i] as usize] += wi * y[i];
        }
        let total_w: f64 = wsum.iter().sum();
        let total_y: f64 = ysum.iter().sum();
        if !(total_y > 0.0 && total_y < total_w) {
            return Err(Error::SingleClass);
        }
        let init = (total_y / (total_w - total_y)).ln();

        let mut f = vec![init; n_pat];
        let mut resid = vec![0.0; n_pat];
        let mut row_f = vec![init; n];
        let mut deviance = Vec::with_capacity(params.n_trees + 1);
        deviance.push(pattern_deviance(&f, &wsum, &ysum, total_w));
        trace(0, &row_f);
        let mut trees = Vec::with_capacity(params.n_trees);
        for m in 0..params.n_trees {
            for g in 0..n_pat {
                resid[g] = ysum[g] - wsum[g] * sigmoid(f[g]);
            }
            let (mut tree, leaves) = grow_tree(&data, &wsum, &resid, &tree_params);
            for (k, rows) in &leaves {
                let (mut num, mut den) = (0.0, 0.0);
                for &g in rows {
                    let g = g as usize;
                    let p = sigmoid(f[g]);
                    num += resid[g];
                    den += wsum[g] * p * (1.0 - p);
                }
                let value = if den <= 1e-12 { 0.0 } else { (num / den).clamp(-LEAF_CLIP, LEAF_CLIP) };
                tree.nodes[*k].value = value;
                for &g in rows {
                    f[g as usize] += params.shrinkage * value;
                }
            }
            deviance.push(pattern_deviance(&f, &wsum, &ysum, total_w));
            trees.push(tree);
            for i in 0..n {
                row_f[i] = f[ids[i] as usize];
            }
            trace(m + 1, &row_f);
        }
        Ok(Gbm {
            params: params.clone(),
            n_features: x.n_cols(),
            init,
            trees,
            deviance,
            weighted: weights.is_some(),
        })
    }

    /// Log-odds using the first `k` trees (all when `None`).
    pub fn log_odds_row(&self, row: &[f64], k: Option<usize>) -> f64 {
        let k = k.unwrap_or(self.trees.len()).min(self.trees.len());
        let sum: f64 = self.trees[..k].iter().map(|t| t.predict_row(row)).sum();
        self.init + self.params.shrinkage * sum
    }

    pub fn predict_log_odds(&self, x: &DesignMatrix, k: Option<usize>) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.log_odds_row(x.row(i), k)).collect()
    }

    pub fn predict(&self, x: &DesignMatrix, k: Option<usize>) -> Vec<f64> {
        self.predict_log_odds(x, k).into_iter().map(sigmoid).collect()
    }

    /// Probabilities after each tree count in `checkpoints`, in one pass.
    pub fn staged_predict(&self, x: &DesignMatrix, checkpoints: &[usize]) -> Result<Vec<Vec<f64>>> {
        if let Some(&c) = checkpoints.iter().find(|&&c| c > self.trees.len()) {
            return Err(Error::InvalidParameter(format!("checkpoint {c} beyond {} trees", self.trees.len())));
        }
        let mut out = vec![Vec::with_capacity(x.n_rows()); checkpoints.len()];
        for i in 0..x.n_rows() {
            let row = x.row(i);
            let mut sum = 0.0;
            let mut done = 0;
            let mut order: Vec<usize> = (0..checkpoints.len()).collect();
            order.sort_by_key(|&c| checkpoints[c]);
            for c in order {
                while done < checkpoints[c] {
                    sum += self.trees[done].predict_row(row);
                    done += 1;
                }
                out[c].push(sigmoid(self.init + self.params.shrinkage * sum));
            }
        }
        Ok(out)
    }

    /// Summed split gains per column over the first `k` trees.
    pub fn column_influence(&self, k: Option<usize>) -> Vec<f64> {
        let k = k.unwrap_or(self.trees.len()).min(self.trees.len());
        let mut inf = vec![0.0; self.n_features];
        for t in &self.trees[..k] {
            for s in t.splits() {
                inf[s.feature] += s.gain;
            }
        }
        inf
    }
}

fn pattern_deviance(f: &[f64], w: &[f64], y: &[f64], total_w: f64) -> f64 {
    let mut d = 0.0;
    for g in 0..f.len() {
        // -log p = softplus(-f), -log(1-p) = softplus(f)
        d += y[g] * softplus(-f[g]) + (w[g] - y[g]) * softplus(f[g]);
    }
    2.0 * d / total_w
}
