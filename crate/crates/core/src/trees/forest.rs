//! Bagged Gini classification trees with per-node column sampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binned::{unique_patterns, BinnedMatrix};
use super::tree::{grow_tree, validate_params, SplitCriterion, Tree, TreeParams};
use crate::rng::{derive_seed, stream};
use crate::schema::DesignMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    Bootstrap,
    /// Every tree sees the full training set once.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub resample: Resample,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_trees: usize, mtry: usize, seed: u64) -> Self {
        ForestParams { n_trees, mtry, resample: Resample::Bootstrap, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &DesignMatrix, y: &[f64], params: &ForestParams) -> Result<Forest> {
        let n = x.n_rows();
        if y.len() != n {
            return Err(Error::LengthMismatch { left: n, right: y.len() });
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if params.n_trees == 0 {
            return Err(Error::InvalidParameter("forest needs at least one tree".into()));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter("forest labels must be 0/1".into()));
        }
        let tree_params = TreeParams {
            criterion: SplitCriterion::Gini,
            max_depth: None,
            min_node_weight: 1.0,
            mtry: Some(params.mtry),
            seed: 0,
        };
        validate_params(&tree_params, x.n_cols())?;

        // Identical covariate rows are merged; the split search only needs
        // their summed weight and positive count.
        let (reps, ids) = unique_patterns(x);
        let data = BinnedMatrix::new(x, &reps);
        let n_pat = reps.len();

        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut counts = vec![0u32; n];
                match params.resample {
                    Resample::Bootstrap => {
                        let mut rng = stream(params.seed, &[t as u64, 1]);
                        for _ in 0..n {
                            counts[rng.random_range(0..n)] += 1;
                        }
                    }
                    Resample::Identity => counts.iter_mut().for_each(|c| *c = 1),
                }
                let mut w = vec![0.0; n_pat];
                let mut s = vec![0.0; n_pat];
                for i in 0..n {
                    let c = counts[i] as f64;
                    w[ids[i] as usize] += c;
                    s[ids[i] as usize] += c * y[i];
                }
                let tp = TreeParams { seed: derive_seed(params.seed, &[t as u64, 2]), ..tree_params.clone() };
                grow_on_subset(&data, &w, &s, &tp)
            })
            .collect();
        Ok(Forest { params: params.clone(), n_features: x.n_cols(), trees })
    }

    /// Fraction of trees voting for class 1.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let votes: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        votes / self.trees.len() as f64
    }

    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Grows on the patterns with positive weight only.
fn grow_on_subset(data: &BinnedMatrix, w: &[f64], s: &[f64], params: &TreeParams) -> Tree {
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    if keep.len() == w.len() {
        return grow_tree(data, w, s, params).0;
    }
    let sub = data.select(&keep);
    let ws: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
    let ss: Vec<f64> = keep.iter().map(|&i| s[i]).collect();
    grow_tree(&sub, &ws, &ss, params).0
}
