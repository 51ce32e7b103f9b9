//! Binary decision trees and the exact split builder shared by the forest
//! and boosting learners.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binned::{BinnedMatrix, ColumnShape};
use crate::rng::{stream, StreamRng};
use crate::schema::DesignMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Weighted squared error; leaves hold the weighted mean.
    SquaredError,
    /// Gini impurity for 0/1 targets; leaves hold a majority vote.
    Gini,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: SplitCriterion,
    /// `None` grows until the other rules stop it.
    pub max_depth: Option<usize>,
    /// Each child must carry at least this much training weight.
    pub min_node_weight: f64,
    /// Columns sampled per node; `None` uses all of them.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            criterion: SplitCriterion::SquaredError,
            max_depth: None,
            min_node_weight: 1.0,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Reduction in weighted squared error (half the Gini reduction
    /// for 0/1 targets).
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub split: Option<Split>,
    /// Leaf estimate. Internal nodes keep the value they would have had as
    /// a leaf.
    pub value: f64,
    pub weight: f64,
    /// Weighted count of (class 0, class 1), classification trees only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<[f64; 2]>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut k = 0;
        while let Some(s) = &self.nodes[k].split {
            k = if row[s.feature] <= s.threshold { s.left } else { s.right };
        }
        k
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_index(row)].value
    }

    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match &t.nodes[k].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = &Split> {
        self.nodes.iter().filter_map(|n| n.split.as_ref())
    }

    /// Weighted traversal: a split on a column that `fixed` assigns follows
    /// the assigned value; any other split averages both branches by the
    /// training weight that reached them.
    pub fn weighted_traversal(&self, fixed: &dyn Fn(usize) -> Option<f64>) -> f64 {
        self.weighted_from(0, fixed)
    }

    fn weighted_from(&self, i: usize, fixed: &dyn Fn(usize) -> Option<f64>) -> f64 {
        let node = &self.nodes[i];
        let Some(s) = &node.split else { return node.value };
        if let Some(v) = fixed(s.feature) {
            return self.weighted_from(if v <= s.threshold { s.left } else { s.right }, fixed);
        }
        let (wl, wr) = (self.nodes[s.left].weight, self.nodes[s.right].weight);
        if wl + wr <= 0.0 {
            return node.value;
        }
        (wl * self.weighted_from(s.left, fixed) + wr * self.weighted_from(s.right, fixed)) / (wl + wr)
    }

    /// Sum of predictions over `rows` of `x` with the columns that `fixed`
    /// assigns overridden. Rows are routed down the tree as a group, so
    /// splits on assigned columns send the whole group one way.
    pub fn substituted_sum(&self, x: &DesignMatrix, rows: &[usize], fixed: &dyn Fn(usize) -> Option<f64>) -> f64 {
        let mut rows = rows.to_vec();
        self.substituted_from(0, x, &mut rows, fixed)
    }

    fn substituted_from(&self, i: usize, x: &DesignMatrix, rows: &mut [usize], fixed: &dyn Fn(usize) -> Option<f64>) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let node = &self.nodes[i];
        let Some(s) = &node.split else { return node.value * rows.len() as f64 };
        if let Some(v) = fixed(s.feature) {
            return self.substituted_from(if v <= s.threshold { s.left } else { s.right }, x, rows, fixed);
        }
        let mut k = 0;
        for j in 0..rows.len() {
            if x.get(rows[j], s.feature) <= s.threshold {
                rows.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = rows.split_at_mut(k);
        self.substituted_from(s.left, x, l, fixed) + self.substituted_from(s.right, x, r, fixed)
    }
}

/// Fits a single tree to `targets` with observation `weights`.
pub fn fit_tree(x: &DesignMatrix, targets: &[f64], weights: &[f64], params: &TreeParams) -> Result<Tree> {
    let n = x.n_rows();
    if targets.len() != n {
        return Err(Error::LengthMismatch { left: n, right: targets.len() });
    }
    if weights.len() != n {
        return Err(Error::LengthMismatch { left: n, right: weights.len() });
    }
    validate_params(params, x.n_cols())?;
    if params.criterion == SplitCriterion::Gini && targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::InvalidParameter("gini trees need 0/1 targets".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let data = BinnedMatrix::new(x, &rows);
    let w: Vec<f64> = rows.iter().map(|&i| weights[i]).collect();
    let s: Vec<f64> = rows.iter().map(|&i| weights[i] * targets[i]).collect();
    Ok(grow_tree(&data, &w, &s, params).0)
}

pub(crate) fn validate_params(params: &TreeParams, n_cols: usize) -> Result<()> {
    if n_cols == 0 {
        return Err(Error::InvalidParameter("design has no columns".into()));
    }
    if let Some(m) = params.mtry {
        if m == 0 || m > n_cols {
            return Err(Error::InvalidParameter(format!("mtry {m} outside 1..={n_cols}")));
        }
    }
    if !(params.min_node_weight > 0.0) || !params.min_node_weight.is_finite() {
        return Err(Error::InvalidParameter("min_node_weight must be positive".into()));
    }
    Ok(())
}

/// Grows a tree over binned rows carrying weight `w` and weighted target
/// sum `s`. Returns the tree and, for each leaf, the rows that landed in it.
pub(crate) fn grow_tree(
    data: &BinnedMatrix,
    w: &[f64],
    s: &[f64],
    params: &TreeParams,
) -> (Tree, Vec<(usize, Vec<u32>)>) {
    let mut b = Builder {
        data,
        w,
        s,
        params,
        rng: stream(params.seed, &[]),
        nodes: Vec::new(),
        rows: (0..data.n_rows as u32).collect(),
        scratch: Vec::with_capacity(data.n_rows),
        hist: vec![Acc::default(); data.multi_slots],
        hi: vec![Acc::default(); data.n_cols],
        cand: Vec::with_capacity(data.n_cols),
        leaves: Vec::new(),
    };
    b.grow(0..data.n_rows, 0);
    let leaves = b
        .leaves
        .iter()
        .map(|(k, r)| (*k, b.rows[r.clone()].to_vec()))
        .collect();
    (Tree { nodes: b.nodes }, leaves)
}

#[derive(Clone, Copy, Debug, Default)]
struct Acc {
    w: f64,
    s: f64,
}

struct Best {
    feature: usize,
    bin: u16,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    data: &'a BinnedMatrix,
    w: &'a [f64],
    s: &'a [f64],
    params: &'a TreeParams,
    rng: StreamRng,
    nodes: Vec<TreeNode>,
    rows: Vec<u32>,
    scratch: Vec<u32>,
    hist: Vec<Acc>,
    hi: Vec<Acc>,
    cand: Vec<usize>,
    leaves: Vec<(usize, Range<usize>)>,
}

impl Builder<'_> {
    fn grow(&mut self, range: Range<usize>, depth: usize) -> usize {
        let (mut tw, mut ts) = (0.0, 0.0);
        for &r in &self.rows[range.clone()] {
            tw += self.w[r as usize];
            ts += self.s[r as usize];
        }
        let k = self.nodes.len();
        let node = self.leaf_node(tw, ts);
        self.nodes.push(node);

        let pure = self.params.criterion == SplitCriterion::Gini && (ts <= 0.0 || ts >= tw);
        let depth_hit = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_hit || tw < 2.0 * self.params.min_node_weight {
            self.leaves.push((k, range));
            return k;
        }
        let Some(best) = self.best_split(range.clone(), tw, ts) else {
            self.leaves.push((k, range));
            return k;
        };
        let mid = self.partition(range.clone(), best.feature, best.bin);
        let left = self.grow(range.start..mid, depth + 1);
        let right = self.grow(mid..range.end, depth + 1);
        self.nodes[k].split = Some(Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain: best.gain,
        });
        k
    }

    fn leaf_node(&mut self, tw: f64, ts: f64) -> TreeNode {
        match self.params.criterion {
            SplitCriterion::SquaredError => TreeNode {
                split: None,
                value: if tw > 0.0 { ts / tw } else { 0.0 },
                weight: tw,
                class_weights: None,
            },
            SplitCriterion::Gini => {
                let ones = ts;
                let zeros = tw - ts;
                let vote = if ones > zeros {
                    1.0
                } else if ones < zeros {
                    0.0
                } else if self.rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                };
                TreeNode { split: None, value: vote, weight: tw, class_weights: Some([zeros, ones]) }
            }
        }
    }

    fn best_split(&mut self, range: Range<usize>, tw: f64, ts: f64) -> Option<Best> {
        let data = self.data;
        let p = data.n_cols;
        self.cand.clear();
        match self.params.mtry {
            Some(m) if m < p => {
                let mut picked = rand::seq::index::sample(&mut self.rng, p, m).into_vec();
                picked.sort_unstable();
                self.cand.extend(picked);
            }
            _ => self.cand.extend(0..p),
        }
        let any_multi = self.cand.iter().any(|&j| matches!(data.shapes[j], ColumnShape::Multi { .. }));
        let any_binary = self.cand.iter().any(|&j| data.shapes[j] == ColumnShape::Binary);

        if any_multi {
            self.hist.iter_mut().for_each(|a| *a = Acc::default());
        }
        if any_binary {
            self.hi.iter_mut().for_each(|a| *a = Acc::default());
        }
        for &r in &self.rows[range] {
            let r = r as usize;
            let (w, s) = (self.w[r], self.s[r]);
            if any_multi {
                for &j in &data.multi_cols {
                    if let ColumnShape::Multi { offset } = data.shapes[j] {
                        let a = &mut self.hist[offset + data.bin(r, j) as usize];
                        a.w += w;
                        a.s += s;
                    }
                }
            }
            if any_binary {
                for &j in data.hi(r) {
                    let a = &mut self.hi[j as usize];
                    a.w += w;
                    a.s += s;
                }
            }
        }

        let parent = ts * ts / tw;
        let min_w = self.params.min_node_weight;
        let floor = 1e-14 * tw.max(1e-300);
        let mut best: Option<Best> = None;
        let mut consider = |feature: usize, bin: u16, wl: f64, sl: f64, cuts: &[f64]| {
            let wr = tw - wl;
            let sr = ts - sl;
            if wl < min_w || wr < min_w || wl <= 0.0 || wr <= 0.0 {
                return;
            }
            let gain = sl * sl / wl + sr * sr / wr - parent;
            let beats = match &best {
                None => gain > floor,
                Some(b) => gain > b.gain * (1.0 + 1e-12),
            };
            if beats {
                let b = bin as usize;
                best = Some(Best { feature, bin, threshold: 0.5 * (cuts[b] + cuts[b + 1]), gain });
            }
        };
        for &j in &self.cand {
            match data.shapes[j] {
                ColumnShape::Constant => {}
                ColumnShape::Binary => {
                    let hi = self.hi[j];
                    consider(j, 0, tw - hi.w, ts - hi.s, &data.cuts[j]);
                }
                ColumnShape::Multi { offset } => {
                    let nb = data.cuts[j].len();
                    let (mut wl, mut sl) = (0.0, 0.0);
                    for b in 0..nb - 1 {
                        let a = self.hist[offset + b];
                        wl += a.w;
                        sl += a.s;
                        if a.w == 0.0 {
                            continue;
                        }
                        consider(j, b as u16, wl, sl, &data.cuts[j]);
                    }
                }
            }
        }
        best
    }

    /// Stable partition of `range` by `bin <= split_bin`; returns the start
    /// of the right block.
    fn partition(&mut self, range: Range<usize>, feature: usize, split_bin: u16) -> usize {
        self.scratch.clear();
        let mut write = range.start;
        for i in range.clone() {
            let r = self.rows[i];
            if self.data.bin(r as usize, feature) <= split_bin {
                self.rows[write] = r;
                write += 1;
            } else {
                self.scratch.push(r);
            }
        }
        self.rows[write..range.end].copy_from_slice(&self.scratch);
        write
    }
}
