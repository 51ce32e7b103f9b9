//! Exact pre-binning of a design matrix for split search.
//!
//! Every column keeps its sorted distinct values, so scanning bins is the
//! same as scanning every candidate threshold. Two-valued columns (the
//! indicator columns) also get a sparse per-row list of "high" entries,
//! which makes histogram construction proportional to the number of
//! non-reference indicators per row instead of the column count.

use std::collections::HashMap;

use crate::schema::DesignMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ColumnShape {
    Constant,
    Binary,
    Multi { offset: usize },
}

#[derive(Clone, Debug)]
pub(crate) struct BinnedMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cuts: Vec<Vec<f64>>,
    /// Row-major bin codes.
    pub bins: Vec<u16>,
    pub shapes: Vec<ColumnShape>,
    /// Total number of histogram slots over multi-valued columns.
    pub multi_slots: usize,
    pub multi_cols: Vec<usize>,
    /// CSR list of binary columns sitting in their upper bin.
    pub hi_start: Vec<u32>,
    pub hi_cols: Vec<u16>,
}

impl BinnedMatrix {
    /// Bins the rows of `x` listed in `rows`.
    pub fn new(x: &DesignMatrix, rows: &[usize]) -> BinnedMatrix {
        let p = x.n_cols();
        let mut cuts = Vec::with_capacity(p);
        for j in 0..p {
            let mut v: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            cuts.push(v);
        }
        let mut shapes = Vec::with_capacity(p);
        let mut multi_slots = 0;
        let mut multi_cols = Vec::new();
        for (j, c) in cuts.iter().enumerate() {
            shapes.push(match c.len() {
                0 | 1 => ColumnShape::Constant,
                2 => ColumnShape::Binary,
                n => {
                    let s = ColumnShape::Multi { offset: multi_slots };
                    multi_slots += n;
                    multi_cols.push(j);
                    s
                }
            });
        }
        let mut bins = Vec::with_capacity(rows.len() * p);
        let mut hi_start = Vec::with_capacity(rows.len() + 1);
        let mut hi_cols = Vec::new();
        hi_start.push(0);
        for &i in rows {
            let row = x.row(i);
            for j in 0..p {
                let b = cuts[j].partition_point(|&c| c < row[j]);
                bins.push(b as u16);
                if shapes[j] == ColumnShape::Binary && b == 1 {
                    hi_cols.push(j as u16);
                }
            }
            hi_start.push(hi_cols.len() as u32);
        }
        BinnedMatrix {
            n_rows: rows.len(),
            n_cols: p,
            cuts,
            bins,
            shapes,
            multi_slots,
            multi_cols,
            hi_start,
            hi_cols,
        }
    }

    /// Restricts to a subset of rows, keeping the column cuts.
    pub fn select(&self, rows: &[usize]) -> BinnedMatrix {
        let p = self.n_cols;
        let mut bins = Vec::with_capacity(rows.len() * p);
        let mut hi_start = Vec::with_capacity(rows.len() + 1);
        let mut hi_cols = Vec::new();
        hi_start.push(0);
        for &r in rows {
            bins.extend_from_slice(&self.bins[r * p..(r + 1) * p]);
            hi_cols.extend_from_slice(self.hi(r));
            hi_start.push(hi_cols.len() as u32);
        }
        BinnedMatrix {
            n_rows: rows.len(),
            n_cols: p,
            cuts: self.cuts.clone(),
            bins,
            shapes: self.shapes.clone(),
            multi_slots: self.multi_slots,
            multi_cols: self.multi_cols.clone(),
            hi_start,
            hi_cols,
        }
    }

    #[inline]
    pub fn bin(&self, r: usize, j: usize) -> u16 {
        self.bins[r * self.n_cols + j]
    }

    #[inline]
    pub fn hi(&self, r: usize) -> &[u16] {
        &self.hi_cols[self.hi_start[r] as usize..self.hi_start[r + 1] as usize]
    }
}

/// Groups identical rows of `x`. Returns one representative row index per
/// pattern (in first-seen order) and the pattern id of every row.
pub(crate) fn unique_patterns(x: &DesignMatrix) -> (Vec<usize>, Vec<u32>) {
    let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
    let mut reps = Vec::new();
    let mut ids = Vec::with_capacity(x.n_rows());
    for i in 0..x.n_rows() {
        let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
        let next = reps.len() as u32;
        let id = *seen.entry(key).or_insert_with(|| {
            reps.push(i);
            next
        });
        ids.push(id);
    }
    (reps, ids)
}
