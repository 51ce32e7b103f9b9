//! Label-stratified repeated k-fold plans.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n: usize,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// `assignment[r][i]` is the test fold of row `i` in repeat `r`.
    pub assignment: Vec<Vec<u16>>,
}

/// Within each repeat the positives are shuffled and dealt round-robin to
/// the folds; the shuffled negatives continue the same cycle, so fold sizes
/// differ by at most one overall and within each class.
pub fn make_cv_plan(labels: &[f64], folds: usize, repeats: usize, seed: u64) -> Result<CvPlan> {
    if folds < 2 || folds > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!("{folds} folds")));
    }
    if repeats == 0 {
        return Err(Error::InvalidParameter("zero repeats".into()));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1.0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1.0).collect();
    for (label, group) in [(1u8, &pos), (0u8, &neg)] {
        if group.len() < folds {
            return Err(Error::StratumTooSmall { label, count: group.len(), folds });
        }
    }
    let mut assignment = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = stream(seed, &[r as u64]);
        let mut p = pos.clone();
        let mut q = neg.clone();
        p.shuffle(&mut rng);
        q.shuffle(&mut rng);
        let mut a = vec![0u16; labels.len()];
        for (k, &i) in p.iter().chain(q.iter()).enumerate() {
            a[i] = (k % folds) as u16;
        }
        assignment.push(a);
    }
    Ok(CvPlan { n: labels.len(), folds, repeats, seed, assignment })
}

impl CvPlan {
    pub fn test_rows(&self, repeat: usize, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[repeat][i] as usize == fold).collect()
    }

    pub fn train_rows(&self, repeat: usize, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[repeat][i] as usize != fold).collect()
    }

    /// All (repeat, fold) pairs in plan order.
    pub fn tasks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.repeats).flat_map(move |r| (0..self.folds).map(move |f| (r, f)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_and_sizes() {
        let y: Vec<f64> = (0..3361).map(|i| if i % 15 == 0 { 1.0 } else { 0.0 }).collect();
        let plan = make_cv_plan(&y, 10, 3, 9).unwrap();
        for r in 0..3 {
            let mut seen = vec![false; y.len()];
            for f in 0..10 {
                let t = plan.test_rows(r, f);
                assert!(t.len() == 336 || t.len() == 337);
                let pos = t.iter().filter(|&&i| y[i] == 1.0).count();
                assert!(pos == 22 || pos == 23);
                for i in t {
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
        assert_eq!(plan, make_cv_plan(&y, 10, 3, 9).unwrap());
        assert_ne!(plan.assignment[0], plan.assignment[1]);
    }

    #[test]
    fn small_stratum_rejected() {
        let y = [1.0, 0.0, 0.0, 0.0, 1.0];
        assert!(matches!(make_cv_plan(&y, 3, 1, 0), Err(Error::StratumTooSmall { label: 1, .. })));
    }
}
