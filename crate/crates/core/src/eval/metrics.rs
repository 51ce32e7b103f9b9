//! Discrimination and calibration metrics.

use crate::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const LOG_LOSS_EPS: f64 = 1e-12;

/// Area under the ROC curve via the Mann-Whitney statistic, ties counted
/// as one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1.0 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Mean negative Bernoulli log-likelihood.
pub fn log_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch { left: probs.len(), right: labels.len() });
    }
    if probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        if p.is_nan() {
            return Err(Error::NonFinite("probability".into()));
        }
        let p = p.clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise_auc(s: &[f64], y: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_matches_pair_count_with_ties() {
        let s = [0.1, 0.4, 0.4, 0.8, 0.3, 0.4, 0.9, 0.1];
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        assert!((auc(&s, &y).unwrap() - pairwise_auc(&s, &y)).abs() < 1e-15);
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.2, 0.9], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.2], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &[0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::UndefinedAuc)));
    }

    #[test]
    fn log_loss_values() {
        let ll = log_loss(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!((ll - 2f64.ln()).abs() < 1e-15);
        let hard = log_loss(&[0.0], &[1.0]).unwrap();
        assert!((hard - 1e12f64.ln()).abs() < 1e-9);
        assert!(log_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() < 1e-11);
    }
}
