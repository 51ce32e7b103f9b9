//! Targeted screening: inspect the highest-risk fraction of a fold and
//! compare the hit rate with the fold's base rate.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eval::study::FoldOutcome;
use crate::math::{median, quantile};
use crate::models::ModelId;
use crate::rng::{derive_seed, stream, tag};
use crate::schema::FeatureStage;
use crate::{Error, Result};

/// Efficiency of officer-judgement profiling.
pub const MANUAL_BASELINE: f64 = 1.3;

/// Screening rates as whole percentages, 1% to 100%.
pub fn default_percents() -> Vec<u32> {
    (1..=100).collect()
}

/// Number screened at `percent` of `n`: ceil(percent·n/100), exactly.
pub fn screened_count(percent: u32, n: usize) -> usize {
    (percent as usize * n).div_ceil(100)
}

/// Row order for screening: descending probability, ties broken by a
/// uniform jitter drawn from `jitter_seed`.
pub fn screening_order(probs: &[f64], jitter_seed: u64) -> Vec<usize> {
    let mut rng = stream(jitter_seed, &[]);
    let jitter: Vec<f64> = (0..probs.len()).map(|_| rng.random::<f64>()).collect();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(jitter[b].total_cmp(&jitter[a])).then(a.cmp(&b)));
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenPoint {
    pub percent: u32,
    pub screened: usize,
    pub captured: usize,
    /// Captured positives over screened, divided by the fold base rate.
    pub efficiency: f64,
    /// Share of the fold's positives captured.
    pub tpr: f64,
    /// Screened over fold size.
    pub p_effective: f64,
}

/// Screening results on one fold. `Err` when the fold has no positives.
pub fn screen_fold(probs: &[f64], labels: &[u8], percents: &[u32], jitter_seed: u64) -> Result<Vec<ScreenPoint>> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch { left: probs.len(), right: labels.len() });
    }
    let n = labels.len();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(Error::SingleClass);
    }
    let order = screening_order(probs, jitter_seed);
    let mut prefix = vec![0usize; n + 1];
    for (k, &i) in order.iter().enumerate() {
        prefix[k + 1] = prefix[k] + labels[i] as usize;
    }
    Ok(percents
        .iter()
        .map(|&percent| {
            let m = screened_count(percent, n);
            let c = prefix[m];
            ScreenPoint {
                percent,
                screened: m,
                captured: c,
                efficiency: (c as f64 / m as f64) / (pos as f64 / n as f64),
                tpr: c as f64 / pos as f64,
                p_effective: m as f64 / n as f64,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldCurve {
    pub repeat: usize,
    pub fold: usize,
    pub jitter_seed: u64,
    pub points: Vec<ScreenPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub model: ModelId,
    pub stage: FeatureStage,
    pub percents: Vec<u32>,
    pub folds: Vec<FoldCurve>,
    /// Folds left out, with the reason.
    pub excluded: Vec<(usize, usize, String)>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub manual_baseline: f64,
}

pub fn jitter_seed(master: u64, model: ModelId, stage: FeatureStage, repeat: usize, fold: usize) -> u64 {
    derive_seed(master, &[tag("jitter"), tag(model.name()), tag(stage.name()), repeat as u64, fold as u64])
}

/// Pointwise median and interquartile band across folds of one model and
/// stage. Failed folds and folds without positives are excluded.
pub fn efficiency_curve(outcomes: &[&FoldOutcome], percents: &[u32], master_seed: u64) -> Result<EfficiencyCurve> {
    let first = outcomes.first().ok_or_else(|| Error::InvalidParameter("no outcomes".into()))?;
    let (model, stage) = (first.key.model, first.key.stage);
    let mut folds = Vec::new();
    let mut excluded = Vec::new();
    for o in outcomes {
        if (o.key.model, o.key.stage) != (model, stage) {
            return Err(Error::InvalidParameter("outcomes mix models or stages".into()));
        }
        let (r, f) = (o.key.repeat, o.key.fold);
        if let Some(why) = &o.failure {
            excluded.push((r, f, why.clone()));
            continue;
        }
        let seed = jitter_seed(master_seed, model, stage, r, f);
        match screen_fold(&o.probs, &o.labels, percents, seed) {
            Ok(points) => folds.push(FoldCurve { repeat: r, fold: f, jitter_seed: seed, points }),
            Err(e) => excluded.push((r, f, e.to_string())),
        }
    }
    let (median, q25, q75) = bands(&folds, percents.len());
    Ok(EfficiencyCurve { model, stage, percents: percents.to_vec(), folds, excluded, median, q25, q75, manual_baseline: MANUAL_BASELINE })
}

fn bands(folds: &[FoldCurve], len: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut med = Vec::with_capacity(len);
    let mut lo = Vec::with_capacity(len);
    let mut hi = Vec::with_capacity(len);
    for j in 0..len {
        let v: Vec<f64> = folds.iter().map(|f| f.points[j].efficiency).collect();
        if v.is_empty() {
            med.push(f64::NAN);
            lo.push(f64::NAN);
            hi.push(f64::NAN);
        } else {
            med.push(median(&v));
            lo.push(quantile(&v, 0.25));
            hi.push(quantile(&v, 0.75));
        }
    }
    (med, lo, hi)
}

/// Simultaneous Monte-Carlo band for the median efficiency curve of a
/// random ranking on folds of the given (size, positives).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub percents: Vec<u32>,
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub replicates: usize,
}

pub fn random_envelope(folds: &[(usize, usize)], percents: &[u32], replicates: usize, level: f64, seed: u64) -> Result<Envelope> {
    if folds.is_empty() || replicates < 2 || !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter("envelope needs folds, two replicates and a level in (0, 1)".into()));
    }
    if let Some(&(n, p)) = folds.iter().find(|&&(n, p)| p == 0 || p > n) {
        return Err(Error::InvalidParameter(format!("fold of {n} rows with {p} positives")));
    }
    let mut curves = Vec::with_capacity(replicates);
    for b in 0..replicates {
        let mut rng = stream(seed, &[b as u64]);
        let per_fold: Vec<Vec<f64>> = folds
            .iter()
            .map(|&(n, p)| {
                let mut labels: Vec<u8> = (0..n).map(|i| (i < p) as u8).collect();
                labels.shuffle(&mut rng);
                let mut prefix = vec![0usize; n + 1];
                for k in 0..n {
                    prefix[k + 1] = prefix[k] + labels[k] as usize;
                }
                percents
                    .iter()
                    .map(|&pc| {
                        let m = screened_count(pc, n);
                        (prefix[m] as f64 / m as f64) / (p as f64 / n as f64)
                    })
                    .collect()
            })
            .collect();
        curves.push(
            (0..percents.len())
                .map(|j| median(&per_fold.iter().map(|f| f[j]).collect::<Vec<_>>()))
                .collect::<Vec<f64>>(),
        );
    }
    let len = percents.len();
    let center: Vec<f64> = (0..len).map(|j| median(&curves.iter().map(|c| c[j]).collect::<Vec<_>>())).collect();
    let spread: Vec<f64> = (0..len)
        .map(|j| {
            let v: Vec<f64> = curves.iter().map(|c| c[j]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        })
        .collect();
    let dev: Vec<f64> = curves.iter().map(|c| max_scaled_deviation(c, &center, &spread)).collect();
    let t = quantile(&dev, level);
    let lower = (0..len).map(|j| center[j] - t * spread[j]).collect();
    let upper = (0..len).map(|j| center[j] + t * spread[j]).collect();
    Ok(Envelope { percents: percents.to_vec(), center, lower, upper, level, replicates })
}

fn max_scaled_deviation(curve: &[f64], center: &[f64], spread: &[f64]) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..curve.len() {
        if spread[j] > 0.0 {
            d = d.max((curve[j] - center[j]).abs() / spread[j]);
        } else if (curve[j] - center[j]).abs() > 1e-12 {
            return f64::INFINITY;
        }
    }
    d
}

impl Envelope {
    /// Whether the whole curve lies inside the band.
    pub fn contains(&self, curve: &[f64]) -> bool {
        curve.len() == self.center.len()
            && (0..curve.len()).all(|j| curve[j] >= self.lower[j] - 1e-12 && curve[j] <= self.upper[j] + 1e-12)
    }
}
