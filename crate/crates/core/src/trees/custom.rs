//! Boosting with two-gate column screening: a hold-out AUC gate on
//! single-column models, then a zero-influence gate on the joint model.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gbm::{Gbm, GbmParams};
use crate::eval::metrics::auc;
use crate::math::sigmoid;
use crate::rng::stream;
use crate::schema::DesignMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CustomGbmParams {
    pub n_splits: usize,
    pub train_fraction: f64,
    pub gbm: GbmParams,
    pub positive_weight: f64,
    pub negative_weight: f64,
    pub auc_threshold: f64,
}

impl Default for CustomGbmParams {
    fn default() -> Self {
        CustomGbmParams {
            n_splits: 5,
            train_fraction: 0.7,
            gbm: GbmParams::new(200, 0.005, 2),
            positive_weight: 7.0,
            negative_weight: 1.0,
            auc_threshold: 0.51,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScreen {
    pub column: usize,
    pub name: String,
    pub mean_auc: f64,
    pub passed_auc: bool,
    /// Influence in the joint model; zero when the AUC gate failed.
    pub influence: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomGbm {
    pub params: CustomGbmParams,
    pub n_features: usize,
    pub screens: Vec<ColumnScreen>,
    pub selected: Vec<usize>,
    /// `None` when every column was screened out.
    pub model: Option<Gbm>,
    /// Weighted training log-odds, used when `model` is `None`.
    pub intercept: f64,
}

impl CustomGbm {
    pub fn fit(x: &DesignMatrix, y: &[f64], params: &CustomGbmParams, seed: u64) -> Result<CustomGbm> {
        let n = x.n_rows();
        if y.len() != n {
            return Err(Error::LengthMismatch { left: n, right: y.len() });
        }
        if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) || params.n_splits == 0 {
            return Err(Error::InvalidParameter("bad screening split settings".into()));
        }
        let w: Vec<f64> =
            y.iter().map(|&v| if v == 1.0 { params.positive_weight } else { params.negative_weight }).collect();
        let pos_w: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
        let tot_w: f64 = w.iter().sum();
        if !(pos_w > 0.0 && pos_w < tot_w) {
            return Err(Error::SingleClass);
        }
        let intercept = (pos_w / (tot_w - pos_w)).ln();

        let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..params.n_splits)
            .map(|s| stratified_holdout(y, params.train_fraction, seed, s as u64))
            .collect();
        let p = x.n_cols();
        let mut screens = Vec::with_capacity(p);
        for j in 0..p {
            let col = x.select_columns(&[j]);
            let mut total = 0.0;
            for (train, test) in &splits {
                let xt = col.select_rows(train);
                let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
                let m = Gbm::fit(&xt, &yt, Some(&wt), &params.gbm)?;
                let xs = col.select_rows(test);
                let ys: Vec<f64> = test.iter().map(|&i| y[i]).collect();
                total += auc(&m.predict_log_odds(&xs, None), &ys)?;
            }
            let mean_auc = total / splits.len() as f64;
            screens.push(ColumnScreen {
                column: j,
                name: x.columns()[j].name.clone(),
                mean_auc,
                passed_auc: mean_auc >= params.auc_threshold,
                influence: 0.0,
                selected: false,
            });
        }

        let survivors: Vec<usize> = screens.iter().filter(|s| s.passed_auc).map(|s| s.column).collect();
        let mut selected = Vec::new();
        if !survivors.is_empty() {
            let joint = Gbm::fit(&x.select_columns(&survivors), y, Some(&w), &params.gbm)?;
            for (k, inf) in joint.column_influence(None).into_iter().enumerate() {
                screens[survivors[k]].influence = inf;
                if inf > 0.0 {
                    selected.push(survivors[k]);
                }
            }
        }
        let model = if selected.is_empty() {
            None
        } else {
            for &j in &selected {
                screens[j].selected = true;
            }
            Some(Gbm::fit(&x.select_columns(&selected), y, Some(&w), &params.gbm)?)
        };
        Ok(CustomGbm { params: params.clone(), n_features: p, screens, selected, model, intercept })
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        x.check_columns(self.n_features)?;
        Ok(match &self.model {
            Some(m) => m.predict(&x.select_columns(&self.selected), None),
            None => vec![sigmoid(self.intercept); x.n_rows()],
        })
    }
}

/// Per-class shuffle; the first `round(fraction * n_class)` rows of each
/// class train, the rest test. Both index lists are sorted.
pub fn stratified_holdout(y: &[f64], fraction: f64, seed: u64, split: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream(seed, &[split]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
