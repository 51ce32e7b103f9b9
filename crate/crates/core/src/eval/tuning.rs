//! Grid search by inner repeated cross-validation on log-loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::cv::make_cv_plan;
use crate::eval::metrics::log_loss;
use crate::models::{fit_model, FittedModel, Hyper, ModelId, ModelSettings};
use crate::rng::derive_seed;
use crate::schema::{Dataset, Encoder, FeatureStage};
use crate::trees::{Gbm, GbmParams};
use crate::{Error, Result};

/// Two mean losses closer than this (relative) count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub hyper: Hyper,
    /// Mean inner log-loss; `None` when the point failed on some inner fold.
    pub log_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub chosen: Hyper,
    /// Empty when the grid had a single point and no search was run.
    pub scores: Vec<GridScore>,
}

/// Picks the hyperparameters of `id` for `train` by inner cross-validation.
/// Ties go to the smaller model.
pub fn tune(id: ModelId, train: &Dataset, stage: FeatureStage, settings: &ModelSettings, seed: u64) -> Result<Tuned> {
    let grid = settings.grid(id);
    if grid.len() == 1 {
        return Ok(Tuned { chosen: grid[0].clone(), scores: Vec::new() });
    }
    let y = train.labels();
    let plan = make_cv_plan(&y, settings.tuning.folds, settings.tuning.repeats, seed)?;
    let tasks: Vec<(usize, usize)> = plan.tasks().collect();
    let per_fold: Vec<Vec<std::result::Result<f64, String>>> = tasks
        .par_iter()
        .map(|&(r, k)| {
            let inner = || -> Result<Vec<std::result::Result<f64, String>>> {
                let tr = train.subset(&plan.train_rows(r, k))?;
                let te = train.subset(&plan.test_rows(r, k))?;
                let fold_seed = derive_seed(seed, &[r as u64, k as u64]);
                score_fold(id, &grid, &tr, &te, stage, settings, fold_seed)
            };
            inner().unwrap_or_else(|e| vec![Err(e.to_string()); grid.len()])
        })
        .collect();

    let scores: Vec<GridScore> = grid
        .iter()
        .enumerate()
        .map(|(g, h)| {
            let mut sum = 0.0;
            let mut error = None;
            for fold in &per_fold {
                match &fold[g] {
                    Ok(v) => sum += v,
                    Err(e) => {
                        error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            let log_loss = if error.is_none() { Some(sum / per_fold.len() as f64) } else { None };
            GridScore { hyper: h.clone(), log_loss, error }
        })
        .collect();
    let chosen = select(&scores).ok_or_else(|| {
        let why = scores.iter().find_map(|s| s.error.clone()).unwrap_or_default();
        Error::TuningFailed(why)
    })?;
    Ok(Tuned { chosen, scores })
}

/// The best scoring point, ties resolved toward the smaller model.
pub fn select(scores: &[GridScore]) -> Option<Hyper> {
    let best = scores.iter().filter_map(|s| s.log_loss).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    scores
        .iter()
        .filter(|s| s.log_loss.is_some_and(|v| v <= best + tol))
        .min_by(|a, b| a.hyper.size_key().partial_cmp(&b.hyper.size_key()).unwrap())
        .map(|s| s.hyper.clone())
}

fn score_fold(
    id: ModelId,
    grid: &[Hyper],
    tr: &Dataset,
    te: &Dataset,
    stage: FeatureStage,
    settings: &ModelSettings,
    seed: u64,
) -> Result<Vec<std::result::Result<f64, String>>> {
    let y_te = te.labels();
    if id == ModelId::GbmCaret {
        return score_gbm_fold(grid, tr, te, &y_te, stage, settings);
    }
    Ok(grid
        .iter()
        .map(|h| {
            let m = fit_model(id, tr, stage, h, settings, seed).map_err(|e| e.to_string())?;
            let p = m.predict(te.records()).map_err(|e| e.to_string())?;
            log_loss(&p, &y_te).map_err(|e| e.to_string())
        })
        .collect())
}

/// Points sharing shrinkage and depth reuse one fit at the largest tree
/// count, read off at each smaller count.
fn score_gbm_fold(
    grid: &[Hyper],
    tr: &Dataset,
    te: &Dataset,
    y_te: &[f64],
    stage: FeatureStage,
    settings: &ModelSettings,
) -> Result<Vec<std::result::Result<f64, String>>> {
    let encoder = Encoder::fit(tr, stage, ModelId::GbmCaret.encoding(settings.spline_knots.0))?;
    let x_tr = encoder.transform(tr.records());
    let x_te = encoder.transform(te.records());
    let y_tr = tr.labels();
    let mut out: Vec<Option<std::result::Result<f64, String>>> = vec![None; grid.len()];
    for g in 0..grid.len() {
        if out[g].is_some() {
            continue;
        }
        let Hyper::Gbm { shrinkage, depth, .. } = grid[g] else {
            out[g] = Some(Err(format!("{} is not a gbm setting", grid[g])));
            continue;
        };
        let members: Vec<(usize, usize)> = (g..grid.len())
            .filter_map(|i| match grid[i] {
                Hyper::Gbm { shrinkage: s, n_trees, depth: d } if s == shrinkage && d == depth => Some((i, n_trees)),
                _ => None,
            })
            .collect();
        let max_trees = members.iter().map(|m| m.1).max().unwrap_or(0);
        let params = GbmParams { min_node_weight: settings.gbm.min_node_weight, ..GbmParams::new(max_trees, shrinkage, depth) };
        let fitted = Gbm::fit(&x_tr, &y_tr, None, &params).and_then(|m| {
            let ks: Vec<usize> = members.iter().map(|m| m.1).collect();
            m.staged_predict(&x_te, &ks)
        });
        match fitted {
            Ok(staged) => {
                for ((i, _), p) in members.iter().zip(staged) {
                    out[*i] = Some(log_loss(&p, y_te).map_err(|e| e.to_string()));
                }
            }
            Err(e) => {
                for (i, _) in &members {
                    out[*i] = Some(Err(e.to_string()));
                }
            }
        }
    }
    Ok(out.into_iter().map(|o| o.expect("every grid point scored")).collect())
}

/// Tunes on `train` then refits the chosen point on all of it.
pub fn tune_and_fit(
    id: ModelId,
    train: &Dataset,
    stage: FeatureStage,
    settings: &ModelSettings,
    seed: u64,
) -> Result<(FittedModel, Tuned)> {
    let tuned = tune(id, train, stage, settings, derive_seed(seed, &[1]))?;
    let model = fit_model(id, train, stage, &tuned.chosen, settings, derive_seed(seed, &[2]))?;
    Ok((model, tuned))
}
