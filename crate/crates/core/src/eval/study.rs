//! The repeated cross-validated comparison: one task per model, stage,
//! repeat and fold, each tuned and scored independently.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::cv::{make_cv_plan, CvPlan};
use crate::eval::metrics::{auc, log_loss};
use crate::eval::tuning::tune_and_fit;
use crate::models::{Hyper, ModelId, ModelSettings};
use crate::rng::{derive_seed, tag};
use crate::schema::{Dataset, FeatureStage};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub models: Vec<ModelId>,
    pub stages: Vec<FeatureStage>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub settings: ModelSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            models: ModelId::COMPARED.to_vec(),
            stages: vec![FeatureStage::Stage1, FeatureStage::Stage12],
            folds: 10,
            repeats: 10,
            seed: 20_150_101,
            settings: ModelSettings::default(),
        }
    }
}

impl StudyConfig {
    pub fn plan(&self, ds: &Dataset) -> Result<CvPlan> {
        make_cv_plan(&ds.labels(), self.folds, self.repeats, derive_seed(self.seed, &[tag("outer")]))
    }

    /// Every task in output order.
    pub fn tasks(&self) -> Vec<TaskKey> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &stage in &self.stages {
                for repeat in 0..self.repeats {
                    for fold in 0..self.folds {
                        out.push(TaskKey { model, stage, repeat, fold });
                    }
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskKey {
    pub model: ModelId,
    pub stage: FeatureStage,
    pub repeat: usize,
    pub fold: usize,
}

impl TaskKey {
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(master, &[tag(self.model.name()), tag(self.stage.name()), self.repeat as u64, self.fold as u64])
    }

    /// File stem used for per-task checkpoints.
    pub fn file_stem(&self) -> String {
        format!("{}__{}__r{:02}_f{:02}", self.model, self.stage.name(), self.repeat, self.fold)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub key: TaskKey,
    /// Why the task produced no scores; `None` on success.
    pub failure: Option<String>,
    pub hyper: Option<Hyper>,
    pub auc: Option<f64>,
    pub log_loss: Option<f64>,
    pub n_test: usize,
    pub positives: usize,
    /// Test rows in the order of `probs`.
    pub rows: Vec<usize>,
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    pub seconds: f64,
}

impl FoldOutcome {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs one task. Failures are captured in the outcome, never propagated.
pub fn run_task(ds: &Dataset, truth: Option<&[f64]>, plan: &CvPlan, cfg: &StudyConfig, key: TaskKey) -> FoldOutcome {
    let start = Instant::now();
    let rows = plan.test_rows(key.repeat, key.fold);
    let labels: Vec<u8> = rows.iter().map(|&i| ds.records()[i].non_compliant as u8).collect();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let mut out = FoldOutcome {
        key,
        failure: None,
        hyper: None,
        auc: None,
        log_loss: None,
        n_test: rows.len(),
        positives,
        rows: rows.clone(),
        probs: Vec::new(),
        labels,
        seconds: 0.0,
    };
    match predict_task(ds, truth, plan, cfg, key, &rows) {
        Ok((hyper, probs)) => {
            let y: Vec<f64> = out.labels.iter().map(|&l| l as f64).collect();
            out.auc = auc(&probs, &y).ok();
            match log_loss(&probs, &y) {
                Ok(v) => out.log_loss = Some(v),
                Err(e) => out.failure = Some(e.to_string()),
            }
            out.hyper = Some(hyper);
            out.probs = probs;
        }
        Err(e) => out.failure = Some(e.to_string()),
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

fn predict_task(
    ds: &Dataset,
    truth: Option<&[f64]>,
    plan: &CvPlan,
    cfg: &StudyConfig,
    key: TaskKey,
    rows: &[usize],
) -> Result<(Hyper, Vec<f64>)> {
    if key.model == ModelId::Oracle {
        let truth = truth.ok_or_else(|| Error::InvalidParameter("oracle needs generator probabilities".into()))?;
        if truth.len() != ds.len() {
            return Err(Error::LengthMismatch { left: truth.len(), right: ds.len() });
        }
        return Ok((Hyper::None, rows.iter().map(|&i| truth[i]).collect()));
    }
    let train = ds.subset(&plan.train_rows(key.repeat, key.fold))?;
    let test = ds.subset(rows)?;
    let (model, tuned) = tune_and_fit(key.model, &train, key.stage, &cfg.settings, key.seed(cfg.seed))?;
    Ok((tuned.chosen, model.predict(test.records())?))
}

/// Runs every task not already in `done` on the current rayon pool.
/// `on_finish` sees each new outcome as it completes. The result is sorted
/// by task key, so it does not depend on scheduling.
pub fn run_study<F>(
    ds: &Dataset,
    truth: Option<&[f64]>,
    cfg: &StudyConfig,
    done: Vec<FoldOutcome>,
    on_finish: F,
) -> Result<Vec<FoldOutcome>>
where
    F: Fn(&FoldOutcome) + Sync,
{
    let plan = cfg.plan(ds)?;
    let mut have: BTreeMap<TaskKey, FoldOutcome> = done.into_iter().map(|o| (o.key, o)).collect();
    let mut todo: Vec<TaskKey> = cfg.tasks().into_iter().filter(|k| !have.contains_key(k)).collect();
    // Slow models first so the tail of the run stays parallel.
    todo.sort_by_key(|k| (cost_rank(k.model), *k));
    let fresh: Vec<FoldOutcome> = todo
        .par_iter()
        .map(|&k| {
            let o = run_task(ds, truth, &plan, cfg, k);
            on_finish(&o);
            o
        })
        .collect();
    for o in fresh {
        have.insert(o.key, o);
    }
    let wanted = cfg.tasks();
    Ok(wanted.iter().filter_map(|k| have.remove(k)).collect())
}

fn cost_rank(m: ModelId) -> u8 {
    match m {
        ModelId::BayesNormal | ModelId::BayesLasso => 0,
        ModelId::GbmCaret | ModelId::NnCaret => 1,
        ModelId::RfCaret | ModelId::Gam | ModelId::GbmCustom => 2,
        _ => 3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelId,
    pub stage: FeatureStage,
    pub completed: usize,
    pub failed: usize,
    pub mean_auc: Option<f64>,
    pub sd_auc: Option<f64>,
    pub mean_log_loss: Option<f64>,
    pub sd_log_loss: Option<f64>,
}

/// Mean and standard deviation of the fold scores per model and stage.
pub fn summarize(outcomes: &[FoldOutcome]) -> Vec<ModelSummary> {
    let mut groups: BTreeMap<(ModelId, FeatureStage), Vec<&FoldOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry((o.key.model, o.key.stage)).or_default().push(o);
    }
    groups
        .into_iter()
        .map(|((model, stage), os)| {
            let aucs: Vec<f64> = os.iter().filter_map(|o| o.auc).collect();
            let lls: Vec<f64> = os.iter().filter_map(|o| o.log_loss).collect();
            let (mean_auc, sd_auc) = mean_sd(&aucs);
            let (mean_log_loss, sd_log_loss) = mean_sd(&lls);
            let failed = os.iter().filter(|o| !o.is_ok()).count();
            ModelSummary { model, stage, completed: os.len() - failed, failed, mean_auc, sd_auc, mean_log_loss, sd_log_loss }
        })
        .collect()
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()) } else { None };
    (Some(m), sd)
}
