use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use bioprofile::eval::{efficiency_curve, random_envelope, run_study, summarize, tune_and_fit};
use bioprofile::interpret::{partial_dependence, relative_influence};
use bioprofile::models::FittedKind;
use bioprofile::rng::{derive_seed, tag};
use bioprofile::schema::{collapse_rare_levels, load_dataset, write_dataset, CsvFormat};
use bioprofile::{generate, Dataset, FittedModel, FoldOutcome, ModelId, TruthManifest};
use log::{info, warn};
use serde_json::{json, Value};

use crate::config::{DataSource, ExperimentConfig};
use crate::output::*;
use crate::CliError;

/// Command-line values that take precedence over the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub resume: bool,
}

impl Overrides {
    fn out_dir(&self, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        fs::create_dir_all(&dir).map_err(|e| CliError::Run(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let jobs = self.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Run(e.to_string()))
    }
}

struct Loaded {
    data: Dataset,
    truth: Option<TruthManifest>,
    input: Value,
}

fn load_data(cfg: &ExperimentConfig) -> Result<Loaded, CliError> {
    let data_err = |e: bioprofile::Error| CliError::Data(e.to_string());
    let (raw, truth, input) = match cfg.data.source {
        DataSource::Synthetic => {
            let (ds, truth) = generate(&cfg.data.generator).map_err(data_err)?;
            let bytes = serde_json::to_vec(ds.records()).map_err(|e| CliError::Run(e.to_string()))?;
            let input = json!({"source": "synthetic", "generator_seed": cfg.data.generator.seed, "records_sha256": sha256_bytes(&bytes)});
            (ds, Some(truth), input)
        }
        DataSource::File => {
            let path = cfg.data.path.as_ref().expect("validated");
            let fmt = CsvFormat { delimiter: cfg.data.delimiter as u8 };
            let (ds, report) = load_dataset(path, fmt).map_err(data_err)?;
            if report.rejected() > 0 {
                warn!("{} rows with blank fields dropped", report.rejected());
            }
            let input = json!({
                "source": "file",
                "path": path,
                "sha256": sha256_file(path).map_err(|e| CliError::Data(e.to_string()))?,
                "rejected_rows": report.rejected(),
            });
            (ds, None, input)
        }
    };
    let data = collapse_rare_levels(&raw, cfg.data.collapse_threshold).map_err(data_err)?;
    Ok(Loaded { data, truth, input })
}

fn manifest(command: &str, cfg: &ExperimentConfig, input: Value, outputs: &[PathBuf], extra: Value) -> Result<Value, CliError> {
    let config_toml = cfg.to_toml();
    let mut files = serde_json::Map::new();
    for p in outputs {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.insert(name, Value::String(sha256_file(p)?));
    }
    Ok(json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": sha256_bytes(config_toml.as_bytes()),
        "config": serde_json::to_value(cfg).map_err(|e| CliError::Run(e.to_string()))?,
        "input": input,
        "outputs": files,
        "run": extra,
    }))
}

pub fn cmd_generate(mut cfg: ExperimentConfig, ov: &Overrides) -> Result<PathBuf, CliError> {
    if let Some(s) = ov.seed {
        cfg.data.generator.seed = s;
    }
    let out = ov.out_dir(&cfg)?;
    let (ds, truth) = generate(&cfg.data.generator).map_err(|e| CliError::Data(e.to_string()))?;
    let data_path = out.join("passengers.csv");
    write_dataset(&ds, &data_path).map_err(|e| CliError::Run(e.to_string()))?;
    let truth_path = out.join("truth.json");
    write_json(&truth_path, &truth)?;
    info!("{} passengers, {} non-compliant, written to {}", ds.len(), ds.positives(), data_path.display());
    let input = json!({"source": "synthetic", "generator_seed": cfg.data.generator.seed});
    let extra = json!({"n": ds.len(), "positives": ds.positives(), "intercept": truth.intercept});
    let m = manifest("generate", &cfg, input, &[data_path.clone(), truth_path], extra)?;
    write_json(&out.join("run_manifest.json"), &m)?;
    Ok(data_path)
}

fn config_digest(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    c.interpret = Default::default();
    c.screening = Default::default();
    sha256_bytes(c.to_toml().as_bytes())
}

fn load_checkpoints(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<FoldOutcome>, CliError> {
    let stamp = dir.join("config.sha256");
    let want = config_digest(cfg);
    match fs::read_to_string(&stamp) {
        Ok(have) if have.trim() == want => {}
        Ok(_) => return Err(CliError::Config("--resume with a configuration different from the checkpointed run".into())),
        Err(_) => return Ok(Vec::new()),
    }
    let wanted: BTreeSet<_> = cfg.study.tasks().into_iter().collect();
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::Run(format!("{}: {e}", dir.display())))?;
    for entry in entries.flatten() {
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&p).map_err(|e| CliError::Run(format!("{}: {e}", p.display())))?;
            match serde_json::from_str::<FoldOutcome>(&text) {
                Ok(o) if wanted.contains(&o.key) => out.push(o),
                Ok(_) => {}
                Err(e) => warn!("ignoring unreadable checkpoint {}: {e}", p.display()),
            }
        }
    }
    Ok(out)
}

pub struct StudyReport {
    pub outcomes: Vec<FoldOutcome>,
    pub out_dir: PathBuf,
}

pub fn cmd_study(mut cfg: ExperimentConfig, ov: &Overrides) -> Result<StudyReport, CliError> {
    if let Some(s) = ov.seed {
        cfg.study.seed = s;
    }
    let out = ov.out_dir(&cfg)?;
    let loaded = load_data(&cfg)?;
    let ds = &loaded.data;
    if cfg.study.models.contains(&ModelId::Oracle) && loaded.truth.is_none() {
        warn!("the oracle needs synthetic data; its folds will be recorded as failed");
    }
    let tasks_dir = out.join("tasks");
    let done = if ov.resume {
        load_checkpoints(&tasks_dir, &cfg)?
    } else {
        if tasks_dir.exists() {
            fs::remove_dir_all(&tasks_dir).map_err(|e| CliError::Run(format!("{}: {e}", tasks_dir.display())))?;
        }
        Vec::new()
    };
    fs::create_dir_all(&tasks_dir).map_err(|e| CliError::Run(format!("{}: {e}", tasks_dir.display())))?;
    fs::write(tasks_dir.join("config.sha256"), config_digest(&cfg)).map_err(|e| CliError::Run(e.to_string()))?;

    let total = cfg.study.tasks().len();
    info!("{} tasks, {} restored from checkpoints", total, done.len());
    let finished = AtomicUsize::new(done.len());
    let start = Instant::now();
    let pool = ov.pool()?;
    let truth = loaded.truth.as_ref().map(|t| t.probabilities.as_slice());
    let outcomes = pool
        .install(|| {
            run_study(ds, truth, &cfg.study, done, |o| {
                let k = finished.fetch_add(1, Ordering::Relaxed) + 1;
                match &o.failure {
                    None => info!("[{k}/{total}] {} {} r{} f{} auc={:.4}", o.key.model, o.key.stage.name(), o.key.repeat, o.key.fold, o.auc.unwrap_or(f64::NAN)),
                    Some(e) => warn!("[{k}/{total}] {} failed: {e}", o.key.file_stem()),
                }
                if let Err(e) = write_json(&tasks_dir.join(format!("{}.json", o.key.file_stem())), o) {
                    warn!("checkpoint not written: {e}");
                }
            })
        })
        .map_err(|e| CliError::Data(e.to_string()))?;
    let study_seconds = start.elapsed().as_secs_f64();

    let mut outputs = Vec::new();
    let p = out.join("outcomes.csv");
    write_outcomes(&p, &outcomes)?;
    outputs.push(p);
    let p = out.join("predictions.csv");
    write_predictions(&p, &outcomes)?;
    outputs.push(p);
    let summary = summarize(&outcomes);
    let p = out.join("summary.csv");
    write_summary(&p, &summary)?;
    outputs.push(p);

    let mut curves = Vec::new();
    let mut envelopes = Vec::new();
    for &model in &cfg.study.models {
        for &stage in &cfg.study.stages {
            let group: Vec<&FoldOutcome> = outcomes.iter().filter(|o| o.key.model == model && o.key.stage == stage).collect();
            let curve = efficiency_curve(&group, &cfg.screening.percents, cfg.study.seed).map_err(|e| CliError::Run(e.to_string()))?;
            if model == ModelId::RandomScore {
                let folds: Vec<(usize, usize)> =
                    group.iter().filter(|o| o.is_ok() && o.positives > 0).map(|o| (o.n_test, o.positives)).collect();
                if !folds.is_empty() {
                    let seed = derive_seed(cfg.study.seed, &[tag("envelope"), tag(stage.name())]);
                    let env = random_envelope(&folds, &cfg.screening.percents, cfg.screening.envelope_replicates, cfg.screening.envelope_level, seed)
                        .map_err(|e| CliError::Run(e.to_string()))?;
                    envelopes.push((stage.name().to_string(), env));
                }
            }
            curves.push(curve);
        }
    }
    let p = out.join("efficiency.csv");
    write_efficiency(&p, &curves, cfg.screening.manual_baseline)?;
    outputs.push(p);
    let p = out.join("efficiency_folds.csv");
    write_efficiency_folds(&p, &curves)?;
    outputs.push(p);
    if !envelopes.is_empty() {
        let p = out.join("random_envelope.csv");
        write_envelopes(&p, &envelopes)?;
        outputs.push(p);
    }

    let mut full_fit = Value::Null;
    if cfg.interpret.fit_full_model {
        let t = Instant::now();
        let seed = derive_seed(cfg.study.seed, &[tag("full_gbm")]);
        info!("tuning {} on the full data", ModelId::GbmCaret);
        let (model, tuned) = pool
            .install(|| tune_and_fit(ModelId::GbmCaret, ds, cfg.interpret.stage, &cfg.study.settings, seed))
            .map_err(|e| CliError::Run(e.to_string()))?;
        let p = out.join("gbm_full.json");
        fs::write(&p, model.to_json().map_err(|e| CliError::Run(e.to_string()))?).map_err(|e| CliError::Run(e.to_string()))?;
        outputs.push(p);
        full_fit = json!({"chosen": tuned.chosen.to_string(), "scores": tuned.scores, "seconds": t.elapsed().as_secs_f64()});
    }

    let failed = outcomes.iter().filter(|o| !o.is_ok()).count();
    let mut per_model = serde_json::Map::new();
    for o in &outcomes {
        let e = per_model.entry(format!("{}/{}", o.key.model, o.key.stage.name())).or_insert(json!(0.0));
        *e = json!(e.as_f64().unwrap_or(0.0) + o.seconds);
    }
    let extra = json!({
        "study_seed": cfg.study.seed,
        "outer_plan_seed": derive_seed(cfg.study.seed, &[tag("outer")]),
        "jitter_master_seed": cfg.study.seed,
        "tasks": outcomes.len(),
        "failed_tasks": failed,
        "rows": ds.len(),
        "positives": ds.positives(),
        "full_model": full_fit,
        "timings": {"study_seconds": study_seconds, "task_seconds": per_model, "jobs": pool.current_num_threads()},
        "notes": [
            "rare levels pooled before cross-validation",
            "screening ties broken by seeded uniform jitter; per-fold jitter seeds in efficiency_folds.csv",
            "efficiency bands are fold medians and quartiles (R type 7)",
        ],
    });
    let m = manifest("study", &cfg, loaded.input, &outputs, extra)?;
    write_json(&out.join("run_manifest.json"), &m)?;
    if failed == outcomes.len() && !outcomes.is_empty() {
        let why = outcomes.iter().find_map(|o| o.failure.clone()).unwrap_or_default();
        return Err(CliError::Run(format!("every task failed, e.g. {why}")));
    }
    if failed > 0 {
        warn!("{failed} of {} tasks failed; see outcomes.csv", outcomes.len());
    }
    Ok(StudyReport { outcomes, out_dir: out })
}

pub fn cmd_interpret(cfg: ExperimentConfig, ov: &Overrides, model: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let out = ov.out_dir(&cfg)?;
    let model_path = model.unwrap_or_else(|| out.join("gbm_full.json"));
    let text = fs::read_to_string(&model_path).map_err(|e| CliError::Data(format!("model artifact {}: {e}", model_path.display())))?;
    let fitted = FittedModel::from_json(&text).map_err(|e| CliError::Data(format!("model artifact {}: {e}", model_path.display())))?;
    let FittedKind::Gbm(gbm) = &fitted.kind else {
        return Err(CliError::Data(format!("{} holds a {} model, not a boosting model", model_path.display(), fitted.id)));
    };
    let loaded = load_data(&cfg)?;
    let records = loaded.data.records();
    let run_err = |e: bioprofile::Error| CliError::Run(e.to_string());
    let mut outputs = Vec::new();
    let imp = relative_influence(gbm, fitted.encoder.columns()).map_err(run_err)?;
    if imp.zero_total {
        warn!("the model has no splits; every influence is zero");
    }
    let p = out.join("importance.csv");
    write_importance(&p, &imp)?;
    outputs.push(p);
    let stage_traits = fitted.stage.traits();
    for &t in &cfg.interpret.traits {
        if !stage_traits.contains(&t) {
            warn!("{t} is not in the model's stage; skipped");
            continue;
        }
        let g = partial_dependence(gbm, &fitted.encoder, records, t, None, cfg.interpret.method).map_err(run_err)?;
        let p = out.join(format!("pd_{}.csv", t.name()));
        write_pd(&p, &g)?;
        outputs.push(p);
    }
    if let Some((a, b)) = cfg.interpret.interaction {
        if stage_traits.contains(&a) && stage_traits.contains(&b) {
            let g = partial_dependence(gbm, &fitted.encoder, records, a, Some(b), cfg.interpret.method).map_err(run_err)?;
            let p = out.join(format!("pd_{}_by_{}.csv", a.name(), b.name()));
            write_pd(&p, &g)?;
            outputs.push(p);
        } else {
            warn!("interaction {a} x {b} is not in the model's stage; skipped");
        }
    }
    let extra = json!({"model": model_path, "model_sha256": sha256_file(&model_path)?, "zero_total_influence": imp.zero_total});
    let m = manifest("interpret", &cfg, loaded.input, &outputs, extra)?;
    write_json(&out.join("interpret_manifest.json"), &m)?;
    Ok(out)
}
