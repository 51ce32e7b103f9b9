//! CSV tables written by the commands. Floats use Rust's shortest
//! round-trip formatting and rows follow a fixed order, so identical runs
//! give identical bytes.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use bioprofile::eval::{EfficiencyCurve, Envelope, ModelSummary};
use bioprofile::interpret::{ImportanceTable, PdpGrid};
use bioprofile::FoldOutcome;
use sha2::{Digest, Sha256};

use crate::CliError;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

macro_rules! row {
    ($w:expr, $path:expr, [$($x:expr),* $(,)?]) => {
        $w.write_record([$($x.to_string()),*]).map_err(|e| CliError::Run(format!("{}: {e}", $path.display())))?
    };
}

pub fn write_outcomes(path: &Path, outcomes: &[FoldOutcome]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["model", "stage", "repeat", "fold", "status", "hyperparameters", "auc", "log_loss", "n_test", "positives", "failure"]);
    for o in outcomes {
        let k = o.key;
        row!(w, path, [
            k.model.name(),
            k.stage.name(),
            k.repeat,
            k.fold,
            if o.is_ok() { "ok" } else { "failed" },
            o.hyper.as_ref().map(|h| h.to_string()).unwrap_or_default(),
            opt(o.auc),
            opt(o.log_loss),
            o.n_test,
            o.positives,
            o.failure.clone().unwrap_or_default(),
        ]);
    }
    finish(w, path)
}

pub fn write_predictions(path: &Path, outcomes: &[FoldOutcome]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["model", "stage", "repeat", "fold", "row", "label", "probability"]);
    for o in outcomes {
        for ((r, l), p) in o.rows.iter().zip(&o.labels).zip(&o.probs) {
            row!(w, path, [o.key.model.name(), o.key.stage.name(), o.key.repeat, o.key.fold, r, l, p]);
        }
    }
    finish(w, path)
}

pub fn write_summary(path: &Path, summary: &[ModelSummary]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["model", "stage", "completed", "failed", "mean_auc", "sd_auc", "mean_log_loss", "sd_log_loss"]);
    for s in summary {
        row!(w, path, [
            s.model.name(),
            s.stage.name(),
            s.completed,
            s.failed,
            opt(s.mean_auc),
            opt(s.sd_auc),
            opt(s.mean_log_loss),
            opt(s.sd_log_loss),
        ]);
    }
    finish(w, path)
}

/// Pointwise median and quartiles per model, stage and screening rate.
pub fn write_efficiency(path: &Path, curves: &[EfficiencyCurve], baseline: f64) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["model", "stage", "percent", "proportion", "median", "q25", "q75", "n_folds", "manual_baseline"]);
    for c in curves {
        for (j, &pc) in c.percents.iter().enumerate() {
            row!(w, path, [
                c.model.name(),
                c.stage.name(),
                pc,
                pc as f64 / 100.0,
                c.median[j],
                c.q25[j],
                c.q75[j],
                c.folds.len(),
                baseline,
            ]);
        }
    }
    finish(w, path)
}

pub fn write_efficiency_folds(path: &Path, curves: &[EfficiencyCurve]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["model", "stage", "repeat", "fold", "jitter_seed", "percent", "screened", "captured", "efficiency", "tpr", "p_effective"]);
    for c in curves {
        for f in &c.folds {
            for p in &f.points {
                row!(w, path, [
                    c.model.name(),
                    c.stage.name(),
                    f.repeat,
                    f.fold,
                    f.jitter_seed,
                    p.percent,
                    p.screened,
                    p.captured,
                    p.efficiency,
                    p.tpr,
                    p.p_effective,
                ]);
            }
        }
    }
    finish(w, path)
}

pub fn write_envelopes(path: &Path, envs: &[(String, Envelope)]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["stage", "percent", "center", "lower", "upper", "level", "replicates"]);
    for (stage, e) in envs {
        for (j, &pc) in e.percents.iter().enumerate() {
            row!(w, path, [stage, pc, e.center[j], e.lower[j], e.upper[j], e.level, e.replicates]);
        }
    }
    finish(w, path)
}

pub fn write_importance(path: &Path, t: &ImportanceTable) -> Result<(), CliError> {
    let mut w = writer(path)?;
    row!(w, path, ["trait", "raw_influence", "relative_influence"]);
    for e in &t.entries {
        row!(w, path, [&e.group, e.raw, e.relative]);
    }
    finish(w, path)
}

pub fn write_pd(path: &Path, g: &PdpGrid) -> Result<(), CliError> {
    let mut w = writer(path)?;
    match g.second_trait {
        None => {
            row!(w, path, ["trait", "value", "log_odds", "probability", "count"]);
            for p in &g.points {
                row!(w, path, [g.trait_name, &p.value, p.log_odds, p.probability, p.count]);
            }
        }
        Some(t2) => {
            row!(w, path, ["trait", "value", "second_trait", "second_value", "log_odds", "probability", "count"]);
            for p in &g.points {
                row!(w, path, [
                    g.trait_name,
                    &p.value,
                    t2,
                    p.second.clone().unwrap_or_default(),
                    p.log_odds,
                    p.probability,
                    p.count,
                ]);
            }
        }
    }
    finish(w, path)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}
