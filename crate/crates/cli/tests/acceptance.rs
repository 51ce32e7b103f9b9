//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing every line; set `BIOPROFILE_ACCEPTANCE_STRICT=1` to
//! exit 1 when any criterion fails. `BIOPROFILE_FULL_STUDY=1` replaces the
//! projected full-study runtime with a measured one, and
//! `BIOPROFILE_ACCEPTANCE_ONLY=C2,C3` runs a subset.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bioprofile::bayes::{BayesModel, BayesSpec, Layout, McmcSettings, Parameterization, Posterior, SparseDesign, Variant};
use bioprofile::eval::{auc, log_loss, make_cv_plan, run_study, tune_and_fit, StudyConfig};
use bioprofile::interpret::{partial_dependence, relative_influence, PdMethod};
use bioprofile::math::median;
use bioprofile::models::BayesSettings;
use bioprofile::rng::{stream, tag};
use bioprofile::schema::{collapse_rare_levels, ColumnKind, ColumnMeta, EncodeOptions};
use bioprofile::smooth::{gam_objective, spline_mask, standardization, NnObjective, PatternObjective};
use bioprofile::trees::{CustomGbm, CustomGbmParams, Gbm, GbmParams};
use bioprofile::{
    default_study_config, fit_model, generate, Dataset, DesignMatrix, Encoder, FeatureStage, ModelId, ModelSettings,
    PassengerRecord, PassengerTrait,
};
use bioprofile_cli::{cmd_interpret, cmd_study, ExperimentConfig, Overrides};
use rand::Rng;

type Verdict = Result<(bool, String), String>;

fn default_data() -> (Dataset, Vec<f64>) {
    let (ds, truth) = generate(&default_study_config()).unwrap();
    (collapse_rare_levels(&ds, 50).unwrap(), truth.probabilities)
}

fn data_with(n: usize, seed: u64) -> Dataset {
    let mut cfg = default_study_config();
    cfg.n = n;
    cfg.seed = seed;
    generate(&cfg).unwrap().0
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3)).fold(0.0, f64::max)
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key}={} is not a number", row[key]))
}

// ---------------------------------------------------------------------------
// The study run shared by the metric, reproduction and importance criteria.

const STUDY_TOML: &str = r#"
[study]
models = ["gbm_caret", "random_score"]
[study.settings.gbm]
shrinkage = [0.01]
n_trees = [850]
depth = [2]
"#;

struct StudyRun {
    dir: PathBuf,
    seconds: f64,
}

fn run_reduced_study(root: &Path) -> Result<StudyRun, String> {
    let cfg = ExperimentConfig::parse(STUDY_TOML).map_err(|e| e.to_string())?;
    let ov = Overrides { out: Some(root.join("study")), ..Default::default() };
    let start = Instant::now();
    let report = cmd_study(cfg.clone(), &ov).map_err(|e| e.to_string())?;
    cmd_interpret(cfg, &ov, None).map_err(|e| e.to_string())?;
    Ok(StudyRun { dir: report.out_dir, seconds: start.elapsed().as_secs_f64() })
}

// ---------------------------------------------------------------------------

fn metric_correctness(study: Option<&StudyRun>) -> Verdict {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0.0, 0.0, 1.0, 1.0];
    let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    let auc_ok = got == 0.75 && got == wins / pairs;

    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[0.25], &[1.0], -(0.25f64).ln()),
        (&[0.8, 0.3], &[1.0, 0.0], -((0.8f64).ln() + (0.7f64).ln()) / 2.0),
        (&[0.5, 0.5, 0.5], &[1.0, 0.0, 1.0], (2.0f64).ln()),
    ];
    let mut ll_err: f64 = 0.0;
    for (p, y, want) in cases {
        ll_err = ll_err.max((log_loss(p, y).map_err(|e| e.to_string())? - want).abs());
    }

    let study = study.ok_or("study run failed")?;
    let rows = read_csv(&study.dir.join("efficiency_folds.csv"));
    let mut id_err: f64 = 0.0;
    let mut folds = std::collections::BTreeSet::new();
    for r in &rows {
        let lhs = num(r, "efficiency");
        let rhs = num(r, "tpr") / num(r, "p_effective");
        id_err = id_err.max((lhs - rhs).abs());
        folds.insert((r["model"].clone(), r["stage"].clone(), r["repeat"].clone(), r["fold"].clone()));
    }
    let pass = auc_ok && ll_err <= 1e-12 && id_err <= 1e-12 && folds.len() == 400;
    Ok((
        pass,
        format!(
            "auc={got} (pair oracle {}), log-loss max err {ll_err:.1e}, efficiency identity max err {id_err:.1e} over {} fold curves",
            wins / pairs,
            folds.len()
        ),
    ))
}

fn pdp_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = stream(2024, &[tag("pdp")]);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    let mut models = 0;
    let mut seed = 500u64;
    while models < 100 {
        seed += 1;
        // Small draws at a 6.5% rate are sometimes single-class; those seeds are skipped.
        let mut cfg = default_study_config();
        cfg.n = 50;
        cfg.seed = seed;
        let Ok((ds, _)) = generate(&cfg) else { continue };
        if ds.positives() == 0 || ds.positives() == ds.len() {
            continue;
        }
        models += 1;
        let enc = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::plain()).map_err(|e| e.to_string())?;
        let x = enc.transform(ds.records());
        let params = GbmParams {
            min_node_weight: rng.random_range(1.0..6.0),
            ..GbmParams::new(rng.random_range(1..=10), rng.random_range(0.01..0.5), rng.random_range(1..=3))
        };
        let gbm = Gbm::fit(&x, &ds.labels(), None, &params).map_err(|e| e.to_string())?;
        for &t in &PassengerTrait::ALL {
            let grid = partial_dependence(&gbm, &enc, ds.records(), t, None, PdMethod::Data).map_err(|e| e.to_string())?;
            for p in &grid.points {
                let subst: Vec<PassengerRecord> = ds
                    .records()
                    .iter()
                    .map(|r| {
                        let mut r = r.clone();
                        r.set_level(t, &p.value).unwrap();
                        r
                    })
                    .collect();
                let lo = gbm.predict_log_odds(&enc.transform(&subst), None);
                let brute = lo.iter().sum::<f64>() / lo.len() as f64;
                worst = worst.max((p.log_odds - brute).abs());
                points += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst < 1e-10 && secs < 60.0, format!("100 models, {points} PD points, max |diff| {worst:.1e}, {secs:.1}s")))
}

fn gradient_checks() -> Verdict {
    let ds = collapse_rare_levels(&data_with(400, 31), 50).map_err(|e| e.to_string())?;
    let y = ds.labels();
    let mut rng = stream(31, &[tag("gradients")]);

    let spline = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::with_spline(10)).map_err(|e| e.to_string())?;
    let xs = spline.transform(ds.records());
    let mask = spline_mask(&xs);
    let mut gam_err: f64 = 0.0;
    for _ in 0..10 {
        let lambda = rng.random_range(0.01..20.0);
        let beta: Vec<f64> = (0..=xs.n_cols()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, grad) = gam_objective(&xs, &y, &beta, lambda, &mask);
        let fd = central_diff(&|b| gam_objective(&xs, &y, b, lambda, &mask).0, &beta);
        gam_err = gam_err.max(max_rel_err(&grad, &fd));
    }

    let plain = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::plain()).map_err(|e| e.to_string())?;
    let xp = plain.transform(ds.records());
    let (means, sds) = standardization(&xp);
    let p = xp.n_cols();
    let z: Vec<f64> = xp.values().iter().enumerate().map(|(k, v)| (v - means[k % p]) / sds[k % p]).collect();
    let mut nn_err: f64 = 0.0;
    for _ in 0..10 {
        let hidden = rng.random_range(1..=5);
        let decay = [0.0, 1e-4, 0.1][rng.random_range(0..3)];
        let obj = NnObjective { z: &z, y: &y, p, hidden, decay };
        let theta: Vec<f64> = (0..obj.n_params()).map(|_| rng.random_range(-0.7..0.7)).collect();
        let mut grad = vec![0.0; theta.len()];
        obj.value_grad(&theta, &mut grad);
        let fd = central_diff(&|t| obj.value_grad(t, &mut vec![0.0; t.len()]), &theta);
        nn_err = nn_err.max(max_rel_err(&grad, &fd));
        let merged = PatternObjective::new(&xp, &y, &means, &sds, hidden, decay).map_err(|e| e.to_string())?;
        merged.value_grad(&theta, &mut grad);
        let fd = central_diff(&|t| merged.value_grad(t, &mut vec![0.0; t.len()]), &theta);
        nn_err = nn_err.max(max_rel_err(&grad, &fd));
    }

    let hier = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::hierarchical(10)).map_err(|e| e.to_string())?;
    let xh = hier.transform(ds.records());
    let sparse = SparseDesign::new(&xh, &y).map_err(|e| e.to_string())?;
    let mut bayes_err: f64 = 0.0;
    for variant in [Variant::Normal, Variant::Lasso] {
        for par in [Parameterization::Centered, Parameterization::NonCentered] {
            let spec = BayesSpec { parameterization: par, ..BayesSpec::new(variant) };
            let layout = Layout::build(&xh, &spec);
            let post = Posterior::new(&spec, &layout, &sparse).map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let theta: Vec<f64> = (0..post.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut grad = vec![0.0; theta.len()];
                post.log_density(&theta, &mut grad);
                let fd = central_diff(&|t| post.log_density(t, &mut vec![0.0; t.len()]), &theta);
                bayes_err = bayes_err.max(max_rel_err(&grad, &fd));
            }
        }
    }
    let worst = gam_err.max(nn_err).max(bayes_err);
    Ok((worst < 1e-4, format!("max rel err: GAM {gam_err:.1e}, NN {nn_err:.1e}, Bayes {bayes_err:.1e}")))
}

fn quadrature_mean(y: &[f64]) -> f64 {
    let k: f64 = y.iter().sum();
    let n = y.len() as f64;
    let grid: Vec<f64> = (0..=8000).map(|i| -8.0 + 16.0 * i as f64 / 8000.0).collect();
    let lp: Vec<f64> = grid.iter().map(|&mu| k * mu - n * (1.0 + mu.exp()).ln() - mu * mu / 200.0).collect();
    let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
    grid.iter().zip(&w).map(|(m, w)| m * w).sum::<f64>() / w.iter().sum::<f64>()
}

fn mcmc_oracle(ds: &Dataset) -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, y) in [
        ("20 obs/4 pos", (0..20).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect::<Vec<f64>>()),
        ("default labels", ds.labels()),
    ] {
        let x = DesignMatrix::from_rows(&vec![vec![0.0]; y.len()]).map_err(|e| e.to_string())?;
        let m = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Normal), &McmcSettings::new(4, 500, 1000, 17)).map_err(|e| e.to_string())?;
        let (mean, quad) = (m.posterior_means()[0], quadrature_mean(&y));
        pass &= (mean - quad).abs() < 0.05;
        notes.push(format!("{name}: mean {mean:.4} vs quadrature {quad:.4}"));
    }

    let enc = Encoder::fit(ds, FeatureStage::Stage12, EncodeOptions::hierarchical(10)).map_err(|e| e.to_string())?;
    let x = enc.transform(ds.records());
    let start = Instant::now();
    let m = BayesModel::fit(&x, &ds.labels(), &BayesSpec::new(Variant::Normal), &McmcSettings::new(4, 500, 1000, 20150101))
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let max_rhat = m.diagnostics.rhat.iter().copied().fold(0.0, f64::max);
    pass &= max_rhat < 1.05 && secs < 600.0;
    notes.push(format!(
        "Stage12 fit 4x1000: max R-hat {max_rhat:.4} over {} parameters, {} divergences, {secs:.0}s",
        m.diagnostics.rhat.len(),
        m.diagnostics.divergences
    ));
    Ok((pass, notes.join("; ")))
}

fn oracle_dominance() -> Verdict {
    let mut settings = ModelSettings::default();
    settings.gbm.shrinkage = vec![0.01];
    settings.gbm.n_trees = vec![850];
    settings.gbm.depth = vec![2];
    settings.rf.mtry = vec![12];
    settings.nn.hidden = vec![3];
    settings.nn.decay = vec![0.1];
    settings.bayes = BayesSettings { chains: 2, warmup: 250, iterations: 250, ..BayesSettings::default() };
    let mut models = ModelId::COMPARED.to_vec();
    models.push(ModelId::Oracle);

    let start = Instant::now();
    let mut gaps: BTreeMap<ModelId, Vec<f64>> = BTreeMap::new();
    let mut failures = 0;
    for s in 0..20u64 {
        let mut gcfg = default_study_config();
        gcfg.seed = 9000 + s;
        let (raw, truth) = generate(&gcfg).map_err(|e| e.to_string())?;
        let ds = collapse_rare_levels(&raw, 50).map_err(|e| e.to_string())?;
        let cfg = StudyConfig { models: models.clone(), stages: vec![FeatureStage::Stage12], folds: 5, repeats: 1, seed: 100 + s, settings: settings.clone() };
        let outcomes = run_study(&ds, Some(&truth.probabilities), &cfg, Vec::new(), |_| {}).map_err(|e| e.to_string())?;
        let mean_ll = |id: ModelId| -> Option<f64> {
            let v: Vec<f64> = outcomes.iter().filter(|o| o.key.model == id).filter_map(|o| o.log_loss).collect();
            (v.len() == cfg.folds).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let oracle = mean_ll(ModelId::Oracle).ok_or("oracle failed")?;
        for &id in &ModelId::COMPARED {
            match mean_ll(id) {
                Some(m) => gaps.entry(id).or_default().push(m - oracle),
                None => failures += 1,
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut pass = failures == 0;
    let mut parts = Vec::new();
    for (id, g) in &gaps {
        let violations = g.iter().filter(|&&d| d < -0.002).count();
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        pass &= violations == 0 && g.len() == 20;
        parts.push(format!("{id} gap mean {mean:.4} min {min:.4} ({violations} seeds over slack)"));
    }
    Ok((pass, format!("{}; failed model-seeds {failures}; {secs:.0}s", parts.join(", "))))
}

/// Projected wall time of the full study: one outer fold per stage is timed
/// with a single inner repeat and the inner cost scaled to the default five.
fn project_full_study(ds: &Dataset) -> Result<(f64, String), String> {
    let mut settings = ModelSettings::default();
    settings.bayes = BayesSettings { chains: 2, warmup: 500, iterations: 500, ..BayesSettings::default() };
    let full_repeats = settings.tuning.repeats as f64;
    settings.tuning.repeats = 1;
    let plan = make_cv_plan(&ds.labels(), 10, 1, 1).map_err(|e| e.to_string())?;
    let train = ds.subset(&plan.train_rows(0, 0)).map_err(|e| e.to_string())?;
    let mut total = 0.0;
    let mut parts = Vec::new();
    for stage in [FeatureStage::Stage1, FeatureStage::Stage12] {
        for &id in &ModelId::COMPARED {
            let t0 = Instant::now();
            let (_, tuned) = tune_and_fit(id, &train, stage, &settings, 7).map_err(|e| e.to_string())?;
            let all = t0.elapsed().as_secs_f64();
            let task = if tuned.scores.is_empty() {
                all
            } else {
                let t1 = Instant::now();
                fit_model(id, &train, stage, &tuned.chosen, &settings, 8).map_err(|e| e.to_string())?;
                let fit = t1.elapsed().as_secs_f64();
                fit + full_repeats * (all - fit).max(0.0)
            };
            total += task;
            parts.push(format!("{id}/{} {task:.0}s", stage.name()));
        }
    }
    let hours = total * 100.0 / 8.0 / 3600.0;
    Ok((hours, parts.join(" ")))
}

fn measure_full_study(ds: &Dataset, truth: &[f64]) -> Result<f64, String> {
    let mut cfg = StudyConfig::default();
    cfg.settings.bayes = BayesSettings { chains: 2, warmup: 500, iterations: 500, ..BayesSettings::default() };
    let start = Instant::now();
    run_study(ds, Some(truth), &cfg, Vec::new(), |_| {}).map_err(|e| e.to_string())?;
    Ok(start.elapsed().as_secs_f64() / 3600.0)
}

fn reproduction(study: Option<&StudyRun>, ds: &Dataset, truth: &[f64]) -> Verdict {
    let study = study.ok_or("study run failed")?;
    let outcomes = read_csv(&study.dir.join("outcomes.csv"));
    let med_auc = |stage: &str| {
        let v: Vec<f64> = outcomes
            .iter()
            .filter(|r| r["model"] == "gbm_caret" && r["stage"] == stage && r["status"] == "ok")
            .map(|r| num(r, "auc"))
            .collect();
        (median(&v), v.len())
    };
    let ((a1, n1), (a12, n12)) = (med_auc("stage1"), med_auc("stage12"));
    let a = a12 > a1 && n1 == 100 && n12 == 100;

    let eff = read_csv(&study.dir.join("efficiency.csv"));
    let gbm12: Vec<&BTreeMap<String, String>> =
        eff.iter().filter(|r| r["model"] == "gbm_caret" && r["stage"] == "stage12" && num(r, "percent") <= 50.0).collect();
    let worst = gbm12.iter().map(|r| (num(r, "median"), r["percent"].clone())).fold((f64::INFINITY, String::new()), |acc, x| if x.0 < acc.0 { x } else { acc });
    let b = gbm12.len() == 50 && worst.0 > 1.3;

    let env = read_csv(&study.dir.join("random_envelope.csv"));
    let mut outside = Vec::new();
    let mut checked = 0;
    for r in eff.iter().filter(|r| r["model"] == "random_score") {
        let e = env
            .iter()
            .find(|e| e["stage"] == r["stage"] && e["percent"] == r["percent"])
            .ok_or_else(|| format!("no envelope for {} {}", r["stage"], r["percent"]))?;
        let m = num(r, "median");
        checked += 1;
        if m < num(e, "lower") || m > num(e, "upper") {
            outside.push(format!("{}@{}%", r["stage"], r["percent"]));
        }
    }
    let c = outside.is_empty() && checked == 200;

    let (hours, how) = if std::env::var("BIOPROFILE_FULL_STUDY").as_deref() == Ok("1") {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        (measure_full_study(ds, truth)?, format!("measured on {workers} workers"))
    } else {
        let (h, detail) = project_full_study(ds)?;
        (h, format!("projected for 8 workers from per-task timings [{detail}]"))
    };
    let d = hours < 2.0;
    Ok((
        a && b && c && d,
        format!(
            "(a) median AUC stage12 {a12:.4} vs stage1 {a1:.4}: {}; (b) lowest stage12 median efficiency for P<=50% is {:.3} at {}%: {}; (c) random-score median outside envelope at {} of {checked} points: {}; full-study runtime {hours:.2} h {how}: {}; reduced study took {:.0}s",
            ok(a),
            worst.0,
            worst.1,
            ok(b),
            outside.len(),
            ok(c),
            ok(d),
            study.seconds
        ),
    ))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn custom_gates() -> Verdict {
    let start = Instant::now();
    let (mut removed, mut retained, mut both) = (0, 0, 0);
    for s in 0..50u64 {
        let mut gcfg = default_study_config();
        gcfg.seed = 7000 + s;
        let ds = collapse_rare_levels(&generate(&gcfg).map_err(|e| e.to_string())?.0, 50).map_err(|e| e.to_string())?;
        let enc = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::plain()).map_err(|e| e.to_string())?;
        let mut x = enc.transform(ds.records());
        let mut rng = stream(s, &[tag("planted_noise")]);
        let noise: Vec<f64> = (0..x.n_rows()).map(|_| rng.random_range(0..2) as f64).collect();
        let noise_col = x.n_cols();
        x.push_column(ColumnMeta { name: "planted_noise".into(), source: None, kind: ColumnKind::Other }, &noise)
            .map_err(|e| e.to_string())?;
        let signal_col = enc.level_column(PassengerTrait::VisitReason, "visiting_relatives").ok_or("no signal column")?;
        let m = CustomGbm::fit(&x, &ds.labels(), &CustomGbmParams::default(), s).map_err(|e| e.to_string())?;
        let selected = |c: usize| m.screens.iter().any(|sc| sc.column == c && sc.selected);
        let (r, k) = (!selected(noise_col), selected(signal_col));
        removed += r as usize;
        retained += k as usize;
        both += (r && k) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        both >= 45 && secs < 900.0,
        format!("noise removed {removed}/50, signal retained {retained}/50, both {both}/50 (need 45), {secs:.0}s"),
    ))
}

fn importance_normalization(study: Option<&StudyRun>) -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let ds = data_with(400, 300 + seed);
        let enc = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::plain()).map_err(|e| e.to_string())?;
        let x = enc.transform(ds.records());
        let gbm = Gbm::fit(&x, &ds.labels(), None, &GbmParams::new(5 + seed as usize * 5, 0.1, 1 + seed as usize % 3))
            .map_err(|e| e.to_string())?;
        let t = relative_influence(&gbm, enc.columns()).map_err(|e| e.to_string())?;
        if t.zero_total {
            return Err(format!("seed {seed}: no splits"));
        }
        worst = worst.max((t.entries.iter().map(|e| e.relative).sum::<f64>() - 100.0).abs());
    }

    // Everything but age held constant: only age can be split on.
    let ds = data_with(800, 77);
    let enc = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::plain()).map_err(|e| e.to_string())?;
    let mut x = enc.transform(ds.records());
    let age = x.columns_of(PassengerTrait::Age);
    for j in (0..x.n_cols()).filter(|j| !age.contains(j)) {
        for i in 0..x.n_rows() {
            x.set(i, j, 0.0);
        }
    }
    let gbm = Gbm::fit(&x, &ds.labels(), None, &GbmParams::new(50, 0.1, 2)).map_err(|e| e.to_string())?;
    let single = relative_influence(&gbm, enc.columns()).map_err(|e| e.to_string())?;
    let age_share = single.entries.iter().find(|e| e.group == "age").map_or(0.0, |e| e.relative);

    let study = study.ok_or("study run failed")?;
    let rows = read_csv(&study.dir.join("importance.csv"));
    let cli_total: f64 = rows.iter().map(|r| num(r, "relative_influence")).sum();
    let cli_err = (cli_total - 100.0).abs();
    let pass = worst <= 1e-9 && (age_share - 100.0).abs() <= 1e-9 && cli_err <= 1e-9;
    Ok((
        pass,
        format!("20 random models max |sum-100| {worst:.1e}; age-only model gives age {age_share}; CLI importance.csv |sum-100| {cli_err:.1e}"),
    ))
}

const DETERMINISM_TOML: &str = r#"
[data.generator]
n = 500
[study]
models = ["gam", "rf_caret", "gbm_custom", "gbm_caret", "nn_caret", "bayes_normal", "bayes_lasso", "random_score", "constant_rate", "oracle"]
folds = 3
repeats = 2
[study.settings.tuning]
folds = 2
repeats = 1
[study.settings.gbm]
shrinkage = [0.05]
n_trees = [20, 40]
depth = [1, 2]
[study.settings.rf]
n_trees = 60
mtry = [2, 4]
[study.settings.nn]
hidden = [1, 2]
decay = [0.1]
restarts = 2
max_iter = 200
[study.settings.bayes]
chains = 2
warmup = 100
iterations = 100
[screening]
envelope_replicates = 100
"#;

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism(root: &Path) -> Verdict {
    let cfg = root.join("determinism.toml");
    fs::write(&cfg, DETERMINISM_TOML).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = root.join(format!("jobs{jobs}"));
        for cmd in ["study", "interpret"] {
            let st = Command::new(env!("CARGO_BIN_EXE_bioprofile"))
                .args([cmd, "--jobs", jobs, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .env("RUST_LOG", "warn")
                .status()
                .map_err(|e| e.to_string())?;
            if !st.success() {
                return Err(format!("{cmd} --jobs {jobs} exited with {st}"));
            }
        }
        outputs.push(csv_files(&out));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let same_set = a.keys().eq(b.keys());
    Ok((
        same_set && differing.is_empty() && a.len() >= 10,
        format!("{} CSV files compared between --jobs 1 and --jobs 4; differing: {:?}", a.len(), differing),
    ))
}

fn selected(id: &str) -> bool {
    match std::env::var("BIOPROFILE_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim() == id),
        Err(_) => true,
    }
}

fn run(id: &str, name: &str, f: impl FnOnce() -> Verdict) -> Option<bool> {
    if !selected(id) {
        return None;
    }
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let (pass, detail) = match verdict {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {id} {name}: {detail} [{:.0}s]", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    Some(pass)
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let (ds, truth) = default_data();
    let study = if ["C1", "C6", "C8"].iter().any(|id| selected(id)) {
        eprintln!("running the shared 2-model, 2-stage, 10x10 study...");
        run_reduced_study(tmp.path()).map_err(|e| eprintln!("study run failed: {e}")).ok()
    } else {
        None
    };

    let results = [
        run("C1", "metric correctness", || metric_correctness(study.as_ref())),
        run("C2", "partial dependence oracle", pdp_oracle),
        run("C3", "gradient checks", gradient_checks),
        run("C4", "MCMC oracle", || mcmc_oracle(&ds)),
        run("C5", "oracle dominance", oracle_dominance),
        run("C6", "qualitative reproduction", || reproduction(study.as_ref(), &ds, &truth)),
        run("C7", "GBM-custom gates", custom_gates),
        run("C8", "importance normalization", || importance_normalization(study.as_ref())),
        run("C9", "determinism", || determinism(tmp.path())),
    ];
    let ran: Vec<bool> = results.iter().flatten().copied().collect();
    let failed = ran.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", ran.len() - failed);
    if failed > 0 && std::env::var("BIOPROFILE_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
