#![allow(dead_code)]

use bioprofile::schema::collapse_rare_levels;
use bioprofile::{default_study_config, generate, Dataset, GeneratorConfig, TruthManifest};

pub fn study_config(n: usize, seed: u64) -> GeneratorConfig {
    let mut cfg = default_study_config();
    cfg.n = n;
    cfg.seed = seed;
    cfg
}

/// Generated and rare-level-collapsed data.
pub fn study_data(cfg: &GeneratorConfig) -> (Dataset, TruthManifest) {
    let (ds, truth) = generate(cfg).unwrap();
    (collapse_rare_levels(&ds, 50).unwrap(), truth)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}
