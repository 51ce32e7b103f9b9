//! Bayesian shrinkage logistic regression sampled by HMC.
//!
//! The linear age column is standardized with training moments before
//! sampling; everything else enters as encoded.

pub mod diagnostics;
pub mod hmc;
pub mod model;

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::sigmoid;
use crate::rng::stream;
use crate::schema::{ColumnKind, DesignMatrix};
use crate::{Error, Result};

pub use diagnostics::{effective_sample_size, split_rhat};
pub use hmc::{sample_chain, ChainOutput, HmcSettings};
pub use model::{BayesSpec, Layout, Parameterization, Posterior, PriorConstants, SparseDesign, Variant};

/// Divergence share above which sampling is repeated at a higher target.
pub const MAX_DIVERGENCE_RATE: f64 = 0.1;
pub const RETRY_TARGET_ACCEPT: f64 = 0.95;
pub const RHAT_WARNING: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub chains: usize,
    pub hmc: HmcSettings,
    pub seed: u64,
}

impl McmcSettings {
    pub fn new(chains: usize, warmup: usize, iterations: usize, seed: u64) -> Self {
        McmcSettings { chains, hmc: HmcSettings { warmup, iterations, ..HmcSettings::default() }, seed }
    }
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings::new(4, 500, 1000, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub divergences: usize,
    pub divergence_rate: f64,
    pub mean_accept: f64,
    pub target_accept: f64,
    pub retried: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeScaling {
    pub column: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesModel {
    pub spec: BayesSpec,
    pub layout: Layout,
    pub mcmc: McmcSettings,
    pub age_scaling: Vec<AgeScaling>,
    pub chains: Vec<ChainOutput>,
    /// Natural-scale draws, row-major (chains x iterations, dim).
    pub draws: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn scale_ages(x: &DesignMatrix, scaling: &[AgeScaling]) -> DesignMatrix {
    let mut x = x.clone();
    for s in scaling {
        for i in 0..x.n_rows() {
            let v = x.get(i, s.column);
            x.set(i, s.column, (v - s.mean) / s.sd);
        }
    }
    x
}

impl BayesModel {
    pub fn fit(x: &DesignMatrix, y: &[f64], spec: &BayesSpec, mcmc: &McmcSettings) -> Result<BayesModel> {
        if y.len() != x.n_rows() {
            return Err(Error::LengthMismatch { left: x.n_rows(), right: y.len() });
        }
        let pos = y.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::SingleClass);
        }
        if mcmc.chains == 0 || mcmc.hmc.iterations < 4 {
            return Err(Error::InvalidParameter("need at least one chain and four draws".into()));
        }
        let age_scaling: Vec<AgeScaling> = x
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::AgeLinear)
            .map(|(j, _)| {
                let col = x.column(j);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                AgeScaling { column: j, mean, sd: if sd > 0.0 { sd } else { 1.0 } }
            })
            .collect();
        let xs = scale_ages(x, &age_scaling);
        let layout = Layout::build(&xs, spec);
        let sparse = SparseDesign::new(&xs, y)?;
        let post = Posterior::new(spec, &layout, &sparse)?;

        let mut settings = mcmc.hmc.clone();
        let mut retried = false;
        let chains = loop {
            let chains = run_chains(&post, &settings, mcmc);
            let div: usize = chains.iter().map(|c| c.divergences).sum();
            let rate = div as f64 / (mcmc.chains * settings.iterations) as f64;
            if rate > MAX_DIVERGENCE_RATE && settings.target_accept < RETRY_TARGET_ACCEPT {
                settings.target_accept = RETRY_TARGET_ACCEPT;
                retried = true;
                continue;
            }
            break chains;
        };

        let dim = layout.dim();
        let mut draws = Vec::with_capacity(mcmc.chains * settings.iterations * dim);
        for c in &chains {
            for d in c.draws.chunks_exact(dim) {
                draws.extend(post.transformed(d));
            }
        }
        let diagnostics = diagnose(&chains, &layout, &settings, retried);
        Ok(BayesModel { spec: spec.clone(), layout, mcmc: mcmc.clone(), age_scaling, chains, draws, diagnostics })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len() / self.layout.dim()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.layout.names
    }

    /// Posterior means on the natural scale.
    pub fn posterior_means(&self) -> Vec<f64> {
        let dim = self.layout.dim();
        let mut m = vec![0.0; dim];
        for d in self.draws.chunks_exact(dim) {
            for (a, b) in m.iter_mut().zip(d) {
                *a += b;
            }
        }
        let n = self.n_draws() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Posterior predictive mean probability per row.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        x.check_columns(self.layout.n_coef)?;
        let xs = scale_ages(x, &self.age_scaling);
        let dim = self.layout.dim();
        let p = self.layout.n_coef;
        let n = self.n_draws() as f64;
        Ok((0..xs.n_rows())
            .map(|i| {
                let row = xs.row(i);
                let nz: Vec<usize> = (0..p).filter(|&j| row[j] != 0.0).collect();
                let total: f64 = self
                    .draws
                    .chunks_exact(dim)
                    .map(|d| sigmoid(d[0] + nz.iter().map(|&j| row[j] * d[1 + j]).sum::<f64>()))
                    .sum();
                total / n
            })
            .collect())
    }

    /// One row per kept draw with chain and iteration indices.
    pub fn write_draws_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["chain".to_owned(), "draw".to_owned()];
        header.extend(self.layout.names.iter().cloned());
        w.write_record(&header)?;
        let dim = self.layout.dim();
        let per_chain = self.mcmc.hmc.iterations;
        for (k, d) in self.draws.chunks_exact(dim).enumerate() {
            let mut rec = vec![(k / per_chain).to_string(), (k % per_chain).to_string()];
            rec.extend(d.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn run_chains(post: &Posterior<'_>, settings: &HmcSettings, mcmc: &McmcSettings) -> Vec<ChainOutput> {
    let dim = post.dim();
    (0..mcmc.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(mcmc.seed, &[c as u64]);
            let init: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = |t: &[f64], g: &mut [f64]| post.log_density(t, g);
            sample_chain(&f, init, settings, &mut rng)
        })
        .collect()
}

fn diagnose(chains: &[ChainOutput], layout: &Layout, settings: &HmcSettings, retried: bool) -> Diagnostics {
    let dim = layout.dim();
    let mut rhat = Vec::with_capacity(dim);
    let mut ess = Vec::with_capacity(dim);
    for k in 0..dim {
        let series: Vec<Vec<f64>> =
            chains.iter().map(|c| c.draws.chunks_exact(dim).map(|d| d[k]).collect()).collect();
        rhat.push(split_rhat(&series));
        ess.push(effective_sample_size(&series));
    }
    let divergences: usize = chains.iter().map(|c| c.divergences).sum();
    let kept = chains.len() * settings.iterations;
    let mut warnings = Vec::new();
    for (name, r) in layout.names.iter().zip(&rhat) {
        if !(*r <= RHAT_WARNING) {
            warnings.push(format!("rhat {r:.3} for {name}"));
        }
    }
    let divergence_rate = divergences as f64 / kept as f64;
    if divergence_rate > MAX_DIVERGENCE_RATE {
        warnings.push(format!("divergence rate {divergence_rate:.3}"));
    }
    Diagnostics {
        rhat,
        ess,
        divergences,
        divergence_rate,
        mean_accept: chains.iter().map(|c| c.mean_accept).sum::<f64>() / chains.len() as f64,
        target_accept: settings.target_accept,
        retried,
        warnings,
    }
}
