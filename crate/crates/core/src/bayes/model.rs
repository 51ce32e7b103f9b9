//! Parameter layout and log posterior of the shrinkage logistic regressions.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::schema::{ColumnKind, DesignMatrix, PassengerTrait};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Normal,
    Lasso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Centered,
    /// Coefficients are sampled as standard normals times their prior scale.
    NonCentered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConstants {
    pub intercept_sd: f64,
    /// Half-Cauchy scale of the shared standard deviation.
    pub shared_scale: f64,
    /// Half-Cauchy scale of the spline standard deviation (normal variant).
    pub spline_scale: f64,
    /// Rate of the exponential prior on local variances (lasso variant).
    pub local_rate: f64,
    /// Holds the shared standard deviation at this value instead of
    /// sampling it.
    #[serde(default)]
    pub fixed_shared_sd: Option<f64>,
}

impl Default for PriorConstants {
    fn default() -> Self {
        PriorConstants { intercept_sd: 10.0, shared_scale: 1.0, spline_scale: 2.5, local_rate: 1.0, fixed_shared_sd: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesSpec {
    pub variant: Variant,
    pub priors: PriorConstants,
    pub parameterization: Parameterization,
}

impl BayesSpec {
    pub fn new(variant: Variant) -> Self {
        BayesSpec { variant, priors: PriorConstants::default(), parameterization: Parameterization::Centered }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    /// log of a half-Cauchy standard deviation with the given role.
    Shared,
    Spline,
    /// log of an exponential local variance.
    Local,
}

/// A block of coefficients sharing one prior standard deviation, whose log
/// is the sum of the listed scale terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefGroup {
    pub name: String,
    pub columns: Vec<usize>,
    pub shared: bool,
    /// Index into `Layout::scales` of a half-Cauchy sd.
    pub spline: Option<usize>,
    /// Index into `Layout::scales` of a local variance.
    pub local: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub n_coef: usize,
    pub groups: Vec<CoefGroup>,
    pub scales: Vec<(String, ScaleKind)>,
    /// Index of the shared sd in `scales`, or its fixed log value.
    pub shared_index: Option<usize>,
    pub fixed_shared_log_sd: f64,
    pub names: Vec<String>,
}

impl Layout {
    /// `theta = [mu, coefficients.., scale parameters..]`.
    pub fn dim(&self) -> usize {
        1 + self.n_coef + self.scales.len()
    }

    pub fn scale_offset(&self) -> usize {
        1 + self.n_coef
    }

    pub fn build(x: &DesignMatrix, spec: &BayesSpec) -> Layout {
        let mut groups: Vec<(CoefGroup, bool)> = Vec::new();
        for (j, c) in x.columns().iter().enumerate() {
            let name = match (c.source, &c.kind) {
                (Some(PassengerTrait::Age), ColumnKind::Spline(_)) => "age_spline".to_owned(),
                (Some(PassengerTrait::Age), _) => "age".to_owned(),
                (Some(t), _) => t.name().to_owned(),
                (None, _) => c.name.clone(),
            };
            match groups.iter_mut().find(|g| g.0.name == name) {
                Some(g) => g.0.columns.push(j),
                None => groups.push((
                    CoefGroup { name, columns: vec![j], shared: true, spline: None, local: None },
                    matches!(c.kind, ColumnKind::Spline(_)),
                )),
            }
        }
        let mut scales = Vec::new();
        let shared_index = match spec.priors.fixed_shared_sd {
            Some(_) => None,
            None => {
                scales.push(("sigma_s".to_owned(), ScaleKind::Shared));
                Some(0)
            }
        };
        match spec.variant {
            Variant::Normal => {
                if groups.iter().any(|g| g.1) {
                    let k = scales.len();
                    scales.push(("sigma_a".to_owned(), ScaleKind::Spline));
                    for g in groups.iter_mut().filter(|g| g.1) {
                        g.0.shared = false;
                        g.0.spline = Some(k);
                    }
                }
            }
            Variant::Lasso => {
                for g in &mut groups {
                    g.0.local = Some(scales.len());
                    scales.push((format!("sigma2[{}]", g.0.name), ScaleKind::Local));
                }
            }
        }
        let groups: Vec<CoefGroup> = groups.into_iter().map(|g| g.0).collect();
        let mut names = vec!["mu".to_owned()];
        names.extend(x.columns().iter().map(|c| format!("coef[{}]", c.name)));
        names.extend(scales.iter().map(|s| s.0.clone()));
        Layout {
            n_coef: x.n_cols(),
            groups,
            scales,
            shared_index,
            fixed_shared_log_sd: spec.priors.fixed_shared_sd.map_or(0.0, f64::ln),
            names,
        }
    }
}

/// Sparse design rows with binomial counts; identical rows are merged.
#[derive(Clone, Debug)]
pub struct SparseDesign {
    pub n_cols: usize,
    /// Columns that are non-zero in most rows (the age terms), stored once
    /// per distinct row sub-vector.
    dense: Vec<u32>,
    blocks: Vec<f64>,
    block_of: Vec<u32>,
    /// The remaining columns, compressed by row.
    start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    pub trials: Vec<f64>,
    pub successes: Vec<f64>,
}

impl SparseDesign {
    /// Aggregates the rows of `x` with 0/1 outcomes `y`.
    pub fn new(x: &DesignMatrix, y: &[f64]) -> Result<SparseDesign> {
        if x.n_rows() != y.len() {
            return Err(Error::LengthMismatch { left: x.n_rows(), right: y.len() });
        }
        let p = x.n_cols();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut reps: Vec<usize> = Vec::new();
        let mut trials: Vec<f64> = Vec::new();
        let mut successes: Vec<f64> = Vec::new();
        for i in 0..x.n_rows() {
            let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
            let next = reps.len();
            let g = *index.entry(key).or_insert(next);
            if g == next {
                reps.push(i);
                trials.push(0.0);
                successes.push(0.0);
            }
            trials[g] += 1.0;
            successes[g] += y[i];
        }
        let mut nonzero = vec![0usize; p];
        for &i in &reps {
            for (j, &v) in x.row(i).iter().enumerate() {
                nonzero[j] += (v != 0.0) as usize;
            }
        }
        let dense: Vec<u32> = (0..p).filter(|&j| 2 * nonzero[j] > reps.len()).map(|j| j as u32).collect();
        let mut is_dense = vec![false; p];
        for &j in &dense {
            is_dense[j as usize] = true;
        }
        let mut block_index: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut d = SparseDesign {
            n_cols: p,
            dense,
            blocks: Vec::new(),
            block_of: Vec::with_capacity(reps.len()),
            start: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            trials,
            successes,
        };
        for &i in &reps {
            let row = x.row(i);
            let key: Vec<u64> = d.dense.iter().map(|&j| row[j as usize].to_bits()).collect();
            let next = block_index.len() as u32;
            let b = *block_index.entry(key).or_insert(next);
            if b == next {
                d.blocks.extend(d.dense.iter().map(|&j| row[j as usize]));
            }
            d.block_of.push(b);
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 && !is_dense[j] {
                    d.cols.push(j as u32);
                    d.vals.push(v);
                }
            }
            d.start.push(d.cols.len());
        }
        if block_index.is_empty() {
            d.blocks.clear();
        }
        Ok(d)
    }

    pub fn n_rows(&self) -> usize {
        self.start.len() - 1
    }

    fn n_blocks(&self) -> usize {
        if self.dense.is_empty() {
            self.block_of.iter().map(|&b| b as usize + 1).max().unwrap_or(0)
        } else {
            self.blocks.len() / self.dense.len()
        }
    }

    /// Dense-column part of the linear predictor for each distinct block.
    fn block_etas(&self, coef: &[f64]) -> Vec<f64> {
        let m = self.dense.len();
        (0..self.n_blocks())
            .map(|b| {
                let v = &self.blocks[b * m..(b + 1) * m];
                v.iter().zip(&self.dense).map(|(x, &j)| x * coef[j as usize]).sum()
            })
            .collect()
    }

    /// Linear predictor of every aggregated row.
    pub fn linear_predictor(&self, mu: f64, coef: &[f64]) -> Vec<f64> {
        let be = self.block_etas(coef);
        (0..self.n_rows()).map(|i| self.eta_with(i, mu, coef, &be)).collect()
    }

    #[inline]
    fn eta_with(&self, i: usize, mu: f64, coef: &[f64], block_eta: &[f64]) -> f64 {
        let mut e = mu + block_eta[self.block_of[i] as usize];
        for k in self.start[i]..self.start[i + 1] {
            e += self.vals[k] * coef[self.cols[k] as usize];
        }
        e
    }
}

/// Everything needed to evaluate the posterior density.
pub struct Posterior<'a> {
    pub spec: &'a BayesSpec,
    pub layout: &'a Layout,
    pub x: &'a SparseDesign,
}

fn half_cauchy_log(u: f64, scale: f64) -> (f64, f64) {
    // density of sigma = exp(u) with the log-Jacobian u
    let r2 = (2.0 * u).exp() / (scale * scale);
    let v = (2.0 / (PI * scale)).ln() - r2.ln_1p() + u;
    let d = 1.0 - 2.0 * r2 / (1.0 + r2);
    (v, d)
}

fn exponential_log(tau: f64, rate: f64) -> (f64, f64) {
    // density of sigma^2 = exp(tau) with the log-Jacobian tau
    let e = tau.exp();
    (rate.ln() - rate * e + tau, 1.0 - rate * e)
}

impl Posterior<'_> {
    pub fn new<'a>(spec: &'a BayesSpec, layout: &'a Layout, x: &'a SparseDesign) -> Result<Posterior<'a>> {
        if x.n_cols != layout.n_coef {
            return Err(Error::ColumnMismatch { expected: layout.n_coef, got: x.n_cols });
        }
        Ok(Posterior { spec, layout, x })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn group_log_sd(&self, g: &CoefGroup, theta: &[f64]) -> f64 {
        let off = self.layout.scale_offset();
        let mut ls = 0.0;
        if g.shared {
            ls += match self.layout.shared_index {
                Some(k) => theta[off + k],
                None => self.layout.fixed_shared_log_sd,
            };
        }
        if let Some(k) = g.spline {
            ls += theta[off + k];
        }
        if let Some(k) = g.local {
            ls += 0.5 * theta[off + k];
        }
        ls
    }

    /// Coefficients on their natural scale.
    pub fn coefficients(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = theta[1..=self.layout.n_coef].to_vec();
        if self.spec.parameterization == Parameterization::NonCentered {
            for g in &self.layout.groups {
                let s = self.group_log_sd(g, theta).exp();
                for &j in &g.columns {
                    c[j] *= s;
                }
            }
        }
        c
    }

    /// Log density on the unconstrained scale (Jacobians included) and its
    /// gradient written into `grad`.
    pub fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let lay = self.layout;
        let p = lay.n_coef;
        let off = lay.scale_offset();
        let pri = &self.spec.priors;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let coef = self.coefficients(theta);
        let mu = theta[0];

        // Likelihood; dcoef collects dLL/dc on the natural scale.
        let mut ll = 0.0;
        let mut dcoef = vec![0.0; p];
        let mut dmu = 0.0;
        let x = self.x;
        let block_eta = x.block_etas(&coef);
        let mut block_r = vec![0.0; block_eta.len()];
        for i in 0..x.n_rows() {
            let eta = x.eta_with(i, mu, &coef, &block_eta);
            let (k, n) = (x.successes[i], x.trials[i]);
            // softplus and sigmoid from a single exponential
            let e = (-eta.abs()).exp();
            let softplus = eta.max(0.0) + e.ln_1p();
            let p = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            ll += k * eta - n * softplus;
            let r = k - n * p;
            dmu += r;
            block_r[x.block_of[i] as usize] += r;
            for k in x.start[i]..x.start[i + 1] {
                dcoef[x.cols[k] as usize] += r * x.vals[k];
            }
        }
        let m = x.dense.len();
        for (b, &r) in block_r.iter().enumerate() {
            for (v, &j) in x.blocks[b * m..(b + 1) * m].iter().zip(&x.dense) {
                dcoef[j as usize] += r * v;
            }
        }

        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let mut lp = ll;
        lp += -0.5 * (mu / pri.intercept_sd).powi(2) - pri.intercept_sd.ln() - half_log_2pi;
        grad[0] = dmu - mu / (pri.intercept_sd * pri.intercept_sd);

        for g in &lay.groups {
            let log_s = self.group_log_sd(g, theta);
            let s = log_s.exp();
            let mut d_log_s = 0.0;
            for &j in &g.columns {
                let raw = theta[1 + j];
                match self.spec.parameterization {
                    Parameterization::Centered => {
                        let z = raw / s;
                        lp += -0.5 * z * z - log_s - half_log_2pi;
                        grad[1 + j] = dcoef[j] - raw / (s * s);
                        d_log_s += z * z - 1.0;
                    }
                    Parameterization::NonCentered => {
                        lp += -0.5 * raw * raw - half_log_2pi;
                        grad[1 + j] = s * dcoef[j] - raw;
                        d_log_s += coef[j] * dcoef[j];
                    }
                }
            }
            if g.shared {
                if let Some(k) = lay.shared_index {
                    grad[off + k] += d_log_s;
                }
            }
            if let Some(k) = g.spline {
                grad[off + k] += d_log_s;
            }
            if let Some(k) = g.local {
                grad[off + k] += 0.5 * d_log_s;
            }
        }

        for (k, (_, kind)) in lay.scales.iter().enumerate() {
            let t = theta[off + k];
            let (v, d) = match kind {
                ScaleKind::Shared => half_cauchy_log(t, pri.shared_scale),
                ScaleKind::Spline => half_cauchy_log(t, pri.spline_scale),
                ScaleKind::Local => exponential_log(t, pri.local_rate),
            };
            lp += v;
            grad[off + k] += d;
        }
        lp
    }

    /// Natural-scale values of every parameter: mu, coefficients, then
    /// standard deviations (half-Cauchy) or variances (local).
    pub fn transformed(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(theta.len());
        out.push(theta[0]);
        out.extend(self.coefficients(theta));
        out.extend(theta[self.layout.scale_offset()..].iter().map(|t| t.exp()));
        out
    }
}
