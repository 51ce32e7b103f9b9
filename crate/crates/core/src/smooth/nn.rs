//! Single-hidden-layer network with logistic units and weight decay.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, softplus};
use crate::optim::{minimize, LbfgsOptions};
use crate::rng::stream;
use crate::schema::DesignMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnParams {
    pub hidden: usize,
    pub decay: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl NnParams {
    pub fn new(hidden: usize, decay: f64) -> Self {
        NnParams { hidden, decay, restarts: 5, max_iter: 2000, grad_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnModel {
    pub hidden: usize,
    pub decay: f64,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Hidden-by-input weights, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub objective: f64,
    pub converged: bool,
    pub restart: usize,
}

/// Deviance plus decay on the standardized inputs `z` (row-major, `p`
/// columns). Parameters are laid out as `[w1, b1, w2, b2]`.
pub struct NnObjective<'a> {
    pub z: &'a [f64],
    pub y: &'a [f64],
    pub p: usize,
    pub hidden: usize,
    pub decay: f64,
}

impl NnObjective<'_> {
    pub fn n_params(&self) -> usize {
        self.hidden * (self.p + 2) + 1
    }

    pub fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (p, h) = (self.p, self.hidden);
        let (w1, rest) = theta.split_at(h * p);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let b2 = b2[0];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut hid = vec![0.0; h];
        let mut f = 0.0;
        for (i, z) in self.z.chunks_exact(p).enumerate() {
            let mut o = b2;
            for k in 0..h {
                let a = b1[k] + w1[k * p..(k + 1) * p].iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
                hid[k] = sigmoid(a);
                o += w2[k] * hid[k];
            }
            f += 2.0 * (softplus(o) - self.y[i] * o);
            let d_o = 2.0 * (sigmoid(o) - self.y[i]);
            grad[h * p + 2 * h] += d_o;
            for k in 0..h {
                grad[h * p + h + k] += d_o * hid[k];
                let d_a = d_o * w2[k] * hid[k] * (1.0 - hid[k]);
                grad[h * p + k] += d_a;
                for (g, v) in grad[k * p..(k + 1) * p].iter_mut().zip(z) {
                    *g += d_a * v;
                }
            }
        }
        for j in 0..h * p {
            f += self.decay * w1[j] * w1[j];
            grad[j] += 2.0 * self.decay * w1[j];
        }
        for k in 0..h {
            f += self.decay * w2[k] * w2[k];
            grad[h * p + h + k] += 2.0 * self.decay * w2[k];
        }
        f
    }
}

/// The objective of [`NnObjective`] evaluated on the raw inputs. Identical
/// rows are merged into (trials, successes) and only non-zero raw values are
/// stored; standardization is folded into the first-layer weights, so
/// `w . z = (w / sd) . x - (w / sd) . mean`.
pub struct PatternObjective {
    p: usize,
    hidden: usize,
    decay: f64,
    means: Vec<f64>,
    sds: Vec<f64>,
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    trials: Vec<f64>,
    successes: Vec<f64>,
}

impl PatternObjective {
    pub fn new(x: &DesignMatrix, y: &[f64], means: &[f64], sds: &[f64], hidden: usize, decay: f64) -> Result<Self> {
        if y.len() != x.n_rows() {
            return Err(Error::LengthMismatch { left: x.n_rows(), right: y.len() });
        }
        let p = x.n_cols();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut obj = PatternObjective {
            p,
            hidden,
            decay,
            means: means.to_vec(),
            sds: sds.to_vec(),
            start: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            trials: Vec::new(),
            successes: Vec::new(),
        };
        for (i, row) in x.values().chunks_exact(p).enumerate() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let g = *index.entry(key).or_insert_with(|| {
                for (j, &v) in row.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                    obj.cols.push(j);
                    obj.vals.push(v);
                }
                obj.start.push(obj.cols.len());
                obj.trials.push(0.0);
                obj.successes.push(0.0);
                obj.trials.len() - 1
            });
            obj.trials[g] += 1.0;
            obj.successes[g] += y[i];
        }
        Ok(obj)
    }

    pub fn n_patterns(&self) -> usize {
        self.trials.len()
    }

    pub fn n_params(&self) -> usize {
        self.hidden * (self.p + 2) + 1
    }

    pub fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (p, h) = (self.p, self.hidden);
        let (w1, rest) = theta.split_at(h * p);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let b2 = b2[0];
        let v: Vec<f64> = w1.iter().enumerate().map(|(kj, w)| w / self.sds[kj % p]).collect();
        let c: Vec<f64> = (0..h)
            .map(|k| b1[k] - v[k * p..(k + 1) * p].iter().zip(&self.means).map(|(a, m)| a * m).sum::<f64>())
            .collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut s = vec![0.0; h * p];
        let mut d = vec![0.0; h];
        let mut hid = vec![0.0; h];
        let mut f = 0.0;
        for g in 0..self.trials.len() {
            let nz = self.start[g]..self.start[g + 1];
            let (cols, vals) = (&self.cols[nz.clone()], &self.vals[nz]);
            let mut o = b2;
            for k in 0..h {
                let vk = &v[k * p..(k + 1) * p];
                let a = c[k] + cols.iter().zip(vals).map(|(&j, x)| vk[j] * x).sum::<f64>();
                hid[k] = logistic_parts(a).0;
                o += w2[k] * hid[k];
            }
            let (n, kpos) = (self.trials[g], self.successes[g]);
            let (sig, e) = logistic_parts(o);
            f += 2.0 * (n * (o.max(0.0) + e.ln_1p()) - kpos * o);
            let d_o = 2.0 * (n * sig - kpos);
            grad[h * p + 2 * h] += d_o;
            for k in 0..h {
                grad[h * p + h + k] += d_o * hid[k];
                let d_a = d_o * w2[k] * hid[k] * (1.0 - hid[k]);
                d[k] += d_a;
                let sk = &mut s[k * p..(k + 1) * p];
                for (&j, x) in cols.iter().zip(vals) {
                    sk[j] += d_a * x;
                }
            }
        }
        for k in 0..h {
            grad[h * p + k] = d[k];
            for j in 0..p {
                grad[k * p + j] = (s[k * p + j] - self.means[j] * d[k]) / self.sds[j];
            }
        }
        for j in 0..h * p {
            f += self.decay * w1[j] * w1[j];
            grad[j] += 2.0 * self.decay * w1[j];
        }
        for k in 0..h {
            f += self.decay * w2[k] * w2[k];
            grad[h * p + h + k] += 2.0 * self.decay * w2[k];
        }
        f
    }
}

/// `sigmoid(x)` and `exp(-|x|)` from one exponential, without branching on
/// the sign (it is unpredictable here).
#[inline]
fn logistic_parts(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let r = 1.0 / (1.0 + e);
    (if x >= 0.0 { r } else { e * r }, e)
}

/// Column means and standard deviations; constant columns get sd 1.
pub fn standardization(x: &DesignMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.n_rows() as f64;
    let mut means = vec![0.0; x.n_cols()];
    let mut sds = vec![0.0; x.n_cols()];
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n;
        means[j] = m;
        sds[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    (means, sds)
}

fn standardize(x: &DesignMatrix, means: &[f64], sds: &[f64]) -> Vec<f64> {
    let p = x.n_cols();
    let mut z = x.values().to_vec();
    for row in z.chunks_exact_mut(p) {
        for j in 0..p {
            row[j] = (row[j] - means[j]) / sds[j];
        }
    }
    z
}

impl NnModel {
    pub fn fit(x: &DesignMatrix, y: &[f64], params: &NnParams, seed: u64) -> Result<NnModel> {
        if y.len() != x.n_rows() {
            return Err(Error::LengthMismatch { left: x.n_rows(), right: y.len() });
        }
        let pos = y.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::SingleClass);
        }
        if params.hidden == 0 || params.restarts == 0 || !(params.decay >= 0.0) {
            return Err(Error::InvalidParameter("network needs hidden units, restarts and decay >= 0".into()));
        }
        let (means, sds) = standardization(x);
        let obj = PatternObjective::new(x, y, &means, &sds, params.hidden, params.decay)?;
        let opts = LbfgsOptions { max_iter: params.max_iter, grad_tol: params.grad_tol, ..Default::default() };
        let runs: Vec<_> = (0..params.restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, &[r as u64]);
                let theta0: Vec<f64> = (0..obj.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
                minimize(|t, g| obj.value_grad(t, g), theta0, &opts)
            })
            .collect();
        let (restart, best) = runs
            .into_iter()
            .enumerate()
            .filter(|(_, r)| r.value.is_finite())
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
            .ok_or_else(|| Error::NonFinite("network objective".into()))?;
        let (p, h) = (x.n_cols(), params.hidden);
        let t = &best.x;
        Ok(NnModel {
            hidden: h,
            decay: params.decay,
            means,
            sds,
            w1: t[..h * p].to_vec(),
            b1: t[h * p..h * p + h].to_vec(),
            w2: t[h * p + h..h * p + 2 * h].to_vec(),
            b2: t[h * p + 2 * h],
            objective: best.value,
            converged: best.converged,
            restart,
        })
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        let p = self.means.len();
        x.check_columns(p)?;
        let z = standardize(x, &self.means, &self.sds);
        Ok(z.chunks_exact(p)
            .map(|zr| {
                let mut o = self.b2;
                for k in 0..self.hidden {
                    let a = self.b1[k] + self.w1[k * p..(k + 1) * p].iter().zip(zr).map(|(w, v)| w * v).sum::<f64>();
                    o += self.w2[k] * sigmoid(a);
                }
                sigmoid(o)
            })
            .collect())
    }
}
