//! Static-path Hamiltonian Monte Carlo with a jittered path length,
//! dual-averaging step size and a windowed diagonal metric.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcSettings {
    pub warmup: usize,
    pub iterations: usize,
    pub target_accept: f64,
    /// Integration time before jitter, in units of the adapted metric.
    pub path_length: f64,
    pub jitter: f64,
    pub max_steps: usize,
    /// Energy error beyond which a transition counts as divergent.
    pub divergence_threshold: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        HmcSettings {
            warmup: 500,
            iterations: 1000,
            target_accept: 0.8,
            path_length: 2.0,
            jitter: 0.2,
            max_steps: 256,
            divergence_threshold: 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    /// Kept draws, row-major (iterations x dim), unconstrained scale.
    pub draws: Vec<f64>,
    pub dim: usize,
    pub divergences: usize,
    pub mean_accept: f64,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    t: f64,
    delta: f64,
}

impl DualAveraging {
    fn new(eps: f64, delta: f64) -> Self {
        DualAveraging { mu: (10.0 * eps).ln(), h_bar: 0.0, log_eps_bar: 0.0, t: 0.0, delta }
    }

    fn update(&mut self, accept: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1.0;
        let w = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.delta - accept);
        let log_eps = self.mu - self.t.sqrt() / GAMMA * self.h_bar;
        let eta = self.t.powf(-KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_eps(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Ends of the slow adaptation windows: a 75-iteration initial buffer, a
/// 50-iteration terminal buffer and doubling windows from 25 in between.
fn window_ends(warmup: usize) -> Vec<usize> {
    let (init, term, base) = (75, 50, 25);
    if warmup < init + term + base {
        return Vec::new();
    }
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = base;
    let last = warmup - term;
    while start < last {
        let mut end = start + size;
        if end + 2 * size > last {
            end = last;
        }
        ends.push(end);
        start = end;
        size *= 2;
    }
    ends
}

struct Integrator<'a, F> {
    f: &'a F,
    inv_metric: &'a [f64],
    grad: Vec<f64>,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Integrator<'_, F> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(self.inv_metric).map(|(a, m)| a * a * m).sum::<f64>()
    }

    /// Runs `steps` leapfrog steps in place; returns the final log density.
    fn leapfrog(&mut self, q: &mut [f64], p: &mut [f64], eps: f64, steps: usize, mut lp: f64, grad0: &[f64]) -> f64 {
        self.grad.copy_from_slice(grad0);
        for _ in 0..steps {
            for i in 0..q.len() {
                p[i] += 0.5 * eps * self.grad[i];
                q[i] += eps * self.inv_metric[i] * p[i];
            }
            lp = (self.f)(q, &mut self.grad);
            if !lp.is_finite() {
                return f64::NEG_INFINITY;
            }
            for i in 0..q.len() {
                p[i] += 0.5 * eps * self.grad[i];
            }
        }
        lp
    }
}

fn momentum(rng: &mut StreamRng, inv_metric: &[f64]) -> Vec<f64> {
    inv_metric
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            z / m.sqrt()
        })
        .collect()
}

/// Runs one chain targeting `log_density` from `init`.
pub fn sample_chain<F>(log_density: &F, init: Vec<f64>, settings: &HmcSettings, rng: &mut StreamRng) -> ChainOutput
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let dim = init.len();
    let mut q = init;
    let mut grad = vec![0.0; dim];
    let mut lp = log_density(&q, &mut grad);
    let mut inv_metric = vec![1.0; dim];
    let mut eps = initial_step(log_density, &q, lp, &grad, &inv_metric, rng);
    let mut da = DualAveraging::new(eps, settings.target_accept);
    let ends = window_ends(settings.warmup);
    let mut wsum = vec![0.0; dim];
    let mut wsq = vec![0.0; dim];
    let mut wn = 0usize;

    let total = settings.warmup + settings.iterations;
    let mut draws = Vec::with_capacity(settings.iterations * dim);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut q_new = vec![0.0; dim];
    let mut grad_new = vec![0.0; dim];
    for it in 0..total {
        let warm = it < settings.warmup;
        let mut p = momentum(rng, &inv_metric);
        let steps = {
            let u: f64 = rng.random_range(-1.0..1.0);
            let len = settings.path_length * (1.0 + settings.jitter * u);
            ((len / eps).ceil() as usize).clamp(1, settings.max_steps)
        };
        let mut integ = Integrator { f: log_density, inv_metric: &inv_metric, grad: vec![0.0; dim] };
        let h0 = integ.kinetic(&p) - lp;
        q_new.copy_from_slice(&q);
        let lp_new = integ.leapfrog(&mut q_new, &mut p, eps, steps, lp, &grad);
        let h1 = integ.kinetic(&p) - lp_new;
        let err = h1 - h0;
        let divergent = !err.is_finite() || err > settings.divergence_threshold;
        let accept = if divergent { 0.0 } else { (-err).exp().min(1.0) };
        if !divergent && rng.random::<f64>() < accept {
            q.copy_from_slice(&q_new);
            grad_new.copy_from_slice(&integ.grad);
            std::mem::swap(&mut grad, &mut grad_new);
            lp = lp_new;
        }
        if warm {
            eps = da.update(accept);
            if it >= 75 && !ends.is_empty() && it < *ends.last().unwrap() {
                wn += 1;
                for i in 0..dim {
                    wsum[i] += q[i];
                    wsq[i] += q[i] * q[i];
                }
            }
            if ends.contains(&(it + 1)) && wn > 1 {
                let n = wn as f64;
                for i in 0..dim {
                    let m = wsum[i] / n;
                    let var = (wsq[i] - n * m * m) / (n - 1.0);
                    inv_metric[i] = (n / (n + 5.0)) * var.max(0.0) + 1e-3 * (5.0 / (n + 5.0));
                }
                wsum.iter_mut().for_each(|v| *v = 0.0);
                wsq.iter_mut().for_each(|v| *v = 0.0);
                wn = 0;
                eps = initial_step(log_density, &q, lp, &grad, &inv_metric, rng);
                da = DualAveraging::new(eps, settings.target_accept);
            }
            if it + 1 == settings.warmup {
                eps = da.final_eps();
            }
        } else {
            if divergent {
                divergences += 1;
            }
            accept_sum += accept;
            draws.extend_from_slice(&q);
        }
    }
    ChainOutput {
        draws,
        dim,
        divergences,
        mean_accept: accept_sum / settings.iterations.max(1) as f64,
        step_size: eps,
        inv_metric,
    }
}

/// Doubles or halves a trial step until a single leapfrog step crosses an
/// acceptance probability of one half.
fn initial_step<F>(f: &F, q: &[f64], lp: f64, grad: &[f64], inv_metric: &[f64], rng: &mut StreamRng) -> f64
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let mut eps: f64 = 1.0;
    let p0 = momentum(rng, inv_metric);
    let mut integ = Integrator { f, inv_metric, grad: vec![0.0; q.len()] };
    let h0 = integ.kinetic(&p0) - lp;
    let trial = |eps: f64, integ: &mut Integrator<'_, F>| {
        let mut qq = q.to_vec();
        let mut pp = p0.clone();
        let l = integ.leapfrog(&mut qq, &mut pp, eps, 1, lp, grad);
        let h = integ.kinetic(&pp) - l;
        if h.is_finite() {
            h0 - h
        } else {
            f64::NEG_INFINITY
        }
    };
    let first = trial(eps, &mut integ);
    let dir = if first > (0.5f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..50 {
        let d = trial(eps, &mut integ);
        if dir * d <= dir * (0.5f64).ln() {
            break;
        }
        eps *= 2f64.powf(dir);
    }
    eps.clamp(1e-8, 10.0)
}
