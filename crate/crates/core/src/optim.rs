//! Limited-memory BFGS with backtracking line search.

use std::collections::VecDeque;

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub rel_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iter: 2000, grad_tol: 1e-6, rel_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and writes the gradient.
pub fn minimize(mut f: impl FnMut(&[f64], &mut [f64]) -> f64, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];
    if !fx.is_finite() {
        return LbfgsResult { x, value: fx, iterations: 0, converged: false };
    }
    for iter in 0..opts.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.grad_tol {
            return LbfgsResult { x, value: fx, iterations: iter, converged: true };
        }
        // Two-loop recursion.
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= alpha[k] * yi);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / dot(&g, &g).sqrt().max(1.0),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha[k] - beta) * si);
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            x_new.iter_mut().enumerate().for_each(|(i, v)| *v = x[i] + step * dir[i]);
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if hist.len() == opts.memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                let decrease = fx - f_new;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                if decrease <= opts.rel_tol * fx.abs().max(1.0) {
                    return LbfgsResult { x, value: fx, iterations: iter + 1, converged: true };
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return LbfgsResult { x, value: fx, iterations: iter, converged: false };
        }
    }
    LbfgsResult { x, value: fx, iterations: opts.max_iter, converged: false }
}
