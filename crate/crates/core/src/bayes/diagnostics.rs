//! Split R-hat and effective sample size across chains.

/// `chains[c][t]` is draw `t` of chain `c`; all chains equally long.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (0..n)
        .map(|lag| (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / n as f64)
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    if n < 4 {
        return f64::NAN;
    }
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let nf = n as f64;
    let w = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n = if m > 1.0 { means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if var_plus == 0.0 {
        return m * nf;
    }
    let rho = |t: usize| 1.0 - (w - acov.iter().map(|a| a[t]).sum::<f64>() / m) / var_plus;
    let mut pairs = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let s = rho(t) + rho(t + 1);
        if s < 0.0 {
            break;
        }
        pairs.push(s);
        t += 2;
    }
    for k in 1..pairs.len() {
        if pairs[k] > pairs[k - 1] {
            pairs[k] = pairs[k - 1];
        }
    }
    let tau = -1.0 + 2.0 * pairs.iter().sum::<f64>();
    let tau = tau.max(1.0 / (m * nf).log10());
    m * nf / tau
}
