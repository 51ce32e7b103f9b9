mod common;

use std::f64::consts::PI;

use bioprofile::bayes::{
    BayesModel, BayesSpec, Layout, McmcSettings, Parameterization, Posterior, SparseDesign, Variant,
};
use bioprofile::math::sigmoid;
use bioprofile::rng::stream;
use bioprofile::schema::{ColumnKind, EncodeOptions, Encoder};
use bioprofile::smooth::{GamModel, GamParams, Penalty};
use bioprofile::{DesignMatrix, FeatureStage};
use common::{max_rel_err, study_config, study_data};
use rand::Rng;

fn hierarchical_design(n: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
    let (ds, _) = study_data(&study_config(n, seed));
    let enc = Encoder::fit(&ds, FeatureStage::Stage12, EncodeOptions::hierarchical(10)).unwrap();
    (enc.transform(ds.records()), ds.labels())
}

fn spec(variant: Variant, par: Parameterization) -> BayesSpec {
    BayesSpec { parameterization: par, ..BayesSpec::new(variant) }
}

fn all_specs() -> Vec<BayesSpec> {
    let mut out = Vec::new();
    for v in [Variant::Normal, Variant::Lasso] {
        for p in [Parameterization::Centered, Parameterization::NonCentered] {
            out.push(spec(v, p));
        }
    }
    out
}

fn numeric_gradient(post: &Posterior<'_>, theta: &[f64]) -> Vec<f64> {
    let mut scratch = vec![0.0; theta.len()];
    (0..theta.len())
        .map(|j| {
            let h = 1e-5;
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (post.log_density(&up, &mut scratch) - post.log_density(&dn, &mut scratch)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn log_posterior_gradient_matches_finite_differences() {
    let (x, y) = hierarchical_design(300, 1);
    let sparse = SparseDesign::new(&x, &y).unwrap();
    let mut rng = stream(2, &[]);
    for s in all_specs() {
        let layout = Layout::build(&x, &s);
        let post = Posterior::new(&s, &layout, &sparse).unwrap();
        for _ in 0..10 {
            let theta: Vec<f64> = (0..post.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut grad = vec![0.0; theta.len()];
            post.log_density(&theta, &mut grad);
            let err = max_rel_err(&grad, &numeric_gradient(&post, &theta));
            assert!(err < 1e-5, "{:?}: {err}", s);
        }
    }
}

fn normal_log(x: f64, sd: f64) -> f64 {
    -(x * x) / (2.0 * sd * sd) - (sd * (2.0 * PI).sqrt()).ln()
}

fn half_cauchy_log(sigma: f64, scale: f64) -> f64 {
    (2.0 / (PI * scale * (1.0 + (sigma / scale).powi(2)))).ln()
}

#[test]
fn empty_data_gives_prior_density() {
    let (x, _) = hierarchical_design(300, 3);
    let empty = x.select_rows(&[]);
    let sparse = SparseDesign::new(&empty, &[]).unwrap();
    let mut rng = stream(4, &[]);
    for v in [Variant::Normal, Variant::Lasso] {
        let s = spec(v, Parameterization::Centered);
        let layout = Layout::build(&x, &s);
        let post = Posterior::new(&s, &layout, &sparse).unwrap();
        let theta: Vec<f64> = (0..post.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = post.log_density(&theta, &mut vec![0.0; theta.len()]);

        // Densities of the natural parameters plus log-Jacobians of the
        // log transforms.
        let off = layout.scale_offset();
        let scale = |name: &str| layout.scales.iter().position(|s| s.0 == name).map(|k| theta[off + k].exp());
        let mut want = normal_log(theta[0], 10.0);
        let sigma_s = scale("sigma_s").unwrap();
        want += half_cauchy_log(sigma_s, 1.0) + sigma_s.ln();
        for (j, c) in x.columns().iter().enumerate() {
            let group = match (&c.kind, c.source) {
                (ColumnKind::Spline(_), _) => "age_spline".to_owned(),
                (_, Some(t)) => t.name().to_owned(),
                _ => unreachable!(),
            };
            let sd = match v {
                Variant::Normal if group == "age_spline" => scale("sigma_a").unwrap(),
                Variant::Normal => sigma_s,
                Variant::Lasso => sigma_s * scale(&format!("sigma2[{group}]")).unwrap().sqrt(),
            };
            want += normal_log(theta[1 + j], sd);
        }
        match v {
            Variant::Normal => {
                let a = scale("sigma_a").unwrap();
                want += half_cauchy_log(a, 2.5) + a.ln();
            }
            Variant::Lasso => {
                for (k, (name, _)) in layout.scales.iter().enumerate() {
                    if name.starts_with("sigma2") {
                        let v2 = theta[off + k].exp();
                        want += -v2 + v2.ln();
                    }
                }
            }
        }
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{v:?}: {got} vs {want}");
    }
}

#[test]
fn zeroed_spline_columns_leave_only_prior_gradient() {
    let (mut x, y) = hierarchical_design(300, 5);
    let spline: Vec<usize> =
        (0..x.n_cols()).filter(|&j| matches!(x.columns()[j].kind, ColumnKind::Spline(_))).collect();
    for i in 0..x.n_rows() {
        for &j in &spline {
            x.set(i, j, 0.0);
        }
    }
    let s = spec(Variant::Normal, Parameterization::Centered);
    let layout = Layout::build(&x, &s);
    let with_data = SparseDesign::new(&x, &y).unwrap();
    let no_data = SparseDesign::new(&x.select_rows(&[]), &[]).unwrap();
    let a = Posterior::new(&s, &layout, &with_data).unwrap();
    let b = Posterior::new(&s, &layout, &no_data).unwrap();
    let mut rng = stream(6, &[]);
    let theta: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (mut ga, mut gb) = (vec![0.0; theta.len()], vec![0.0; theta.len()]);
    a.log_density(&theta, &mut ga);
    b.log_density(&theta, &mut gb);
    for &j in &spline {
        assert_eq!(ga[1 + j], gb[1 + j]);
    }
}

/// Rows with a single all-zero column, so only the intercept meets the data.
fn intercept_only(y: &[f64]) -> DesignMatrix {
    DesignMatrix::from_rows(&vec![vec![0.0]; y.len()]).unwrap()
}

fn quadrature_mean(y: &[f64]) -> f64 {
    let k = y.iter().sum::<f64>();
    let n = y.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..4001 {
        let mu = -8.0 + 16.0 * i as f64 / 4000.0;
        let lp = k * mu - n * (1.0 + mu.exp()).ln() - mu * mu / 200.0;
        num += mu * lp.exp();
        den += lp.exp();
    }
    num / den
}

#[test]
fn intercept_posterior_matches_quadrature() {
    let y: Vec<f64> = (0..20).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
    let x = intercept_only(&y);
    let m = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Normal), &McmcSettings::new(4, 500, 1000, 11)).unwrap();
    let mean = m.posterior_means()[0];
    assert!((mean - quadrature_mean(&y)).abs() < 0.05, "{mean} vs {}", quadrature_mean(&y));
    assert!(m.diagnostics.rhat.iter().all(|&r| r < 1.05));
    assert!(m.draws.chunks_exact(m.layout.dim()).all(|d| d[2] > 0.0));
}

#[test]
fn longer_runs_do_not_worsen_rhat() {
    let y: Vec<f64> = (0..30).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
    let x = intercept_only(&y);
    let s = BayesSpec::new(Variant::Normal);
    let short = BayesModel::fit(&x, &y, &s, &McmcSettings::new(4, 300, 300, 5)).unwrap();
    let long = BayesModel::fit(&x, &y, &s, &McmcSettings::new(4, 300, 600, 5)).unwrap();
    assert!(long.diagnostics.rhat[0] <= short.diagnostics.rhat[0] + 0.02);
}

#[test]
fn seeds_agree_within_monte_carlo_error() {
    let (x, y) = hierarchical_design(600, 7);
    let s = BayesSpec::new(Variant::Normal);
    let a = BayesModel::fit(&x, &y, &s, &McmcSettings::new(2, 300, 500, 1)).unwrap();
    let b = BayesModel::fit(&x, &y, &s, &McmcSettings::new(2, 300, 500, 2)).unwrap();
    let (ma, mb) = (a.posterior_means(), b.posterior_means());
    let dim = a.layout.dim();
    let sd = |m: &BayesModel, k: usize, mean: f64| {
        let n = m.n_draws() as f64;
        (m.draws.chunks_exact(dim).map(|d| (d[k] - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    // Only the intercept and coefficients; scale parameters have heavy tails.
    for k in 0..=a.layout.n_coef {
        let se_a = sd(&a, k, ma[k]) / a.diagnostics.ess[k].sqrt();
        let se_b = sd(&b, k, mb[k]) / b.diagnostics.ess[k].sqrt();
        let combined = (se_a * se_a + se_b * se_b).sqrt();
        assert!((ma[k] - mb[k]).abs() <= 3.0 * combined + 1e-12, "{}", a.layout.names[k]);
    }
}

#[test]
fn predictions_average_draw_sigmoids() {
    let (x, y) = hierarchical_design(400, 8);
    let mut m = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Lasso), &McmcSettings::new(1, 200, 50, 3)).unwrap();
    let dim = m.layout.dim();
    let p = m.layout.n_coef;
    let test = x.select_rows(&[0, 5, 9]);
    let age = m.age_scaling[0].clone();
    let eta = |d: &[f64], row: &[f64]| {
        let mut e = d[0];
        for j in 0..p {
            let v = if j == age.column { (row[j] - age.mean) / age.sd } else { row[j] };
            e += v * d[1 + j];
        }
        e
    };
    m.draws.truncate(5 * dim);
    let pred = m.predict(&test).unwrap();
    for (i, &got) in pred.iter().enumerate() {
        let want: f64 = m.draws.chunks_exact(dim).map(|d| sigmoid(eta(d, test.row(i)))).sum::<f64>() / 5.0;
        assert!((got - want).abs() < 1e-14);
        assert!(got > 0.0 && got < 1.0);
    }
    m.draws.truncate(dim);
    let one = m.predict(&test).unwrap();
    for (i, &got) in one.iter().enumerate() {
        assert!((got - sigmoid(eta(&m.draws, test.row(i)))).abs() < 1e-15);
    }
    assert!(m.predict(&x.select_columns(&[0])).is_err());
}

#[test]
fn large_fixed_scale_approaches_maximum_likelihood() {
    let mut rng = stream(12, &[]);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(0..2) as f64]).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| if rng.random::<f64>() < sigmoid(-0.5 + r[0] - 0.7 * r[1]) { 1.0 } else { 0.0 })
        .collect();
    let x = DesignMatrix::from_rows(&rows).unwrap();
    let mut s = BayesSpec::new(Variant::Normal);
    s.priors.fixed_shared_sd = Some(100.0);
    let m = BayesModel::fit(&x, &y, &s, &McmcSettings::new(4, 500, 1000, 9)).unwrap();
    // Plug the posterior mean into the linear predictor and compare to the MLE fit.
    let means = m.posterior_means();
    let mle = GamModel::fit(&x, &y, &GamParams { penalty: Penalty::Fixed(0.0), ..GamParams::default() }, 0).unwrap();
    let pm = mle.predict(&x).unwrap();
    let diff = (0..200)
        .map(|i| (sigmoid(means[0] + means[1] * rows[i][0] + means[2] * rows[i][1]) - pm[i]).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 0.02, "{diff}");
}

#[test]
fn lasso_shrinks_noise_at_least_as_hard() {
    let mut rng = stream(13, &[]);
    let n = 400;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.random_range(0..2) as f64).collect()).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| if rng.random::<f64>() < sigmoid(-1.5 + 1.5 * r[0] - 1.2 * r[1]) { 1.0 } else { 0.0 })
        .collect();
    let x = DesignMatrix::from_rows(&rows).unwrap();
    let mc = McmcSettings::new(2, 400, 600, 21);
    let normal = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Normal), &mc).unwrap();
    let lasso = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Lasso), &mc).unwrap();
    let noise = |m: &BayesModel| (3..=10).map(|k| m.posterior_means()[k].abs()).sum::<f64>() / 8.0;
    assert!(noise(&lasso) <= noise(&normal), "{} vs {}", noise(&lasso), noise(&normal));
}

#[test]
fn exchanged_levels_get_equal_effects() {
    // Two indicator columns with identical counts and outcomes.
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..300 {
        let which = i % 3;
        rows.push(vec![(which == 0) as u8 as f64, (which == 1) as u8 as f64]);
        y.push(if (i / 3) % 5 == 0 && which < 2 { 1.0 } else if (i / 3) % 9 == 0 { 1.0 } else { 0.0 });
    }
    let x = DesignMatrix::from_rows(&rows).unwrap();
    let m = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Normal), &McmcSettings::new(4, 400, 1000, 4)).unwrap();
    let means = m.posterior_means();
    let dim = m.layout.dim();
    let mcse = |k: usize| {
        let sd = (m.draws.chunks_exact(dim).map(|d| (d[k] - means[k]).powi(2)).sum::<f64>() / m.n_draws() as f64).sqrt();
        sd / m.diagnostics.ess[k].sqrt()
    };
    assert!((means[1] - means[2]).abs() <= 3.0 * (mcse(1).powi(2) + mcse(2).powi(2)).sqrt());
}

#[test]
fn draws_export_as_csv() {
    let y: Vec<f64> = (0..20).map(|i| if i < 5 { 1.0 } else { 0.0 }).collect();
    let x = intercept_only(&y);
    let m = BayesModel::fit(&x, &y, &BayesSpec::new(Variant::Lasso), &McmcSettings::new(2, 100, 20, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.csv");
    m.write_draws_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 41);
    assert_eq!(lines[0], "chain,draw,mu,coef[x0],sigma_s,sigma2[x0]");
    assert!(lines[40].starts_with("1,19,"));
}
