//! Posterior parameter and function draws on simulated data.

use gplinear::{
    draw_functions_posterior, generate, sample_posterior, Dataset, Kind, Scenario, TestConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn intercept_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let x: Vec<f64> = (0..200).map(|i| -2.0 + 4.0 * i as f64 / 199.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.7 * v + noise.sample(&mut rng)).collect();
    let d = Dataset::without_covariates(y, x).unwrap().with_intercept();
    let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
    let draws = sample_posterior(&d, &cfg, 2000).unwrap();
    let g: Vec<f64> = draws.iter().map(|s| s.gamma[0]).collect();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let sd = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (g.len() - 1) as f64).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * sd, "mean {mean} sd {sd}");
    assert!(draws.iter().all(|s| s.sigma2 > 0.0 && s.xi >= 0.0));
}

#[test]
fn strong_bump_moves_xi_away_from_zero() {
    let d = generate(&Scenario::new(Kind::Bump, 0.5, 200, 8)).unwrap();
    let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
    let draws = sample_posterior(&d, &cfg, 4000).unwrap();
    let low = draws.iter().filter(|s| s.xi < 0.1).count() as f64 / 4000.0;
    assert!(low < 0.05, "mass below 0.1: {low}");
}

/// Pointwise median and SD of the posterior mean-function draws at the
/// observed points of an h = 0.5 bump dataset.
fn bump_summary(seed: u64, g_factor: f64) -> Vec<(f64, f64, f64)> {
    let d = generate(&Scenario::new(Kind::Bump, 0.5, 200, seed)).unwrap();
    let mut cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
    cfg.g *= g_factor;
    let t = 400;
    let samples = sample_posterior(&d, &cfg, t).unwrap();
    let grid = d.x.as_slice().to_vec();
    let draws = draw_functions_posterior(&d, &cfg, &samples, &grid).unwrap();
    grid.iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut col: Vec<f64> = draws.mean_fn.column(j).iter().cloned().collect();
            let mean = col.iter().sum::<f64>() / t as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64).sqrt();
            col.sort_by(f64::total_cmp);
            (x, 0.5 * (col[t / 2 - 1] + col[t / 2]), sd)
        })
        .collect()
}

// With g = n the prior SD of beta is about sigma / sd(x), roughly a tenth of
// the bump height, so the peak is visibly shrunk but the shape is kept.
#[test]
fn posterior_mean_function_follows_the_bump_shape() {
    let s = bump_summary(12, 1.0);
    let peak = s.iter().map(|(x, _, _)| (Kind::Bump.beta(0.5, *x) * x).abs()).fold(0.0, f64::max);
    for &(x, median, _) in &s {
        let truth = Kind::Bump.beta(0.5, x) * x;
        assert!((median - truth).abs() < 0.2 * peak, "x={x}: {median} vs {truth}");
    }
}

#[test]
fn posterior_mean_function_tracks_the_bump_within_three_sds() {
    for seed in [12, 13, 14] {
        let worst = bump_summary(seed, 10.0)
            .iter()
            .map(|&(x, median, sd)| (median - Kind::Bump.beta(0.5, x) * x).abs() / sd)
            .fold(0.0, f64::max);
        assert!(worst < 3.0, "seed {seed}: max error in posterior SDs {worst}");
    }
}

#[test]
fn posterior_draws_are_reproducible() {
    let d = generate(&Scenario::new(Kind::Step, 0.3, 30, 4)).unwrap();
    let cfg = TestConfig::for_dataset(&d, 1.0);
    let a = sample_posterior(&d, &cfg, 20).unwrap();
    let b = sample_posterior(&d, &cfg, 20).unwrap();
    assert_eq!(a, b);
    let grid = d.x.as_slice().to_vec();
    let fa = draw_functions_posterior(&d, &cfg, &a, &grid).unwrap();
    let fb = draw_functions_posterior(&d, &cfg, &b, &grid).unwrap();
    assert_eq!(fa.slope, fb.slope);
}
