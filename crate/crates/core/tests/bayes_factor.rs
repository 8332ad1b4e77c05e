//! Estimator cross-checks and invariances of the linearity Bayes factor.

use gplinear::{
    generate, log_bf01_importance, log_bf01_quadrature, Dataset, Kind, Scenario, TestConfig,
};

fn toy5() -> Dataset {
    let x = vec![-1.3, -0.4, 0.2, 0.9, 1.6];
    let y = vec![0.4, -0.2, 0.5, 1.4, 1.1];
    Dataset::without_covariates(y, x).unwrap().with_intercept()
}

fn bump(h: f64, n: usize, seed: u64) -> Dataset {
    generate(&Scenario::new(Kind::Bump, h, n, seed)).unwrap()
}

#[test]
fn quadrature_agrees_with_large_monte_carlo() {
    let d = toy5();
    let cfg = TestConfig {
        n_is: 1_000_000,
        ..TestConfig::for_dataset(&d, (-1.0f64).exp())
    };
    let q = log_bf01_quadrature(&d, &cfg).unwrap();
    let mc = log_bf01_importance(&d, &cfg).unwrap();
    let se = mc.mc_se.unwrap();
    assert!((q.log_bf01 - mc.log_bf01).abs() <= 3.0 * se, "{} vs {} (se {se})", q.log_bf01, mc.log_bf01);
    assert_eq!(mc.diagnostics.failed_draws, 0);
}

#[test]
fn quadrature_converges_in_nodes() {
    for (h, seed) in [(0.0, 1), (0.2, 2), (0.5, 3)] {
        let d = bump(h, 50, seed);
        let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
        let a = log_bf01_quadrature(&d, &cfg).unwrap();
        let b = log_bf01_quadrature(&d, &TestConfig { n_quad: 401, ..cfg }).unwrap();
        assert!((a.log_m1 - b.log_m1).abs() < 1e-6, "h={h}: {} vs {}", a.log_m1, b.log_m1);
    }
}

#[test]
fn importance_is_reproducible_and_consistent() {
    let d = bump(0.2, 40, 7);
    let cfg = TestConfig {
        n_is: 5000,
        ..TestConfig::for_dataset(&d, 1.0)
    };
    let a = log_bf01_importance(&d, &cfg).unwrap();
    let b = log_bf01_importance(&d, &cfg).unwrap();
    assert_eq!(a.log_bf01.to_bits(), b.log_bf01.to_bits());
    assert_eq!(a.log_bf01, a.log_m0 - a.log_m1);
    let q = log_bf01_quadrature(&d, &cfg).unwrap();
    assert!((a.log_bf01 - q.log_bf01).abs() <= (3.0 * a.mc_se.unwrap()).max(0.05));
    let ess = a.diagnostics.ess.unwrap();
    assert!(ess > 1.0 && ess <= 5000.0);
}

#[test]
fn mc_error_halves_with_four_times_the_draws() {
    let d = bump(0.1, 30, 11);
    let base = TestConfig::for_dataset(&d, (-1.0f64).exp());
    let mean_se = |t: usize| -> f64 {
        (0..50u64)
            .map(|r| {
                let cfg = TestConfig {
                    n_is: t,
                    seed: 1000 + r,
                    ..base.clone()
                };
                log_bf01_importance(&d, &cfg).unwrap().mc_se.unwrap()
            })
            .sum::<f64>()
            / 50.0
    };
    let ratio = mean_se(4000) / mean_se(1000);
    assert!((ratio - 0.5).abs() <= 0.15, "ratio {ratio}");
}

#[test]
fn outcome_scale_invariance() {
    let d = bump(0.3, 40, 5);
    let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
    let a = log_bf01_quadrature(&d, &cfg).unwrap();
    let b = log_bf01_quadrature(&d.scale_y(3.7), &cfg).unwrap();
    assert!((a.log_bf01 - b.log_bf01).abs() < 1e-8);
}

#[test]
fn predictor_scale_equivariance() {
    let d = bump(0.3, 40, 5).with_intercept();
    let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
    let x2: Vec<f64> = d.x.iter().map(|v| 2.0 * v).collect();
    let d2 = Dataset::new(d.y.as_slice().to_vec(), x2, d.z.clone()).unwrap();
    let cfg2 = cfg.clone().with_s_xi(cfg.s_xi / 2.0);
    let a = log_bf01_quadrature(&d, &cfg).unwrap();
    let b = log_bf01_quadrature(&d2, &cfg2).unwrap();
    assert!((a.log_bf01 - b.log_bf01).abs() < 1e-8, "{} vs {}", a.log_bf01, b.log_bf01);
}

#[test]
fn validation_errors_surface() {
    let d = Dataset::without_covariates(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]).unwrap();
    let cfg = TestConfig::for_dataset(&d, 1.0).with_s_xi(1.0);
    let err = log_bf01_quadrature(&d, &cfg).unwrap_err();
    assert!(err.is_validation());
}
