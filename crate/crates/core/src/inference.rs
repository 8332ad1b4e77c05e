//! Bayes factor of the linear against the nonlinear model, and exact i.i.d.
//! draws from the joint posterior of `(xi, sigma2, gamma)` under the
//! nonlinear model.
//!
//! Since `gamma` and `sigma2` integrate out analytically, the nonlinear
//! marginal is a one-dimensional integral over the half-Cauchy prior of `xi`.
//! With `xi = s tan(pi u / 2)` the prior becomes uniform on `u in (0, 1)`:
//!
//! ```text
//! m1(y) = ∫_0^∞ m(y | xi) pi(xi) dxi = ∫_0^1 m(y | s tan(pi u / 2)) du
//! ```
//!
//! which is evaluated either by Gauss-Legendre quadrature in `u` or by
//! averaging `m(y | xi)` over prior draws.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{logsumexp, UnitRule};
use crate::model::{
    conditional, log_marginal_given_xi, validate_dataset, Dataset, IntegratedLikelihoodParts,
    TestConfig,
};

/// RNG stream reserved for importance sampling.
const IS_STREAM: u64 = 0;
/// RNG stream reserved for posterior parameter draws.
const POSTERIOR_STREAM: u64 = 1;

/// Half-Cauchy distribution on `[0, ∞)` with scale `s`; its median is `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCauchy {
    scale: f64,
}

impl HalfCauchy {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "half-Cauchy scale must be positive, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn pdf(&self, xi: f64) -> f64 {
        if xi < 0.0 {
            return 0.0;
        }
        let r = xi / self.scale;
        2.0 / (PI * self.scale * (1.0 + r * r))
    }

    pub fn ln_pdf(&self, xi: f64) -> f64 {
        self.pdf(xi).ln()
    }

    pub fn cdf(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        (xi / self.scale).atan() / FRAC_PI_2
    }

    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "half-Cauchy quantile needs u in (0, 1), got {u}"
            )));
        }
        Ok(self.scale * (FRAC_PI_2 * u).tan())
    }

    pub fn median(&self) -> f64 {
        self.scale
    }
}

impl Distribution<f64> for HalfCauchy {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.scale * (FRAC_PI_2 * u).tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quadrature,
    Importance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDiagnostics {
    /// Number of `xi` evaluations that needed diagonal jitter.
    pub jitter_events: usize,
    #[serde(with = "crate::float_serde::option")]
    pub max_jitter: Option<f64>,
    /// Effective sample size of the importance weights.
    #[serde(with = "crate::float_serde::option")]
    pub ess: Option<f64>,
    /// Importance draws dropped after a numerical failure.
    pub failed_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorResult {
    /// `log B01 = log m0 - log m1`; positive values favor linearity.
    #[serde(with = "crate::float_serde")]
    pub log_bf01: f64,
    #[serde(with = "crate::float_serde")]
    pub log_m0: f64,
    #[serde(with = "crate::float_serde")]
    pub log_m1: f64,
    pub method: Method,
    pub s_xi: f64,
    /// Monte Carlo standard error of `log m1` (importance sampling only).
    #[serde(with = "crate::float_serde::option")]
    pub mc_se: Option<f64>,
    pub n_eval: usize,
    pub diagnostics: EstimatorDiagnostics,
}

impl BayesFactorResult {
    pub fn bf01(&self) -> f64 {
        self.log_bf01.exp()
    }

    /// Posterior probabilities of (linear, nonlinear) under equal prior odds.
    pub fn posterior_model_probs(&self) -> (f64, f64) {
        posterior_model_probs(self.log_bf01)
    }
}

/// `(P(M0 | y), P(M1 | y))` from `log B01` with equal prior model probabilities.
pub fn posterior_model_probs(log_bf01: f64) -> (f64, f64) {
    let p1 = 1.0 / (1.0 + log_bf01.exp());
    let p0 = 1.0 / (1.0 + (-log_bf01).exp());
    (p0, p1)
}

fn jitter_summary<'a>(parts: impl Iterator<Item = &'a IntegratedLikelihoodParts>) -> (usize, Option<f64>) {
    parts.filter_map(|p| p.jitter).fold((0, None), |(n, m), j| {
        (n + 1, Some(m.map_or(j, |m: f64| m.max(j))))
    })
}

/// Conditional marginals at the quadrature nodes of the `u` transform.
#[derive(Debug, Clone)]
pub struct XiGrid {
    pub s_xi: f64,
    pub rule: UnitRule,
    pub parts: Vec<IntegratedLikelihoodParts>,
}

impl XiGrid {
    pub fn evaluate(d: &Dataset, cfg: &TestConfig) -> Result<Self> {
        cfg.validate()?;
        let rule = UnitRule::new(cfg.n_quad)?;
        let prior = HalfCauchy::new(cfg.s_xi)?;
        let xis: Vec<f64> = rule
            .nodes
            .iter()
            .map(|&u| prior.inverse_cdf(u))
            .collect::<Result<_>>()?;
        // Indexed collect keeps node order, so any thread count gives the same sum.
        let parts = xis
            .par_iter()
            .map(|&xi| log_marginal_given_xi(d, cfg, xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            s_xi: cfg.s_xi,
            rule,
            parts,
        })
    }

    pub fn log_m1(&self) -> f64 {
        let terms: Vec<f64> = self
            .parts
            .iter()
            .zip(&self.rule.weights)
            .map(|(p, w)| w.ln() + p.log_marginal)
            .collect();
        logsumexp(&terms)
    }

    /// Piecewise-constant posterior of `u`: cell `j` spans the cumulative
    /// quadrature weights around node `j` and carries mass `w_j m(y | xi_j)`.
    pub fn posterior(&self) -> XiPosterior {
        let n = self.rule.len();
        let mut bounds = Vec::with_capacity(n + 1);
        bounds.push(0.0);
        let mut acc = 0.0;
        for w in &self.rule.weights {
            acc += w;
            bounds.push(acc);
        }
        // The weights sum to 1 only up to rounding.
        for b in bounds.iter_mut() {
            *b /= acc;
        }
        let log_mass: Vec<f64> = self
            .parts
            .iter()
            .zip(&self.rule.weights)
            .map(|(p, w)| w.ln() + p.log_marginal)
            .collect();
        let total = logsumexp(&log_mass);
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for lm in &log_mass {
            acc += (lm - total).exp();
            cum.push(acc);
        }
        for c in cum.iter_mut() {
            *c /= acc;
        }
        XiPosterior {
            s_xi: self.s_xi,
            bounds,
            cum,
        }
    }
}

/// Grid approximation of `p(xi | y)` used for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct XiPosterior {
    s_xi: f64,
    bounds: Vec<f64>,
    cum: Vec<f64>,
}

impl XiPosterior {
    fn u_to_xi(&self, u: f64) -> f64 {
        self.s_xi * (FRAC_PI_2 * u).tan()
    }

    /// Posterior CDF of `xi` under the grid approximation.
    pub fn cdf(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let u = (xi / self.s_xi).atan() / FRAC_PI_2;
        let j = self.bounds.partition_point(|&b| b <= u).clamp(1, self.bounds.len() - 1) - 1;
        let width = self.bounds[j + 1] - self.bounds[j];
        let frac = ((u - self.bounds[j]) / width).clamp(0.0, 1.0);
        self.cum[j] + frac * (self.cum[j + 1] - self.cum[j])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.sample(Open01);
        let v: f64 = rng.sample(Open01);
        let j = self
            .cum
            .partition_point(|&c| c < p)
            .clamp(1, self.cum.len() - 1)
            - 1;
        let u = self.bounds[j] + v * (self.bounds[j + 1] - self.bounds[j]);
        self.u_to_xi(u.min(1.0 - f64::EPSILON))
    }
}

/// `log B01` with the nonlinear marginal from Gauss-Legendre quadrature in `u`.
pub fn log_bf01_quadrature(d: &Dataset, cfg: &TestConfig) -> Result<BayesFactorResult> {
    validate_dataset(d)?;
    let grid = XiGrid::evaluate(d, cfg)?;
    let log_m0 = log_marginal_given_xi(d, cfg, 0.0)?.log_marginal;
    let log_m1 = grid.log_m1();
    let (jitter_events, max_jitter) = jitter_summary(grid.parts.iter());
    Ok(BayesFactorResult {
        log_bf01: log_m0 - log_m1,
        log_m0,
        log_m1,
        method: Method::Quadrature,
        s_xi: cfg.s_xi,
        mc_se: None,
        n_eval: grid.parts.len(),
        diagnostics: EstimatorDiagnostics {
            jitter_events,
            max_jitter,
            ..Default::default()
        },
    })
}

/// `log B01` with the nonlinear marginal estimated by averaging `m(y | xi)`
/// over `cfg.n_is` draws from the half-Cauchy prior.
pub fn log_bf01_importance(d: &Dataset, cfg: &TestConfig) -> Result<BayesFactorResult> {
    validate_dataset(d)?;
    cfg.validate()?;
    let prior = HalfCauchy::new(cfg.s_xi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(IS_STREAM);
    let xis: Vec<f64> = (0..cfg.n_is).map(|_| prior.sample(&mut rng)).collect();
    let evals: Vec<Result<IntegratedLikelihoodParts>> = xis
        .par_iter()
        .map(|&xi| log_marginal_given_xi(d, cfg, xi))
        .collect();

    let mut failed = 0;
    let mut ok = Vec::with_capacity(evals.len());
    for e in evals {
        match e {
            Ok(p) => ok.push(p),
            Err(e) if e.is_numerical() => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(Error::AllDrawsFailed(cfg.n_is));
    }

    let logw: Vec<f64> = ok.iter().map(|p| p.log_marginal).collect();
    let t = logw.len() as f64;
    let log_m1 = logsumexp(&logw) - t.ln();

    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let mean = w.iter().sum::<f64>() / t;
    let var = if w.len() > 1 {
        w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    let mc_se = var.sqrt() / (mean * t.sqrt());
    let ess = w.iter().sum::<f64>().powi(2) / w.iter().map(|v| v * v).sum::<f64>();

    let log_m0 = log_marginal_given_xi(d, cfg, 0.0)?.log_marginal;
    let (jitter_events, max_jitter) = jitter_summary(ok.iter());
    Ok(BayesFactorResult {
        log_bf01: log_m0 - log_m1,
        log_m0,
        log_m1,
        method: Method::Importance,
        s_xi: cfg.s_xi,
        mc_se: Some(mc_se),
        n_eval: ok.len(),
        diagnostics: EstimatorDiagnostics {
            jitter_events,
            max_jitter,
            ess: Some(ess),
            failed_draws: failed,
        },
    })
}

/// One joint draw of the nonlinear-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub xi: f64,
    pub sigma2: f64,
    pub gamma: Vec<f64>,
}

/// `t` i.i.d. draws from `p(xi, sigma2, gamma | y)` under the nonlinear model.
///
/// `xi` comes from the grid posterior; then
/// `sigma2 | xi ~ InvGamma((n - k)/2, S(xi)/2)` and
/// `gamma | sigma2, xi ~ N(gamma_hat(xi), sigma2 (Z'V⁻¹Z)⁻¹)`.
pub fn sample_posterior(d: &Dataset, cfg: &TestConfig, t: usize) -> Result<Vec<PosteriorSample>> {
    validate_dataset(d)?;
    let grid = XiGrid::evaluate(d, cfg)?;
    sample_posterior_on(d, cfg, &grid.posterior(), t)
}

pub(crate) fn sample_posterior_on(
    d: &Dataset,
    cfg: &TestConfig,
    xi_post: &XiPosterior,
    t: usize,
) -> Result<Vec<PosteriorSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(POSTERIOR_STREAM);
    let xis: Vec<f64> = (0..t).map(|_| xi_post.sample(&mut rng)).collect();
    let conds = xis
        .par_iter()
        .map(|&xi| conditional(d, cfg.g, xi, &cfg.jitter))
        .collect::<Result<Vec<_>>>()?;

    let shape = 0.5 * (d.n() - d.k()) as f64;
    let gamma_dist = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(t);
    for c in conds {
        let sigma2 = 0.5 * c.parts.s / gamma_dist.sample(&mut rng);
        let gamma = match &c.g_factor {
            None => Vec::new(),
            Some(gchol) => {
                let z = DVector::from_fn(d.k(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let w = gchol
                    .l_dirty()
                    .tr_solve_lower_triangular(&z)
                    .ok_or_else(|| Error::Numerical {
                        xi: c.parts.xi,
                        context: "triangular solve for gamma draw".into(),
                    })?;
                c.parts
                    .gamma_hat
                    .iter()
                    .zip(w.iter())
                    .map(|(g, w)| g + sigma2.sqrt() * w)
                    .collect()
            }
        };
        out.push(PosteriorSample {
            xi: c.parts.xi,
            sigma2,
            gamma,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_v;

    #[test]
    fn half_cauchy_basics() {
        let hc = HalfCauchy::new(0.4).unwrap();
        assert!((hc.inverse_cdf(0.5).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(hc.median(), 0.4);
        assert!((hc.pdf(0.0) - 2.0 / (PI * 0.4)).abs() < 1e-15);
        assert!((hc.cdf(hc.inverse_cdf(0.83).unwrap()) - 0.83).abs() < 1e-14);
        assert_eq!(hc.pdf(-1.0), 0.0);
        assert!(hc.inverse_cdf(0.0).is_err());
        assert!(hc.inverse_cdf(1.0).is_err());
        assert!(hc.inverse_cdf(f64::NAN).is_err());
        assert!(HalfCauchy::new(0.0).is_err());
    }

    #[test]
    fn half_cauchy_sampler_median() {
        let hc = HalfCauchy::new(1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs: Vec<f64> = (0..100_000).map(|_| hc.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let median = 0.5 * (xs[49_999] + xs[50_000]);
        assert!((median / 1.7 - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn half_cauchy_pdf_integrates_to_cdf() {
        let hc = HalfCauchy::new(0.7).unwrap();
        let rule = UnitRule::new(200).unwrap();
        // ∫_0^2 pdf = cdf(2)
        let int: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(u, w)| 2.0 * w * hc.pdf(2.0 * u))
            .sum();
        assert!((int - hc.cdf(2.0)).abs() < 1e-12);
    }

    #[test]
    fn posterior_probabilities_match_odds() {
        let (p0, p1) = posterior_model_probs(0.917);
        assert!((p0 - 0.714).abs() < 5e-4);
        assert!((p0 + p1 - 1.0).abs() < 1e-15);
        let (p0, p1) = posterior_model_probs(-800.0);
        assert_eq!(p0, 0.0);
        assert_eq!(p1, 1.0);
    }

    // A single nonzero predictor value makes K ∘ xx' independent of xi.
    #[test]
    fn flat_integrand_gives_zero_log_bf() {
        let x = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let y = vec![0.2, -0.4, 1.1, 0.9, 0.3, -0.8];
        let d = Dataset::without_covariates(y, x).unwrap();
        let cfg = TestConfig::for_dataset(&d, 1.0);
        let r = log_bf01_quadrature(&d, &cfg).unwrap();
        assert!(r.log_bf01.abs() < 1e-12, "{}", r.log_bf01);
        assert_eq!(build_v(&d, cfg.g, 0.0), build_v(&d, cfg.g, 5.0));
    }

    #[test]
    fn posterior_xi_cdf_is_monotone_and_normalized() {
        let x: Vec<f64> = (0..30).map(|i| -3.0 + 6.0 * (i as f64 + 0.5) / 30.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.8 * v * (-v * v / 2.0).exp() + 0.01 * v.cos()).collect();
        let d = Dataset::without_covariates(y, x).unwrap();
        let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
        let post = XiGrid::evaluate(&d, &cfg).unwrap().posterior();
        let mut prev = 0.0;
        for i in 1..200 {
            let c = post.cdf(i as f64 * 0.05);
            assert!(c >= prev);
            prev = c;
        }
        assert!(post.cdf(1e12) > 1.0 - 1e-9);
        assert_eq!(post.cdf(0.0), 0.0);
    }

    fn bumpy() -> Dataset {
        let x: Vec<f64> = (0..40).map(|i| -3.0 + 6.0 * (i as f64 + 0.5) / 40.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 0.6 * v * (-v * v / 2.0).exp() + 0.05 * ((i * 37 % 11) as f64 - 5.0) / 5.0)
            .collect();
        Dataset::without_covariates(y, x).unwrap().with_intercept()
    }

    #[test]
    fn sigma2_draws_match_inverse_gamma_mean_at_fixed_xi() {
        let d = bumpy();
        let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
        let xi = 0.8;
        let u = (xi / cfg.s_xi).atan() / FRAC_PI_2;
        let point = XiPosterior {
            s_xi: cfg.s_xi,
            bounds: vec![u, u],
            cum: vec![0.0, 1.0],
        };
        let t = 20_000;
        let draws = sample_posterior_on(&d, &cfg, &point, t).unwrap();
        assert!(draws.iter().all(|s| (s.xi - xi).abs() < 1e-12));
        let s = conditional(&d, cfg.g, xi, &cfg.jitter).unwrap().parts.s;
        let shape = 0.5 * (d.n() - d.k()) as f64;
        let expect = 0.5 * s / (shape - 1.0);
        let v: Vec<f64> = draws.iter().map(|p| p.sigma2).collect();
        let mean = v.iter().sum::<f64>() / t as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd / (t as f64).sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn xi_sampler_matches_grid_cdf() {
        let d = bumpy();
        let cfg = TestConfig::for_dataset(&d, (-1.0f64).exp());
        let post = XiGrid::evaluate(&d, &cfg).unwrap().posterior();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = 100_000;
        let mut xs: Vec<f64> = (0..t).map(|_| post.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = post.cdf(x);
                (c - i as f64 / t as f64).abs().max((c - (i + 1) as f64 / t as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }
}
