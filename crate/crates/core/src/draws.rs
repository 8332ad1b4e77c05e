//! Coefficient, mean and slope function draws, and the one-sided tests for a
//! consistently positive or negative effect.
//!
//! A draw is the pair `(beta, beta')` on a point set, sampled jointly from the
//! squared-exponential GP. The mean function is `beta(x) x` and the slope is
//! its derivative `eta(x) = beta(x) + beta'(x) x`.
//!
//! The joint covariance is factored with a pivoted Cholesky built from kernel
//! columns. Every factor column is a combination of kernel sections, so each
//! sampled `beta'` is the exact derivative of the sampled `beta`, however
//! dense the grid.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{sample_posterior, HalfCauchy, PosteriorSample};
use crate::linalg::pivoted_cholesky;
use crate::model::{Dataset, TestConfig};

/// Residual variance (relative to the largest prior variance) below which
/// the joint factor is truncated.
const RANK_TOL: f64 = 1e-13;

const PRIOR_STREAM_BASE: u64 = 1 << 32;
const POSTERIOR_STREAM_BASE: u64 = 2 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Prior,
    Posterior,
}

/// Draws of `beta`, `beta'`, `beta(x) x` and `eta(x)` on a grid. Row `t` of
/// each matrix is draw `t`.
#[derive(Debug, Clone)]
pub struct FunctionDraws {
    pub grid: Vec<f64>,
    pub beta: DMatrix<f64>,
    pub dbeta: DMatrix<f64>,
    pub mean_fn: DMatrix<f64>,
    pub slope: DMatrix<f64>,
    /// Kernel roughness used for each draw.
    pub xi: Vec<f64>,
    pub provenance: Provenance,
}

impl FunctionDraws {
    fn from_rows(grid: Vec<f64>, rows: Vec<(f64, Vec<f64>, Vec<f64>)>, provenance: Provenance) -> Self {
        let (t, m) = (rows.len(), grid.len());
        let beta = DMatrix::from_fn(t, m, |i, j| rows[i].1[j]);
        let dbeta = DMatrix::from_fn(t, m, |i, j| rows[i].2[j]);
        let mean_fn = DMatrix::from_fn(t, m, |i, j| beta[(i, j)] * grid[j]);
        let slope = DMatrix::from_fn(t, m, |i, j| beta[(i, j)] + dbeta[(i, j)] * grid[j]);
        Self {
            grid,
            beta,
            dbeta,
            mean_fn,
            slope,
            xi: rows.into_iter().map(|r| r.0).collect(),
            provenance,
        }
    }

    pub fn n_draws(&self) -> usize {
        self.beta.nrows()
    }
}

/// Sorted distinct values of `x`: the default evaluation grid.
pub fn observed_grid(x: &[f64]) -> Vec<f64> {
    let mut g = x.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// `m` equally spaced points from `lo` to `hi` inclusive.
pub fn dense_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..m)
            .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
            .collect(),
    }
}

/// Unit-scale covariance entry of the stacked vector
/// `[beta(p_0..p_m); beta'(p_0..p_m)]`.
fn joint_entry(points: &[f64], xi2: f64, i: usize, j: usize) -> f64 {
    let m = points.len();
    let d = points[i % m] - points[j % m];
    let r = xi2 * d * d;
    let k = (-0.5 * r).exp();
    match (i >= m, j >= m) {
        (false, false) => k,
        (false, true) => xi2 * d * k,
        (true, false) => -xi2 * d * k,
        (true, true) => xi2 * (1.0 - r) * k,
    }
}

/// Low-rank factor of the unit-scale joint covariance of values and
/// derivatives at `points`.
fn joint_factor(points: &[f64], xi: f64) -> DMatrix<f64> {
    let m = points.len();
    let xi2 = xi * xi;
    let diag: Vec<f64> = (0..2 * m).map(|i| if i < m { 1.0 } else { xi2 }).collect();
    pivoted_cholesky(&diag, RANK_TOL, |j| {
        (0..2 * m).map(|i| joint_entry(points, xi2, i, j)).collect()
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn std_normal_vec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("evaluation grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("evaluation grid".into()));
    }
    Ok(())
}

/// How `xi` is chosen for prior draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiPrior {
    Fixed(f64),
    /// A fresh `xi` from the half-Cauchy for every draw.
    HalfCauchy(f64),
}

fn draw_prior(grid: &[f64], xi_prior: XiPrior, tau2: f64, t: usize, seed: u64) -> Result<FunctionDraws> {
    check_grid(grid)?;
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau2 must be positive, got {tau2}")));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("number of draws must be positive".into()));
    }
    let m = grid.len();
    let tau = tau2.sqrt();
    let (fixed, hc) = match xi_prior {
        XiPrior::Fixed(xi) => {
            if !(xi >= 0.0 && xi.is_finite()) {
                return Err(Error::InvalidArgument(format!("xi must be >= 0, got {xi}")));
            }
            (Some((xi, joint_factor(grid, xi))), None)
        }
        XiPrior::HalfCauchy(s) => (None, Some(HalfCauchy::new(s)?)),
    };
    let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..t)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, PRIOR_STREAM_BASE + i as u64);
            let owned;
            let (xi, l) = match (&fixed, &hc) {
                (Some((xi, l)), _) => (*xi, l),
                (None, Some(hc)) => {
                    let xi = hc.sample(&mut rng);
                    owned = joint_factor(grid, xi);
                    (xi, &owned)
                }
                (None, None) => unreachable!(),
            };
            let z = std_normal_vec(&mut rng, l.ncols());
            let f = l * z * tau;
            (xi, f.rows(0, m).iter().cloned().collect(), f.rows(m, m).iter().cloned().collect())
        })
        .collect();
    Ok(FunctionDraws::from_rows(grid.to_vec(), rows, Provenance::Prior))
}

/// `t` prior draws at a fixed roughness `xi` and coefficient variance `tau2`.
pub fn draw_functions_prior(grid: &[f64], xi: f64, tau2: f64, t: usize, seed: u64) -> Result<FunctionDraws> {
    draw_prior(grid, XiPrior::Fixed(xi), tau2, t, seed)
}

/// `t` prior draws with `xi` marginalized over a half-Cauchy of scale `s_xi`.
pub fn draw_functions_prior_marginal(
    grid: &[f64],
    s_xi: f64,
    tau2: f64,
    t: usize,
    seed: u64,
) -> Result<FunctionDraws> {
    draw_prior(grid, XiPrior::HalfCauchy(s_xi), tau2, t, seed)
}

/// Observed values and evaluation grid merged into one latent point set.
struct LatentPoints {
    points: Vec<f64>,
    obs: Vec<usize>,
    grid: Vec<usize>,
}

impl LatentPoints {
    fn new(x: &[f64], grid: &[f64]) -> Self {
        let mut points: Vec<f64> = x.iter().chain(grid).cloned().collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let idx = |v: &f64| points.binary_search_by(|p| p.total_cmp(v)).expect("point present");
        let obs = x.iter().map(idx).collect();
        let grid = grid.iter().map(idx).collect();
        Self { points, obs, grid }
    }
}

/// Conditional posterior of the latent coefficients given one parameter draw,
/// in the coordinates `f = tau L z` of the low-rank prior factor.
struct LatentPosterior {
    l: DMatrix<f64>,
    tau: f64,
    mean_z: DVector<f64>,
    q_chol: Cholesky<f64, nalgebra::Dyn>,
}

fn latent_posterior(d: &Dataset, g: f64, s: &PosteriorSample, lp: &LatentPoints) -> Result<LatentPosterior> {
    if s.gamma.len() != d.k() {
        return Err(Error::Dimension(format!(
            "posterior sample has {} covariate coefficients, dataset has {}",
            s.gamma.len(),
            d.k()
        )));
    }
    if !(s.sigma2 > 0.0 && s.xi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "posterior sample needs sigma2 > 0 and xi >= 0, got {s:?}"
        )));
    }
    let c = g / d.xtx();
    let tau2 = s.sigma2 * c;
    let tau = tau2.sqrt();
    let l = joint_factor(&lp.points, s.xi);
    let r = l.ncols();
    let m_obs = DMatrix::from_fn(d.n(), r, |i, j| d.x[i] * l[(lp.obs[i], j)]);
    let resid = if d.k() == 0 {
        d.y.clone()
    } else {
        &d.y - &d.z * DVector::from_column_slice(&s.gamma)
    };
    // Precision of z: I + (tau2 / sigma2) M'M.
    let mut q = m_obs.transpose() * &m_obs * c;
    for i in 0..r {
        q[(i, i)] += 1.0;
    }
    let q_chol = Cholesky::new(q).ok_or_else(|| Error::Numerical {
        xi: s.xi,
        context: "posterior precision of latent coefficients not positive definite".into(),
    })?;
    let b = m_obs.transpose() * resid * (tau / s.sigma2);
    let mean_z = q_chol.solve(&b);
    Ok(LatentPosterior { l, tau, mean_z, q_chol })
}

impl LatentPosterior {
    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let w = std_normal_vec(rng, self.l.ncols());
        let dz = self
            .q_chol
            .l_dirty()
            .tr_solve_lower_triangular(&w)
            .expect("triangular factor of a positive definite matrix");
        &self.l * (&self.mean_z + dz) * self.tau
    }

    fn mean(&self) -> DVector<f64> {
        &self.l * &self.mean_z * self.tau
    }
}

/// One posterior function draw on `grid` for each parameter sample.
pub fn draw_functions_posterior(
    d: &Dataset,
    cfg: &TestConfig,
    samples: &[PosteriorSample],
    grid: &[f64],
) -> Result<FunctionDraws> {
    check_grid(grid)?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no posterior samples".into()));
    }
    let lp = LatentPoints::new(d.x.as_slice(), grid);
    let p = lp.points.len();
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(t, s)| {
            let post = latent_posterior(d, cfg.g, s, &lp)?;
            let mut rng = stream_rng(cfg.seed, POSTERIOR_STREAM_BASE + t as u64);
            let f = post.sample(&mut rng);
            let beta = lp.grid.iter().map(|&i| f[i]).collect();
            let dbeta = lp.grid.iter().map(|&i| f[p + i]).collect();
            Ok((s.xi, beta, dbeta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionDraws::from_rows(grid.to_vec(), rows, Provenance::Posterior))
}

/// Conditional posterior mean of `beta` on `grid` given one parameter sample.
pub fn posterior_mean_beta(d: &Dataset, g: f64, sample: &PosteriorSample, grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let lp = LatentPoints::new(d.x.as_slice(), grid);
    let mean = latent_posterior(d, g, sample, &lp)?.mean();
    Ok(lp.grid.iter().map(|&i| mean[i]).collect())
}

/// Proportions of draws whose slope is positive (negative) at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignConsistency {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_draws: usize,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_comp: f64,
}

pub fn sign_consistency(draws: &FunctionDraws) -> Result<SignConsistency> {
    let t = draws.n_draws();
    if t == 0 {
        return Err(Error::InvalidArgument("no function draws".into()));
    }
    let mut n_pos = 0;
    let mut n_neg = 0;
    for row in draws.slope.row_iter() {
        if row.iter().all(|&v| v > 0.0) {
            n_pos += 1;
        } else if row.iter().all(|&v| v < 0.0) {
            n_neg += 1;
        }
    }
    let tf = t as f64;
    Ok(SignConsistency {
        n_pos,
        n_neg,
        n_draws: t,
        p_pos: n_pos as f64 / tf,
        p_neg: n_neg as f64 / tf,
        p_comp: (t - n_pos - n_neg) as f64 / tf,
    })
}

/// A Bayes factor that is infinite or undefined because a proportion was
/// zero, with the bound obtained by replacing each zero in its denominator by
/// the one-sided 95% upper bound `3 / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateRatio {
    pub name: String,
    #[serde(with = "crate::float_serde")]
    pub value: f64,
    /// The zero proportions in the denominator, e.g. `posterior_neg`.
    pub zero_proportions: Vec<String>,
    #[serde(with = "crate::float_serde")]
    pub lower_bound: f64,
}

/// Bayes factors of the consistently positive, consistently negative and
/// complement models, against the unconstrained nonlinear model and pairwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedResult {
    pub prior: SignConsistency,
    pub posterior: SignConsistency,
    #[serde(with = "crate::float_serde")]
    pub bf_pos_u: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_neg_u: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_comp_u: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_pos_neg: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_pos_comp: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_neg_pos: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_neg_comp: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_comp_pos: f64,
    #[serde(with = "crate::float_serde")]
    pub bf_comp_neg: f64,
    pub degenerate: Vec<DegenerateRatio>,
}

#[derive(Clone, Copy)]
enum Side {
    Prior,
    Posterior,
}

#[derive(Clone, Copy)]
enum Constraint {
    Pos,
    Neg,
    Comp,
}

impl Constraint {
    fn name(self) -> &'static str {
        match self {
            Constraint::Pos => "pos",
            Constraint::Neg => "neg",
            Constraint::Comp => "comp",
        }
    }
}

struct Proportions {
    prior: SignConsistency,
    posterior: SignConsistency,
}

impl Proportions {
    fn get(&self, side: Side, c: Constraint) -> (f64, usize) {
        let s = match side {
            Side::Prior => &self.prior,
            Side::Posterior => &self.posterior,
        };
        let p = match c {
            Constraint::Pos => s.p_pos,
            Constraint::Neg => s.p_neg,
            Constraint::Comp => s.p_comp,
        };
        (p, s.n_draws)
    }

    /// `Π num / Π den` with zero denominators replaced by `3 / T`.
    fn bound(&self, num: &[(Side, Constraint)], den: &[(Side, Constraint)]) -> (f64, Vec<String>) {
        let mut zeros = Vec::new();
        let top: f64 = num.iter().map(|&(s, c)| self.get(s, c).0).product();
        let bottom: f64 = den
            .iter()
            .map(|&(s, c)| {
                let (p, t) = self.get(s, c);
                if p == 0.0 {
                    let side = match s {
                        Side::Prior => "prior",
                        Side::Posterior => "posterior",
                    };
                    zeros.push(format!("{side}_{}", c.name()));
                    3.0 / t as f64
                } else {
                    p
                }
            })
            .product();
        (top / bottom, zeros)
    }
}

/// Ratios of posterior to prior sign-consistency proportions; pairwise
/// factors follow by transitivity, e.g. `bf_pos_neg = bf_pos_u / bf_neg_u`.
pub fn one_sided_bayes_factors(prior: &FunctionDraws, posterior: &FunctionDraws) -> Result<OneSidedResult> {
    if prior.grid != posterior.grid {
        return Err(Error::Dimension(
            "prior and posterior draws are on different grids".into(),
        ));
    }
    let props = Proportions {
        prior: sign_consistency(prior)?,
        posterior: sign_consistency(posterior)?,
    };
    use Constraint::*;
    let vs_u = |c| props.get(Side::Posterior, c).0 / props.get(Side::Prior, c).0;
    let (bf_pos_u, bf_neg_u, bf_comp_u) = (vs_u(Pos), vs_u(Neg), vs_u(Comp));

    let mut degenerate = Vec::new();
    let mut flag = |name: String, value: f64, num: &[(Side, Constraint)], den: &[(Side, Constraint)]| {
        if !value.is_finite() {
            let (lower_bound, zero_proportions) = props.bound(num, den);
            degenerate.push(DegenerateRatio {
                name,
                value,
                zero_proportions,
                lower_bound,
            });
        }
    };
    for (c, v) in [(Pos, bf_pos_u), (Neg, bf_neg_u), (Comp, bf_comp_u)] {
        flag(
            format!("bf_{}_u", c.name()),
            v,
            &[(Side::Posterior, c)],
            &[(Side::Prior, c)],
        );
    }
    let pair = |a: Constraint, b: Constraint, u_a: f64, u_b: f64| (a, b, u_a / u_b);
    let pairs = [
        pair(Pos, Neg, bf_pos_u, bf_neg_u),
        pair(Pos, Comp, bf_pos_u, bf_comp_u),
        pair(Neg, Pos, bf_neg_u, bf_pos_u),
        pair(Neg, Comp, bf_neg_u, bf_comp_u),
        pair(Comp, Pos, bf_comp_u, bf_pos_u),
        pair(Comp, Neg, bf_comp_u, bf_neg_u),
    ];
    for &(a, b, v) in &pairs {
        flag(
            format!("bf_{}_{}", a.name(), b.name()),
            v,
            &[(Side::Posterior, a), (Side::Prior, b)],
            &[(Side::Prior, a), (Side::Posterior, b)],
        );
    }
    Ok(OneSidedResult {
        prior: props.prior,
        posterior: props.posterior,
        bf_pos_u,
        bf_neg_u,
        bf_comp_u,
        bf_pos_neg: pairs[0].2,
        bf_pos_comp: pairs[1].2,
        bf_neg_pos: pairs[2].2,
        bf_neg_comp: pairs[3].2,
        bf_comp_pos: pairs[4].2,
        bf_comp_neg: pairs[5].2,
        degenerate,
    })
}

/// Full one-sided analysis: `t` posterior draws and `t` marginal prior draws
/// on `grid`.
pub fn one_sided_test(d: &Dataset, cfg: &TestConfig, t: usize, grid: &[f64]) -> Result<OneSidedResult> {
    let samples = sample_posterior(d, cfg, t)?;
    let post = draw_functions_posterior(d, cfg, &samples, grid)?;
    // Sign patterns do not depend on the prior variance, so tau2 = 1.
    let prior = draw_functions_prior_marginal(grid, cfg.s_xi, 1.0, t, cfg.seed)?;
    one_sided_bayes_factors(&prior, &post)
}
