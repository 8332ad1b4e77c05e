//! Data model and the integrated likelihood shared by the linear and the
//! nonlinear model.
//!
//! Conditional on `xi`, both models say
//!
//! ```text
//! y | gamma, sigma2, xi ~ N(Z gamma, sigma2 V_xi),   V_xi = g (x'x)^-1 K(xi) ∘ xx' + I
//! ```
//!
//! with `p(gamma) ∝ 1` and `p(sigma2) ∝ 1/sigma2`. Both nuisance blocks
//! integrate out in closed form, leaving (with `m = n - k`)
//!
//! ```text
//! log m(y | xi) = -(m/2) log(2π) - ½ log|V| - ½ log|Z'V⁻¹Z| + lnΓ(m/2) - (m/2) log(S/2)
//! S(xi)         = y'V⁻¹y - y'V⁻¹Z (Z'V⁻¹Z)⁻¹ Z'V⁻¹y
//! ```
//!
//! The linear model is the special case `xi = 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{effect_cov, se_kernel};
use crate::linalg::{cholesky_with_jitter, JitterPolicy};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Absolute cosine above which the predictor is reported as not orthogonal
/// to a covariate column.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Outcome `y`, key predictor `x` and covariates `z` (n × k, possibly k = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DVector<f64>,
    pub z: DMatrix<f64>,
}

impl Dataset {
    /// Checks only shapes; see [`validate_dataset`] for the statistical checks.
    pub fn new(y: Vec<f64>, x: Vec<f64>, z: DMatrix<f64>) -> Result<Self> {
        if y.len() != x.len() || z.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "y has {} rows, x has {}, Z has {}",
                y.len(),
                x.len(),
                z.nrows()
            )));
        }
        Ok(Self {
            y: DVector::from_vec(y),
            x: DVector::from_vec(x),
            z,
        })
    }

    pub fn without_covariates(y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, x, DMatrix::zeros(n, 0))
    }

    /// Returns a copy with a column of ones prepended to `z`.
    pub fn with_intercept(&self) -> Self {
        let n = self.n();
        let mut z = DMatrix::from_element(n, self.k() + 1, 1.0);
        z.view_mut((0, 1), (n, self.k())).copy_from(&self.z);
        Self {
            y: self.y.clone(),
            x: self.x.clone(),
            z,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn range_x(&self) -> f64 {
        self.x.max() - self.x.min()
    }

    pub fn xtx(&self) -> f64 {
        self.x.dot(&self.x)
    }

    /// Same data with the outcome multiplied by `c`.
    pub fn scale_y(&self, c: f64) -> Self {
        Self {
            y: &self.y * c,
            ..self.clone()
        }
    }
}

/// Named settings of the standardized deviation `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Small,
    Medium,
    Large,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Small, Scale::Medium, Scale::Large];

    /// `e^-2`, `e^-1` and `1`.
    pub fn e(self) -> f64 {
        match self {
            Scale::Small => (-2.0f64).exp(),
            Scale::Medium => (-1.0f64).exp(),
            Scale::Large => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scale::Small => "small",
            Scale::Medium => "medium",
            Scale::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(Scale::Small),
            "medium" => Some(Scale::Medium),
            "large" => Some(Scale::Large),
            _ => None,
        }
    }
}

/// Half-Cauchy scale for `xi` whose median corresponds to a deviation `e`
/// over the observed range of the predictor: `6 e / range(x)`.
pub fn prior_scale(range_x: f64, e: f64) -> f64 {
    6.0 * e / range_x
}

/// Settings for one linearity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// g-prior scaling; `n` gives the unit-information prior.
    pub g: f64,
    /// Standardized deviation from linearity.
    pub e: f64,
    /// Half-Cauchy scale of `xi`.
    pub s_xi: f64,
    pub seed: u64,
    pub n_quad: usize,
    pub n_is: usize,
    pub n_draws: usize,
    pub jitter: JitterPolicy,
}

impl TestConfig {
    pub const DEFAULT_SEED: u64 = 20_210_417;

    /// Unit-information prior with `s_xi = 6 e / range(x)`.
    pub fn for_dataset(d: &Dataset, e: f64) -> Self {
        Self {
            g: d.n() as f64,
            e,
            s_xi: prior_scale(d.range_x(), e),
            seed: Self::DEFAULT_SEED,
            n_quad: 201,
            n_is: 10_000,
            n_draws: 50,
            jitter: JitterPolicy::default(),
        }
    }

    pub fn with_s_xi(mut self, s_xi: f64) -> Self {
        self.s_xi = s_xi;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad(format!("g must be positive, got {}", self.g));
        }
        if !(self.s_xi > 0.0 && self.s_xi.is_finite()) {
            return bad(format!("s_xi must be positive, got {}", self.s_xi));
        }
        if self.n_quad < 32 {
            return bad(format!("n_quad must be >= 32, got {}", self.n_quad));
        }
        if self.n_is < 1000 {
            return bad(format!("n_is must be >= 1000, got {}", self.n_is));
        }
        if self.n_draws < 1 {
            return bad("n_draws must be >= 1".into());
        }
        self.jitter.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub check: String,
    pub status: CheckStatus,
    #[serde(with = "crate::float_serde")]
    pub value: f64,
    pub message: String,
}

fn numerical_rank(z: &DMatrix<f64>) -> usize {
    if z.ncols() == 0 {
        return 0;
    }
    let sv = z.clone().singular_values();
    let smax = sv.max();
    let tol = z.nrows().max(z.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Checks the dataset and reports how far `x` is from orthogonal to `Z`.
///
/// Hard errors: non-finite values, `n < k + 2`, constant `x`, rank-deficient
/// `Z`. Non-orthogonality only produces a warning diagnostic.
pub fn validate_dataset(d: &Dataset) -> Result<Vec<Diagnostic>> {
    let (n, k) = (d.n(), d.k());
    for (name, ok) in [
        ("y", d.y.iter().all(|v| v.is_finite())),
        ("x", d.x.iter().all(|v| v.is_finite())),
        ("Z", d.z.iter().all(|v| v.is_finite())),
    ] {
        if !ok {
            return Err(Error::NonFinite(name.into()));
        }
    }
    if n < k + 2 {
        return Err(Error::TooFewObservations { n, k });
    }
    let range = d.range_x();
    if range <= 0.0 {
        return Err(Error::ConstantPredictor);
    }
    let rank = numerical_rank(&d.z);
    if rank < k {
        return Err(Error::RankDeficient { rank, k });
    }

    let mut out = vec![
        Diagnostic {
            check: "observations".into(),
            status: CheckStatus::Pass,
            value: n as f64,
            message: format!("n = {n}, k = {k}"),
        },
        Diagnostic {
            check: "range_x".into(),
            status: CheckStatus::Pass,
            value: range,
            message: format!("range(x) = {range}"),
        },
        Diagnostic {
            check: "rank_z".into(),
            status: CheckStatus::Pass,
            value: rank as f64,
            message: format!("Z has full column rank {rank}"),
        },
    ];

    let xnorm = d.x.norm();
    let mut worst = 0.0_f64;
    let mut worst_col = 0;
    for j in 0..k {
        let col = d.z.column(j);
        let c = (d.x.dot(&col) / (xnorm * col.norm())).abs();
        if c > worst {
            worst = c;
            worst_col = j;
        }
    }
    let (status, message) = if worst > ORTHOGONALITY_TOL {
        (
            CheckStatus::Warn,
            format!(
                "x is not orthogonal to covariate column {worst_col} (|corr| = {worst:.3e}); \
                 consider centering/residualizing x"
            ),
        )
    } else {
        (
            CheckStatus::Pass,
            format!("x orthogonal to Z (max |corr| = {worst:.3e})"),
        )
    };
    out.push(Diagnostic {
        check: "orthogonality".into(),
        status,
        value: worst,
        message,
    });
    Ok(out)
}

/// Replaces `x` by its residual after projecting on the columns of `Z`.
pub fn residualize_x(d: &Dataset) -> Result<Dataset> {
    let k = d.k();
    if k == 0 {
        return Ok(d.clone());
    }
    if d.n() < k {
        return Err(Error::TooFewObservations { n: d.n(), k });
    }
    let qr = d.z.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().abs().max();
    let tol = d.n() as f64 * f64::EPSILON * rmax;
    let rank = r.diagonal().iter().filter(|v| v.abs() > tol).count();
    if rank < k {
        return Err(Error::RankDeficient { rank, k });
    }
    let q = qr.q();
    let proj = &q * (q.transpose() * &d.x);
    Ok(Dataset {
        x: &d.x - proj,
        ..d.clone()
    })
}

/// `V_xi = g (x'x)^-1 K(xi) ∘ xx' + I`, the covariance of `y` divided by `sigma2`.
pub fn build_v(d: &Dataset, g: f64, xi: f64) -> DMatrix<f64> {
    let x = d.x.as_slice();
    let c = g / d.xtx();
    let mut v = effect_cov(x, &se_kernel(x, xi)) * c;
    for i in 0..d.n() {
        v[(i, i)] += 1.0;
    }
    v
}

/// Closed-form pieces of the integrated likelihood at one `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedLikelihoodParts {
    pub xi: f64,
    pub logdet_v: f64,
    pub logdet_ztvinvz: f64,
    /// Residual quadratic form `S(xi)`.
    pub s: f64,
    pub gamma_hat: Vec<f64>,
    pub log_marginal: f64,
    /// Relative diagonal jitter needed to factor `V`, if any.
    pub jitter: Option<f64>,
}

/// Parts plus the factorizations needed to sample the conditional posterior.
pub(crate) struct Conditional {
    pub parts: IntegratedLikelihoodParts,
    /// Cholesky of `Z'V⁻¹Z`; `None` when k = 0.
    pub g_factor: Option<Cholesky<f64, Dyn>>,
}

fn log_marginal_from(m: usize, logdet_v: f64, logdet_g: f64, s: f64) -> f64 {
    let h = 0.5 * m as f64;
    -h * LN_2PI - 0.5 * logdet_v - 0.5 * logdet_g + ln_gamma(h) - h * (0.5 * s).ln()
}

pub(crate) fn conditional(
    d: &Dataset,
    g: f64,
    xi: f64,
    policy: &JitterPolicy,
) -> Result<Conditional> {
    let v = build_v(d, g, xi);
    let v_factor = cholesky_with_jitter(&v, policy, xi)?;
    let l = v_factor.chol.l_dirty();
    let a = l
        .solve_lower_triangular(&d.y)
        .ok_or_else(|| numerical(xi, "triangular solve for y"))?;
    let logdet_v = v_factor.logdet();

    let yvy = a.norm_squared();
    let (residual, gamma_hat, logdet_g, g_factor) = if d.k() == 0 {
        (a, Vec::new(), 0.0, None)
    } else {
        let b = l
            .solve_lower_triangular(&d.z)
            .ok_or_else(|| numerical(xi, "triangular solve for Z"))?;
        let gram = b.transpose() * &b;
        let gchol = Cholesky::new(gram).ok_or_else(|| numerical(xi, "Z'V^-1 Z not positive definite"))?;
        let gamma = gchol.solve(&(b.transpose() * &a));
        let r = &a - &b * &gamma;
        let ld = 2.0 * gchol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        (r, gamma.iter().cloned().collect(), ld, Some(gchol))
    };
    let s = residual.norm_squared();
    if !(s > 1e-12 * yvy && s.is_finite()) {
        return Err(numerical(xi, "residual quadratic form S is not positive (y in span of Z?)"));
    }
    let log_marginal = log_marginal_from(d.n() - d.k(), logdet_v, logdet_g, s);
    if !log_marginal.is_finite() {
        return Err(numerical(xi, "log marginal is not finite"));
    }
    Ok(Conditional {
        parts: IntegratedLikelihoodParts {
            xi,
            logdet_v,
            logdet_ztvinvz: logdet_g,
            s,
            gamma_hat,
            log_marginal,
            jitter: v_factor.jitter,
        },
        g_factor,
    })
}

fn numerical(xi: f64, context: &str) -> Error {
    Error::Numerical {
        xi,
        context: context.into(),
    }
}

/// Log marginal likelihood of `y` given `xi`, with `gamma` and `sigma2`
/// integrated out.
pub fn log_marginal_given_xi(
    d: &Dataset,
    cfg: &TestConfig,
    xi: f64,
) -> Result<IntegratedLikelihoodParts> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!("xi must be >= 0, got {xi}")));
    }
    conditional(d, cfg.g, xi, &cfg.jitter).map(|c| c.parts)
}

/// Log marginal under the linear model via the rank-one structure of
/// `V_0 = I + g xx'/x'x`: `|V_0| = 1 + g` and
/// `V_0⁻¹ = I - (g / (1 + g)) xx'/x'x`. No n × n matrix is formed.
pub fn log_marginal_linear(d: &Dataset, g: f64) -> Result<f64> {
    let xtx = d.xtx();
    let shrink = g / (1.0 + g) / xtx;
    let xty = d.x.dot(&d.y);
    let mut s = d.y.norm_squared() - shrink * xty * xty;
    let mut logdet_g = 0.0;
    if d.k() > 0 {
        let ztx = d.z.transpose() * &d.x;
        let gram = d.z.transpose() * &d.z - (&ztx * ztx.transpose()) * shrink;
        let zty = d.z.transpose() * &d.y - &ztx * (shrink * xty);
        let gchol = Cholesky::new(gram).ok_or_else(|| numerical(0.0, "Z'V0^-1 Z not positive definite"))?;
        s -= zty.dot(&gchol.solve(&zty));
        logdet_g = 2.0 * gchol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    }
    if !(s > 0.0) {
        return Err(numerical(0.0, "residual quadratic form S is not positive"));
    }
    Ok(log_marginal_from(d.n() - d.k(), (1.0 + g).ln(), logdet_g, s))
}
