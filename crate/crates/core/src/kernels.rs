//! Squared-exponential kernel and the derivative cross-covariances used to
//! sample slope functions.
//!
//! With `k(a, b) = exp(-xi^2 (a - b)^2 / 2)` and a coefficient process
//! `beta ~ GP(0, k)`, the derivative process `beta'` satisfies
//!
//! ```text
//! cov(beta(a), beta'(b))  = d/db k(a, b)        =  xi^2 (a - b) k(a, b)
//! cov(beta'(a), beta'(b)) = d2/(da db) k(a, b)  =  xi^2 (1 - xi^2 (a - b)^2) k(a, b)
//! ```
//!
//! Matrices named `k10` hold the first identity with rows indexing values and
//! columns indexing derivatives, so the joint covariance of `[beta; beta']`
//! is `[[K, K10], [K10', K11]]`.

use nalgebra::DMatrix;

fn pairwise(a: &[f64], b: &[f64], f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| f(a[i] - b[j]))
}

/// `K[i][j] = exp(-xi^2 (a_i - b_j)^2 / 2)`.
pub fn se_cross(a: &[f64], b: &[f64], xi: f64) -> DMatrix<f64> {
    let c = 0.5 * xi * xi;
    pairwise(a, b, |d| (-c * d * d).exp())
}

/// Squared-exponential kernel matrix of `x` with itself. All ones at `xi = 0`.
pub fn se_kernel(x: &[f64], xi: f64) -> DMatrix<f64> {
    se_cross(x, x, xi)
}

/// `cov(beta(a_i), beta'(b_j))`.
pub fn value_deriv_cross(a: &[f64], b: &[f64], xi: f64) -> DMatrix<f64> {
    let xi2 = xi * xi;
    pairwise(a, b, |d| xi2 * d * (-0.5 * xi2 * d * d).exp())
}

/// `cov(beta'(a_i), beta'(b_j))`.
pub fn deriv_deriv_cross(a: &[f64], b: &[f64], xi: f64) -> DMatrix<f64> {
    let xi2 = xi * xi;
    pairwise(a, b, |d| {
        let r = xi2 * d * d;
        xi2 * (1.0 - r) * (-0.5 * r).exp()
    })
}

/// Value/derivative and derivative/derivative blocks on a single point set.
///
/// Both are identically zero at `xi = 0`: a constant coefficient function
/// has no slope.
pub fn deriv_blocks(x: &[f64], xi: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (value_deriv_cross(x, x, xi), deriv_deriv_cross(x, x, xi))
}

/// Hadamard product `K ∘ xx'`, the covariance of `beta(x) ∘ x` under a
/// unit-scale prior.
pub fn effect_cov(x: &[f64], k: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(k.nrows(), x.len(), "kernel rows must match x");
    assert_eq!(k.ncols(), x.len(), "kernel cols must match x");
    DMatrix::from_fn(x.len(), x.len(), |i, j| k[(i, j)] * (x[i] * x[j]))
}

/// Kernel evaluation on a point set at fixed `xi` and prior scale `tau2`.
#[derive(Debug, Clone)]
pub struct KernelEval {
    pub k: DMatrix<f64>,
    pub k10: Option<DMatrix<f64>>,
    pub k11: Option<DMatrix<f64>>,
    pub xi: f64,
    pub tau2: f64,
}

impl KernelEval {
    pub fn new(x: &[f64], xi: f64, tau2: f64) -> Self {
        Self {
            k: se_kernel(x, xi),
            k10: None,
            k11: None,
            xi,
            tau2,
        }
    }

    pub fn with_derivatives(x: &[f64], xi: f64, tau2: f64) -> Self {
        let (k10, k11) = deriv_blocks(x, xi);
        Self {
            k: se_kernel(x, xi),
            k10: Some(k10),
            k11: Some(k11),
            xi,
            tau2,
        }
    }

    /// `tau2 * [[K, K10], [K10', K11]]`, the covariance of `[beta(x); beta'(x)]`.
    ///
    /// Panics if derivative blocks were not computed.
    pub fn joint_cov(&self) -> DMatrix<f64> {
        let k10 = self.k10.as_ref().expect("derivative blocks not computed");
        let k11 = self.k11.as_ref().expect("derivative blocks not computed");
        let n = self.k.nrows();
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(&self.k);
        c.view_mut((0, n), (n, n)).copy_from(k10);
        c.view_mut((n, 0), (n, n)).copy_from(&k10.transpose());
        c.view_mut((n, n), (n, n)).copy_from(k11);
        c * self.tau2
    }
}
