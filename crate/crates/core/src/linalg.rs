//! Small numerical helpers: jittered and pivoted Cholesky, log-sum-exp
//! and the Gauss-Legendre rule on the unit interval.

use gauss_quad::GaussLegendre;
use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal loading used when a Cholesky factorization fails.
///
/// On failure `eps * mean(diag)` is added to the diagonal, with `eps`
/// starting at `initial` and growing by `factor` until it exceeds `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            factor: 10.0,
            max: 1e-4,
        }
    }
}

impl JitterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.factor > 1.0 && self.max >= self.initial) {
            return Err(Error::InvalidConfig(format!(
                "jitter policy needs 0 < initial <= max and factor > 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A Cholesky factor together with the relative jitter that was needed, if any.
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: Option<f64>,
}

impl Factor {
    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky of a symmetric matrix, escalating diagonal jitter per `policy`.
///
/// `xi` is only carried into the error so callers can tell which kernel
/// parameter broke the factorization.
pub fn cholesky_with_jitter(
    mat: &DMatrix<f64>,
    policy: &JitterPolicy,
    xi: f64,
) -> Result<Factor> {
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(Factor { chol, jitter: None });
    }
    let n = mat.nrows();
    let mean_diag = mat.diagonal().sum() / n.max(1) as f64;
    let mut eps = policy.initial;
    while eps <= policy.max * (1.0 + 1e-12) {
        let mut loaded = mat.clone();
        for i in 0..n {
            loaded[(i, i)] += eps * mean_diag;
        }
        if let Some(chol) = Cholesky::new(loaded) {
            return Ok(Factor {
                chol,
                jitter: Some(eps),
            });
        }
        eps *= policy.factor;
    }
    Err(Error::Numerical {
        xi,
        context: format!(
            "matrix of size {n} not positive definite after jitter up to {:e}",
            policy.max
        ),
    })
}

/// Low-rank factor `L` (n × r) with `L L' ≈ C` for a PSD matrix given by
/// its diagonal and a column oracle.
///
/// Greedy diagonal pivoting stops once every residual variance is at most
/// `rel_tol * max(diag)`, so only `r` columns of `C` are ever formed. Each
/// column of `L` is a linear combination of columns of `C`.
pub fn pivoted_cholesky(
    diag: &[f64],
    rel_tol: f64,
    mut column: impl FnMut(usize) -> Vec<f64>,
) -> DMatrix<f64> {
    let n = diag.len();
    let dmax = diag.iter().cloned().fold(0.0_f64, f64::max);
    let tol = rel_tol * dmax;
    let mut resid = diag.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut done = vec![false; n];
    for _ in 0..n {
        let (piv, &dp) = match resid
            .iter()
            .enumerate()
            .filter(|(i, _)| !done[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
        {
            Some(p) => p,
            None => break,
        };
        if !(dp > tol) {
            break;
        }
        done[piv] = true;
        let root = dp.sqrt();
        let mut col = column(piv);
        for prev in &cols {
            let lp = prev[piv];
            if lp != 0.0 {
                for (c, l) in col.iter_mut().zip(prev) {
                    *c -= l * lp;
                }
            }
        }
        for (i, c) in col.iter_mut().enumerate() {
            if done[i] && i != piv {
                *c = 0.0;
            } else {
                *c /= root;
            }
        }
        col[piv] = root;
        for (r, c) in resid.iter_mut().zip(&col) {
            *r -= c * c;
        }
        resid[piv] = 0.0;
        cols.push(col);
    }
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// `log(sum(exp(v)))`, accumulated in slice order.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Gauss-Legendre nodes and weights on `(0, 1)`, nodes ascending. Weights sum to 1.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn new(n: usize) -> Result<Self> {
        let rule = GaussLegendre::new(n)
            .map_err(|e| Error::InvalidConfig(format!("Gauss-Legendre rule of degree {n}: {e}")))?;
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
