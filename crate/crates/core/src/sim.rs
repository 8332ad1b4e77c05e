//! Simulation scenarios: a smooth bump or a step in the coefficient function,
//! swept over effect size, sample size and prior scale.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::inference::log_bf01_quadrature;
use crate::model::{Dataset, Scale, TestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// `beta(x) = 3 h phi(x)`.
    Bump,
    /// `beta(x) = h 1(x > 0)`.
    Step,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Bump => "bump",
            Kind::Step => "step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bump" => Some(Kind::Bump),
            "step" => Some(Kind::Step),
            _ => None,
        }
    }

    pub fn beta(self, h: f64, x: f64) -> f64 {
        match self {
            Kind::Bump => 3.0 * h * (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            Kind::Step => {
                if x > 0.0 {
                    h
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: Kind,
    pub h: f64,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Scenario {
    pub const MIN_N: usize = 10;

    pub fn new(kind: Kind, h: f64, n: usize, seed: u64) -> Self {
        Self {
            kind,
            h,
            n,
            sigma: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig(format!("h must be >= 0, got {}", self.h)));
        }
        if self.n < Self::MIN_N {
            return Err(Error::InvalidConfig(format!(
                "n must be at least {}, got {}",
                Self::MIN_N,
                self.n
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// `n` equally spaced points on `(-3, 3)`, at the centres of equal cells.
pub fn design_points(n: usize) -> Vec<f64> {
    (0..n).map(|i| -3.0 + 6.0 * (i as f64 + 0.5) / n as f64).collect()
}

/// Data with `y = beta(x) x + eps` and no covariates.
pub fn generate(s: &Scenario) -> Result<Dataset> {
    s.validate()?;
    let x = design_points(s.n);
    let noise = Normal::new(0.0, s.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let y = x
        .iter()
        .map(|&xi| s.kind.beta(s.h, xi) * xi + noise.sample(&mut rng))
        .collect();
    Dataset::without_covariates(y, x)
}

/// Mixes the fields identifying one simulated dataset into a seed, so a
/// cell's data does not depend on which other cells are in the grid.
fn cell_seed(seed: u64, kind: Kind, h: f64, n: usize, rep: usize) -> u64 {
    let mut z = seed;
    for v in [kind as u64, h.to_bits(), n as u64, rep as u64] {
        z = splitmix(z ^ v);
    }
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kinds: Vec<Kind>,
    pub h_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub scales: Vec<Scale>,
    pub replications: usize,
    pub seed: u64,
    pub sigma: f64,
    pub n_quad: usize,
}

impl GridSpec {
    pub fn new(kinds: Vec<Kind>, h_values: Vec<f64>, n_values: Vec<usize>, scales: Vec<Scale>) -> Self {
        Self {
            kinds,
            h_values,
            n_values,
            scales,
            replications: 20,
            seed: TestConfig::DEFAULT_SEED,
            sigma: 0.1,
            n_quad: 201,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.kinds.len() * self.h_values.len() * self.n_values.len() * self.scales.len() * self.replications
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() || self.h_values.is_empty() || self.n_values.is_empty() || self.scales.is_empty() {
            return Err(Error::InvalidConfig("simulation grid has an empty axis".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        for &kind in &self.kinds {
            for &h in &self.h_values {
                for &n in &self.n_values {
                    Scenario {
                        kind,
                        h,
                        n,
                        sigma: self.sigma,
                        seed: 0,
                    }
                    .validate()?;
                }
            }
        }
        Ok(())
    }
}

/// One `(kind, h, n, scale, rep)` cell. Failed cells keep `log_bf01 = NaN`
/// and carry the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub kind: Kind,
    pub h: f64,
    pub n: usize,
    pub scale: Scale,
    pub rep: usize,
    #[serde(with = "crate::float_serde")]
    pub log_bf01: f64,
    /// Monte Carlo standard error; absent for quadrature.
    #[serde(with = "crate::float_serde::option")]
    pub mc_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean and standard error of `log B01` over the replications of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub kind: Kind,
    pub h: f64,
    pub n: usize,
    pub scale: Scale,
    pub n_ok: usize,
    pub n_failed: usize,
    #[serde(with = "crate::float_serde")]
    pub mean_log_bf01: f64,
    #[serde(with = "crate::float_serde")]
    pub se: f64,
}

/// Rows ordered by kind, h, n, rep, then scale. Each dataset is generated
/// once and reused across scales.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<SimRow>> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &kind in &spec.kinds {
        for &h in &spec.h_values {
            for &n in &spec.n_values {
                for rep in 0..spec.replications {
                    cells.push((kind, h, n, rep));
                }
            }
        }
    }
    let rows: Vec<Vec<SimRow>> = cells
        .par_iter()
        .map(|&(kind, h, n, rep)| {
            let scenario = Scenario {
                kind,
                h,
                n,
                sigma: spec.sigma,
                seed: cell_seed(spec.seed, kind, h, n, rep),
            };
            let data = generate(&scenario);
            spec.scales
                .iter()
                .map(|&scale| {
                    let out = data.as_ref().map_err(Clone::clone).and_then(|d| {
                        let cfg = TestConfig {
                            n_quad: spec.n_quad,
                            ..TestConfig::for_dataset(d, scale.e())
                        };
                        log_bf01_quadrature(d, &cfg)
                    });
                    let (log_bf01, mc_se, error) = match out {
                        Ok(r) => (r.log_bf01, r.mc_se, None),
                        Err(e) => (f64::NAN, None, Some(e.to_string())),
                    };
                    SimRow {
                        kind,
                        h,
                        n,
                        scale,
                        rep,
                        log_bf01,
                        mc_se,
                        error,
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Per-cell mean and SE over replications, in first-appearance order.
pub fn summarize(rows: &[SimRow]) -> Vec<CellSummary> {
    let mut out: Vec<(CellSummary, Vec<f64>)> = Vec::new();
    for r in rows {
        let pos = out.iter().position(|(c, _)| {
            c.kind == r.kind && c.h.to_bits() == r.h.to_bits() && c.n == r.n && c.scale == r.scale
        });
        let idx = match pos {
            Some(i) => i,
            None => {
                out.push((
                    CellSummary {
                        kind: r.kind,
                        h: r.h,
                        n: r.n,
                        scale: r.scale,
                        n_ok: 0,
                        n_failed: 0,
                        mean_log_bf01: f64::NAN,
                        se: f64::NAN,
                    },
                    Vec::new(),
                ));
                out.len() - 1
            }
        };
        if r.log_bf01.is_finite() {
            out[idx].1.push(r.log_bf01);
        } else {
            out[idx].0.n_failed += 1;
        }
    }
    out.into_iter()
        .map(|(mut c, v)| {
            c.n_ok = v.len();
            if !v.is_empty() {
                let m = v.len() as f64;
                let mean = v.iter().sum::<f64>() / m;
                c.mean_log_bf01 = mean;
                if v.len() > 1 {
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
                    c.se = (var / m).sqrt();
                }
            }
            c
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_effect_is_pure_noise() {
        for kind in [Kind::Bump, Kind::Step] {
            let s = Scenario::new(kind, 0.0, 30, 9);
            let d = generate(&s).unwrap();
            let noise = Normal::new(0.0, 0.1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for yi in d.y.iter() {
                assert_eq!(*yi, noise.sample(&mut rng));
            }
        }
    }

    #[test]
    fn bump_peak_value() {
        let peak = Kind::Bump.beta(0.5, 0.0);
        assert!((peak - 0.598_413_420_602_149).abs() < 1e-12);
        assert!(Kind::Bump.beta(0.5, 0.3) < peak);
    }

    #[test]
    fn step_mean_function() {
        for x in [-2.5, -0.1, 0.0] {
            assert_eq!(Kind::Step.beta(0.3, x) * x, 0.0);
        }
        for x in [0.1, 1.0, 2.9] {
            assert_eq!(Kind::Step.beta(0.3, x) * x, 0.3 * x);
        }
    }

    #[test]
    fn design_points_are_symmetric_and_interior() {
        let x = design_points(20);
        assert!(x.iter().all(|v| v.abs() < 3.0));
        for i in 0..20 {
            assert!((x[i] + x[19 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::new(Kind::Bump, -0.1, 20, 1).validate().is_err());
        assert!(Scenario::new(Kind::Bump, 0.1, 9, 1).validate().is_err());
        assert!(generate(&Scenario::new(Kind::Step, 0.1, 10, 1)).is_ok());
    }

    #[test]
    fn grid_layout_and_seed_stability() {
        let mut spec = GridSpec::new(vec![Kind::Bump], vec![0.0, 0.5], vec![20], Scale::ALL.to_vec());
        spec.replications = 2;
        spec.n_quad = 41;
        let rows = run_grid(&spec).unwrap();
        assert_eq!(rows.len(), spec.n_rows());
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.error.is_none() && r.mc_se.is_none()));

        // The h = 0.5 cells do not change when h = 0 is dropped from the grid.
        let mut sub = spec.clone();
        sub.h_values = vec![0.5];
        let rows_sub = run_grid(&sub).unwrap();
        assert_eq!(&rows[6..], &rows_sub[..]);

        let summary = summarize(&rows);
        assert_eq!(summary.len(), 6);
        assert!(summary.iter().all(|c| c.n_ok == 2 && c.se.is_finite()));
    }

    #[test]
    fn strong_bump_favours_nonlinearity() {
        let mut spec = GridSpec::new(vec![Kind::Bump], vec![0.5], vec![50], vec![Scale::Medium]);
        spec.replications = 3;
        let s = summarize(&run_grid(&spec).unwrap());
        assert!(s[0].mean_log_bf01 < -5.0, "{:?}", s[0]);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let spec = GridSpec::new(vec![], vec![0.0], vec![20], vec![Scale::Medium]);
        assert!(run_grid(&spec).is_err());
    }
}
