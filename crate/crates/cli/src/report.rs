//! The JSON run report.

use gplinear::inference::Method;
use gplinear::model::Diagnostic;
use gplinear::sim::CellSummary;
use gplinear::{BayesFactorResult, OneSidedResult, Scale};
use serde::{Deserialize, Serialize};

/// Version of the report schema. Bump on any incompatible field change.
pub const SPEC_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec_version: String,
    pub command: String,
    pub seed: u64,
    pub config: ConfigEcho,
    pub dataset: Option<DatasetSummary>,
    pub bayes_factors: Vec<ScaleResult>,
    pub one_sided: Option<OneSidedResult>,
    pub simulation: Option<Vec<CellSummary>>,
    /// Files written by the command.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config: ConfigEcho) -> Self {
        Self {
            spec_version: SPEC_VERSION.into(),
            command: command.into(),
            seed,
            config,
            dataset: None,
            bayes_factors: Vec::new(),
            one_sided: None,
            simulation: None,
            artifacts: Vec::new(),
        }
    }
}

/// The settings a run used, after defaults were applied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub data: Option<String>,
    pub y: Option<String>,
    pub x: Option<String>,
    pub z: Vec<String>,
    pub intercept: bool,
    pub center: bool,
    #[serde(with = "gplinear::float_serde::option")]
    pub g: Option<f64>,
    pub method: Option<Method>,
    pub n_quad: Option<usize>,
    pub n_is: Option<usize>,
    pub draws: Option<usize>,
    pub grid: Option<usize>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub k: usize,
    #[serde(with = "gplinear::float_serde")]
    pub range_x: f64,
    pub diagnostics: Vec<Diagnostic>,
}

/// One Bayes factor, labelled by the prior scale that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleResult {
    /// Named scale, absent when `s_xi` was given explicitly.
    pub scale: Option<Scale>,
    pub result: BayesFactorResult,
    #[serde(with = "gplinear::float_serde")]
    pub p_m0: f64,
    #[serde(with = "gplinear::float_serde")]
    pub p_m1: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use gplinear::inference::EstimatorDiagnostics;

    #[test]
    fn non_finite_values_round_trip() {
        let mut r = RunReport::new("test", 7, ConfigEcho::default());
        r.bayes_factors.push(ScaleResult {
            scale: Some(Scale::Medium),
            result: BayesFactorResult {
                log_bf01: f64::INFINITY,
                log_m0: -3.25,
                log_m1: f64::NEG_INFINITY,
                method: Method::Importance,
                s_xi: 0.1,
                mc_se: Some(f64::NAN),
                n_eval: 3,
                diagnostics: EstimatorDiagnostics::default(),
            },
            p_m0: 1.0,
            p_m1: 0.0,
        });
        let json = serde_json::to_string(&r).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.bayes_factors[0].result.log_bf01, f64::INFINITY);
        assert_eq!(back.bayes_factors[0].result.log_m1, f64::NEG_INFINITY);
        assert!(back.bayes_factors[0].result.mc_se.unwrap().is_nan());
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
