//! Experiment configuration: a TOML document with strict key checking.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{SimError, SimResult};
use crate::noise::NoiseSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Msd,
    Sp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SubGaussian,
    DistributionallyRobust,
    Robust,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Self::SubGaussian => "sub_gaussian",
            Self::DistributionallyRobust => "distributionally_robust",
            Self::Robust => "robust",
        }
    }
}

/// Shape of the reachable sets used for tightening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    HalfSpace,
    Elliptical,
}

/// Which second moments drive the Chebyshev baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Sample covariances of the calibration draws.
    Empirical,
    /// The calibrated variance proxies.
    Proxy,
}

fn default_delta() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    7
}
fn default_trials() -> usize {
    100
}
fn default_containment_trials() -> usize {
    100_000
}
fn default_calibration_samples() -> usize {
    5000
}
fn default_methods() -> Vec<Method> {
    vec![Method::SubGaussian, Method::DistributionallyRobust, Method::Robust]
}
fn default_covariance() -> CovarianceSource {
    CovarianceSource::Empirical
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Prediction horizon; environment default when absent.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Closed-loop length; environment default when absent.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_containment_trials")]
    pub containment_trials: usize,
    #[serde(default = "default_calibration_samples")]
    pub calibration_samples: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub bound: Option<BoundKind>,
    #[serde(default = "default_covariance")]
    pub dr_covariance: CovarianceSource,
    /// Replaces the environment's noise model.
    #[serde(default)]
    pub noise: Option<NoiseSampler>,
    #[serde(default)]
    pub sigma0: Option<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(environment: EnvKind) -> Self {
        Self {
            environment,
            seed: default_seed(),
            delta: default_delta(),
            horizon: None,
            steps: None,
            trials: default_trials(),
            containment_trials: default_containment_trials(),
            calibration_samples: default_calibration_samples(),
            methods: default_methods(),
            bound: None,
            dr_covariance: default_covariance(),
            noise: None,
            sigma0: None,
            out: default_out(),
        }
    }

    pub fn from_toml(text: &str) -> SimResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> SimResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> SimResult<()> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.trials == 0 || self.containment_trials == 0 {
            return bad("trial counts must be at least 1".into());
        }
        if self.calibration_samples < 2 {
            return bad("need at least 2 calibration samples".into());
        }
        if self.horizon == Some(0) || self.steps == Some(0) {
            return bad("horizon and steps must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if let Some(s) = self.sigma0 {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("sigma0 must be finite and nonnegative, got {s}"));
            }
        }
        if let Some(n) = self.noise {
            NoiseSampler::new(n.family, n.hetero)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
