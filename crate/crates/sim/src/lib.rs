//! Benchmark environments, noise models and Monte-Carlo evaluation for the
//! output-feedback stochastic MPC in `sgmpc-core`.

pub mod campaign;
pub mod config;
pub mod containment;
pub mod env;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod report;

pub use campaign::{run_campaign, run_pipeline_campaign, run_trial, TrialRecord};
pub use config::{BoundKind, CovarianceSource, EnvKind, ExperimentConfig, Method};
pub use containment::{containment_study, ContainmentStudy};
pub use env::Environment;
pub use error::{SimError, SimResult};
pub use metrics::{containment_metrics, mpc_metrics, Containment, MpcMetrics};
pub use noise::{sample_noise, HeteroRule, NoiseFamily, NoiseSampler};
pub use pipeline::{build_pipeline, NoiseCalibration, Pipeline, PipelineSettings};
