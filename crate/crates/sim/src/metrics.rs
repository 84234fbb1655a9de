//! Containment and closed-loop performance statistics.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sgmpc_core::bounds::ConfidenceSet;

use crate::campaign::TrialRecord;
use crate::error::{SimError, SimResult};

/// Fixed seed for bootstrap resampling so reports are reproducible.
pub const BOOTSTRAP_SEED: u64 = 0x5eed;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Containment {
    /// Smallest per-step containment, in percent.
    pub min: f64,
    /// Percent of trajectories inside the set at each step.
    pub per_step: Vec<f64>,
}

impl Containment {
    /// From per-step inside counts over `n` trajectories.
    pub fn from_counts(counts: &[usize], n: usize) -> SimResult<Self> {
        if n == 0 || counts.is_empty() {
            return Err(SimError::Empty("containment counts"));
        }
        let per_step: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / n as f64).collect();
        let min = per_step.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { min, per_step })
    }
}

/// Fraction of trajectories whose step-`t` value lies in `sets[t]`.
pub fn containment_metrics(trajectories: &[Vec<DVector<f64>>], sets: &[ConfidenceSet<f64>]) -> SimResult<Containment> {
    if trajectories.is_empty() {
        return Err(SimError::Empty("trajectories"));
    }
    for tr in trajectories {
        if tr.len() != sets.len() {
            return Err(SimError::Config(format!(
                "trajectory length {} does not match {} sets",
                tr.len(),
                sets.len()
            )));
        }
    }
    let counts: Vec<usize> = (0..sets.len())
        .map(|t| trajectories.iter().filter(|tr| sets[t].contains(&tr[t])).count())
        .collect();
    Containment::from_counts(&counts, trajectories.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcMetrics {
    /// Largest per-step violation frequency, in percent.
    pub mcp: f64,
    pub mean_cost: f64,
    /// 95% percentile-bootstrap interval of the mean cost.
    pub cost_ci: (f64, f64),
    /// Percent of trials violating some constraint at each step.
    pub violation_per_step: Vec<f64>,
    pub fallbacks: usize,
    pub trials: usize,
}

pub fn mpc_metrics(records: &[TrialRecord]) -> SimResult<MpcMetrics> {
    if records.is_empty() {
        return Err(SimError::Empty("trial records"));
    }
    let n = records.len();
    let steps = records.iter().map(|r| r.violations.len()).min().unwrap_or(0);
    let violation_per_step: Vec<f64> = (0..steps)
        .map(|t| 100.0 * records.iter().filter(|r| r.violated_at(t)).count() as f64 / n as f64)
        .collect();
    let mcp = violation_per_step.iter().copied().fold(0.0, f64::max);
    let costs: Vec<f64> = records.iter().map(|r| r.cost).collect();
    let mean_cost = costs.iter().sum::<f64>() / n as f64;
    Ok(MpcMetrics {
        mcp,
        mean_cost,
        cost_ci: bootstrap_mean_ci(&costs, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED),
        violation_per_step,
        fallbacks: records.iter().map(|r| r.fallbacks).sum(),
        trials: n,
    })
}

/// Percentile bootstrap 95% interval of the sample mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
