//! Closed-loop Monte-Carlo rollouts with per-trial random streams.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sgmpc_core::{Controller, Error};

use crate::env::Environment;
use crate::error::{SimError, SimResult};
use crate::noise::sample_noise;
use crate::pipeline::Pipeline;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    /// Campaign seed; the trial's stream is `(seed, trial)`.
    pub seed: u64,
    /// `x_0, …, x_T`.
    pub states: Vec<DVector<f64>>,
    /// `u_0, …, u_{T−1}`.
    pub inputs: Vec<DVector<f64>>,
    /// `y_1, …, y_T`.
    pub measurements: Vec<DVector<f64>>,
    /// Per state `x_t`, one flag per constraint.
    pub violations: Vec<Vec<bool>>,
    /// `Σ_{t<T} ℓ(x_t, u_t)`.
    pub cost: f64,
    pub fallbacks: usize,
    /// Largest QP stationarity residual over the solved steps.
    pub max_kkt: f64,
}

impl TrialRecord {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn violated_at(&self, t: usize) -> bool {
        self.violations[t].iter().any(|&v| v)
    }

    /// Cost recomputed from the stored trajectory.
    pub fn recompute_cost(&self, env: &Environment) -> f64 {
        self.states
            .iter()
            .zip(&self.inputs)
            .map(|(x, u)| env.stage_cost(x, u))
            .sum()
    }
}

/// Independent stream for trial `trial` of a campaign seeded with `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// `x_0 ~ N(µ_0, σ_0² I)`.
pub fn initial_state(env: &Environment, rng: &mut ChaCha8Rng) -> DVector<f64> {
    if env.sigma0 == 0.0 {
        return env.mu0.clone();
    }
    DVector::from_fn(env.nx(), |i, _| {
        let z: f64 = StandardNormal.sample(rng);
        env.mu0[i] + env.sigma0 * z
    })
}

/// One rollout of `T` steps with a fresh controller from `factory`.
pub fn run_trial<F>(env: &Environment, factory: &F, steps: usize, seed: u64, trial: usize) -> SimResult<TrialRecord>
where
    F: Fn() -> SimResult<Controller<f64>>,
{
    let mut rng = trial_rng(seed, trial);
    let mut ctrl = factory()?;
    let sys = &env.system;
    let mut x = initial_state(env, &mut rng);
    let mut rec = TrialRecord {
        trial,
        seed,
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        measurements: Vec::with_capacity(steps),
        violations: Vec::with_capacity(steps + 1),
        cost: 0.0,
        fallbacks: 0,
        max_kkt: 0.0,
    };
    for t in 0..steps {
        rec.violations.push(env.violations(&x));
        let out = ctrl.compute_input().map_err(|e| match e {
            Error::Infeasible(m) if t == 0 => SimError::InitiallyInfeasible(m),
            source => SimError::Trial { trial, seed, t, source },
        })?;
        if !out.diagnostics.fallback {
            rec.max_kkt = rec.max_kkt.max(out.diagnostics.kkt_residual);
        }
        let (w, eps) = sample_noise(&env.noise, &x, env.ny(), &mut rng);
        let x_next = &sys.a * &x + &sys.b * &out.u + w;
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState { trial, seed, t: t + 1 });
        }
        let y = &sys.c * &x_next + eps;
        ctrl.update(&out.u, &out.v, &y)
            .map_err(|source| SimError::Trial { trial, seed, t, source })?;
        rec.cost += env.stage_cost(&x, &out.u);
        rec.states.push(std::mem::replace(&mut x, x_next));
        rec.inputs.push(out.u);
        rec.measurements.push(y);
    }
    rec.violations.push(env.violations(&x));
    rec.states.push(x);
    rec.fallbacks = ctrl.fallbacks;
    Ok(rec)
}

/// `n_trials` rollouts in parallel; output order and content depend only on
/// `seed`, never on scheduling.
pub fn run_campaign<F>(env: &Environment, factory: &F, n_trials: usize, steps: usize, seed: u64) -> SimResult<Vec<TrialRecord>>
where
    F: Fn() -> SimResult<Controller<f64>> + Sync,
{
    if n_trials == 0 {
        return Ok(Vec::new());
    }
    // The first trial runs alone so that initial infeasibility is reported
    // once instead of from every worker.
    let first = run_trial(env, factory, steps, seed, 0)?;
    let rest: Vec<TrialRecord> = (1..n_trials)
        .into_par_iter()
        .map(|i| run_trial(env, factory, steps, seed, i))
        .collect::<SimResult<_>>()?;
    let mut out = Vec::with_capacity(n_trials);
    out.push(first);
    out.extend(rest);
    Ok(out)
}

/// Campaign driven by a pipeline's MPC configuration.
pub fn run_pipeline_campaign(p: &Pipeline, n_trials: usize, steps: usize, seed: u64) -> SimResult<Vec<TrialRecord>> {
    let factory = || Ok(Controller::new(p.mpc.clone(), p.env.mu0.clone())?);
    run_campaign(&p.env, &factory, n_trials, steps, seed)
}
