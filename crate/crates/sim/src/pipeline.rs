//! Offline design for one tightening method: noise calibration, gains,
//! reachable sets, tightened constraints, terminal ingredients and the MPC
//! configuration.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgmpc_core::baselines::{
    chebyshev_from_covariance, dr_covariances, empirical_covariance, robust_propagate, RobustNoiseBounds, Zonotope,
};
use sgmpc_core::bounds::{elliptical_radius_sq, ConfidenceSet, Ellipsoid};
use sgmpc_core::calibration::calibrate_scalar_proxy;
use sgmpc_core::polytope::Polytope;
use sgmpc_core::qp::{solve_qp, QpProblem, QpStatus};
use sgmpc_core::reachability::{coupled_initial_proxy, propagate_proxy_from, prs_set, state_input_proxy, PrsKind};
use sgmpc_core::tightening::{feedback_section, maximal_invariant_set, minkowski_diff, tighten_by_union, TightenedSequence};
use sgmpc_core::{build_error_system, design_observer, solve_dare, Error, ErrorSystem, MpcConfig, NoiseSpec};

use crate::config::{CovarianceSource, Method};
use crate::env::Environment;
use crate::error::{SimError, SimResult};

/// Stream reserved for calibration draws, disjoint from every trial stream.
pub const CALIBRATION_STREAM: u64 = u64::MAX;

/// Robust sets are propagated at least this long before the union is taken.
pub const ROBUST_MIN_STEPS: usize = 400;

/// Noise statistics estimated once and shared by every method.
#[derive(Debug, Clone)]
pub struct NoiseCalibration {
    pub sigma_w: f64,
    pub sigma_eps: f64,
    pub cov_w: DMatrix<f64>,
    pub cov_eps: DMatrix<f64>,
    pub bounds: RobustNoiseBounds<f64>,
    pub samples: usize,
}

impl NoiseCalibration {
    /// Draws `n` process and measurement samples at the largest amplitude the
    /// noise model can produce and calibrates from them.
    pub fn from_env(env: &Environment, n: usize, seed: u64) -> SimResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CALIBRATION_STREAM);
        let f = env.noise.worst_factor();
        let w = env.noise.draw_many(env.nx(), n, f, &mut rng);
        let eps = env.noise.draw_many(env.ny(), n, f, &mut rng);
        Self::from_samples(&w, &eps)
    }

    pub fn from_samples(w: &[DVector<f64>], eps: &[DVector<f64>]) -> SimResult<Self> {
        Ok(Self {
            sigma_w: calibrate_scalar_proxy(w)?.sigma(),
            sigma_eps: calibrate_scalar_proxy(eps)?.sigma(),
            cov_w: empirical_covariance(w)?,
            cov_eps: empirical_covariance(eps)?,
            bounds: RobustNoiseBounds::from_samples(w, eps)?,
            samples: w.len(),
        })
    }
}

/// Gains and error dynamics shared by every method.
#[derive(Debug, Clone)]
pub struct Design {
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub err: ErrorSystem<f64>,
    pub noise: NoiseSpec<f64>,
}

pub fn design(env: &Environment, calib: &NoiseCalibration) -> SimResult<Design> {
    let sys = &env.system;
    let (p, k) = solve_dare(&sys.a, &sys.b, &env.q_mpc, &env.r_mpc)?;
    let noise = NoiseSpec::new(env.sigma0, calib.sigma_w, calib.sigma_eps)?;
    let l = design_observer(sys, &noise)?;
    let err = build_error_system(sys, &k, &l)?;
    Ok(Design { k, p, l, err, noise })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub delta: f64,
    pub dr_covariance: CovarianceSource,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            delta: 0.05,
            dr_covariance: CovarianceSource::Empirical,
        }
    }
}

/// Everything a controller needs for one method.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub method: Method,
    pub env: Environment,
    pub design: Design,
    pub calibration: NoiseCalibration,
    /// Reachable sets of the state-input deviation, one per step.
    pub sets: Vec<ConfidenceSet<f64>>,
    /// Set used past the end of `sets`.
    pub steady_set: ConfidenceSet<f64>,
    /// Error-space zonotopes for the worst-case method.
    pub zonotopes: Option<Vec<Zonotope<f64>>>,
    /// Whether the zonotope generator cap was hit.
    pub reduced: bool,
    pub tightened: TightenedSequence<f64>,
    pub steady_state: (DVector<f64>, DVector<f64>),
    pub mpc: MpcConfig<f64>,
}

impl Pipeline {
    pub fn set_at(&self, t: usize) -> &ConfidenceSet<f64> {
        self.sets.get(t).unwrap_or(&self.steady_set)
    }
}

/// Reachable set from a state-input proxy; singular proxies get the same
/// radius on their range.
fn subgaussian_set(err: &ErrorSystem<f64>, sigma: &DMatrix<f64>, delta: f64, kind: &PrsKind<f64>) -> SimResult<ConfidenceSet<f64>> {
    match prs_set(err, sigma, delta, kind) {
        Ok(s) => Ok(s),
        Err(Error::Singular(_)) if matches!(kind, PrsKind::Elliptical) => {
            let proxy = state_input_proxy(err, sigma);
            let n = proxy.nrows();
            let r2 = elliptical_radius_sq(n, delta)?;
            Ok(ConfidenceSet::Ellipsoid(Ellipsoid::new_degenerate(DVector::zeros(n), proxy, r2)?))
        }
        Err(e) => Err(e.into()),
    }
}

/// Chebyshev ellipsoid `{ξ : ξᵀ Cov⁻¹ ξ ≤ n/δ}` with `n` the dimension of `ξ`.
fn chebyshev_set_for(cov: &DMatrix<f64>, delta: f64) -> SimResult<ConfidenceSet<f64>> {
    Ok(chebyshev_from_covariance(cov, delta, cov.nrows())?)
}

fn infeasible(what: &str, e: Error) -> SimError {
    match e {
        Error::EmptySet(m) | Error::Infeasible(m) => SimError::InitiallyInfeasible(format!("{what}: {m}")),
        other => SimError::Core(other),
    }
}

/// Admissible steady state closest to the target, backed off from the
/// tightened constraints by `margin` per unit row norm.
pub fn steady_state(env: &Environment, constraints: &Polytope<f64>, margin: f64) -> SimResult<(DVector<f64>, DVector<f64>)> {
    let (nx, nu) = (env.nx(), env.nu());
    let n = nx + nu;
    let mut hess = DMatrix::zeros(n, n);
    hess.view_mut((0, 0), (nx, nx)).copy_from(&(&env.q_mpc * 2.0));
    hess.view_mut((nx, nx), (nu, nu)).copy_from(&(&env.r_mpc * 2.0));
    let u_t = env.u_target();
    let mut lin = DVector::zeros(n);
    lin.rows_mut(0, nx).copy_from(&(&env.q_mpc * &env.x_target * -2.0));
    lin.rows_mut(nx, nu).copy_from(&(&env.r_mpc * &u_t * -2.0));
    let m = nx + constraints.nrows();
    let mut a = DMatrix::zeros(m, n);
    a.view_mut((0, 0), (nx, nx)).copy_from(&(&env.system.a - DMatrix::identity(nx, nx)));
    a.view_mut((0, nx), (nx, nu)).copy_from(&env.system.b);
    a.view_mut((nx, 0), (constraints.nrows(), n)).copy_from(&constraints.g);
    let mut lower = DVector::from_element(m, f64::NEG_INFINITY);
    let mut upper = DVector::zeros(m);
    lower.rows_mut(0, nx).fill(0.0);
    for i in 0..constraints.nrows() {
        upper[nx + i] = constraints.h[i] - margin * constraints.g.row(i).norm();
    }
    let res = solve_qp(&QpProblem::new(hess, lin, a, lower, upper)?)?;
    if res.status != QpStatus::Optimal {
        return Err(SimError::InitiallyInfeasible(format!(
            "no admissible steady state (QP status {:?})",
            res.status
        )));
    }
    Ok((res.x.rows(0, nx).into_owned(), res.x.rows(nx, nu).into_owned()))
}

/// Terminal set `x_s ⊕ Ω`, with `Ω` the maximal invariant set of `A + BK`
/// inside the feedback section of `base` and a box of half-width `radius`.
pub fn terminal_set(
    env: &Environment,
    k: &DMatrix<f64>,
    base: &Polytope<f64>,
    x_s: &DVector<f64>,
    u_s: &DVector<f64>,
) -> SimResult<Polytope<f64>> {
    let nx = env.nx();
    let section = feedback_section(base, k, x_s, u_s).map_err(|e| infeasible("terminal section", e))?;
    let r = DVector::from_element(nx, env.terminal_radius);
    let boxed = section.intersect(&Polytope::from_bounds(&-&r, &r)?)?;
    let acl = &env.system.a + &env.system.b * k;
    let omega = maximal_invariant_set(&acl, &boxed, 1000).map_err(|e| infeasible("terminal set", e))?;
    Ok(omega.translate(x_s))
}

pub fn build_pipeline(
    env: &Environment,
    calib: &NoiseCalibration,
    method: Method,
    settings: &PipelineSettings,
) -> SimResult<Pipeline> {
    let design = design(env, calib)?;
    let err = &design.err;
    let kind = env.prs_kind()?;
    let delta = settings.delta;
    let nx = env.nx();
    let len = env.steps + env.horizon + 1;
    let init = coupled_initial_proxy(nx, env.sigma0 * env.sigma0);

    let mut zonotopes = None;
    let mut reduced = false;
    let (sets, steady_set) = match method {
        Method::SubGaussian => {
            let seq = propagate_proxy_from(err, &design.noise, &init, len)?;
            let sets = seq
                .per_step
                .iter()
                .map(|s| subgaussian_set(err, s, delta, &kind))
                .collect::<SimResult<Vec<_>>>()?;
            (sets, subgaussian_set(err, &seq.steady, delta, &kind)?)
        }
        Method::DistributionallyRobust => {
            let (cw, ce) = match settings.dr_covariance {
                CovarianceSource::Empirical => (calib.cov_w.clone(), calib.cov_eps.clone()),
                CovarianceSource::Proxy => (
                    DMatrix::identity(nx, nx) * calib.sigma_w.powi(2),
                    DMatrix::identity(env.ny(), env.ny()) * calib.sigma_eps.powi(2),
                ),
            };
            let seq = dr_covariances(err, &cw, &ce, &init, len)?;
            let sets = seq
                .per_step
                .iter()
                .map(|c| chebyshev_set_for(&state_input_proxy(err, c), delta))
                .collect::<SimResult<Vec<_>>>()?;
            (sets, chebyshev_set_for(&state_input_proxy(err, &seq.steady), delta)?)
        }
        Method::Robust => {
            let initial = if env.sigma0 == 0.0 {
                Zonotope::point(DVector::zeros(2 * nx))
            } else {
                let mut g = DMatrix::zeros(2 * nx, nx);
                for i in 0..nx {
                    g[(i, i)] = 4.0 * env.sigma0;
                    g[(nx + i, i)] = 4.0 * env.sigma0;
                }
                Zonotope {
                    center: DVector::zeros(2 * nx),
                    generators: g,
                }
            };
            let seq = robust_propagate(err, &calib.bounds, &initial, len.max(ROBUST_MIN_STEPS))?;
            reduced = seq.reduced;
            let sets: Vec<_> = seq.zonotopes.iter().map(|z| z.linear_map(&err.k_e).to_set()).collect();
            let last = sets.last().cloned().expect("robust sequence is nonempty");
            zonotopes = Some(seq.zonotopes);
            (sets, last)
        }
    };

    let x_poly = env.state_input_polytope()?;
    let mut all = sets.clone();
    all.push(steady_set.clone());
    let union = tighten_by_union(&x_poly, &all).map_err(|e| infeasible("tightened constraints", e))?;
    let tightened_steps = match method {
        // Worst-case tightening is time-invariant.
        Method::Robust => TightenedSequence {
            per_step: vec![],
            steady: union.clone(),
            terminal: Polytope::universe(nx),
        },
        _ => TightenedSequence {
            per_step: sets
                .iter()
                .map(|s| minkowski_diff(&x_poly, s))
                .collect::<sgmpc_core::Result<Vec<_>>>()
                .map_err(|e| infeasible("tightened constraints", e))?,
            steady: minkowski_diff(&x_poly, &steady_set).map_err(|e| infeasible("tightened constraints", e))?,
            terminal: Polytope::universe(nx),
        },
    };
    let (x_s, u_s) = steady_state(env, &union, env.terminal_margin)?;
    let terminal = terminal_set(env, &design.k, &union, &x_s, &u_s)?;
    let tightened = TightenedSequence {
        terminal,
        ..tightened_steps
    };
    let mpc = MpcConfig::new(
        env.system.clone(),
        env.horizon,
        env.q_mpc.clone(),
        env.r_mpc.clone(),
        design.p.clone(),
        design.k.clone(),
        design.l.clone(),
        tightened.clone(),
        env.x_target.clone(),
        env.u_target(),
        x_s.clone(),
        u_s.clone(),
    )?;
    Ok(Pipeline {
        method,
        env: env.clone(),
        design,
        calibration: calib.clone(),
        sets,
        steady_set,
        zonotopes,
        reduced,
        tightened,
        steady_state: (x_s, u_s),
        mpc,
    })
}

/// Builds every requested method from one shared calibration.
pub fn build_all(
    env: &Environment,
    methods: &[Method],
    calibration_samples: usize,
    seed: u64,
    settings: &PipelineSettings,
) -> SimResult<(NoiseCalibration, Vec<SimResult<Pipeline>>)> {
    let calib = NoiseCalibration::from_env(env, calibration_samples, seed)?;
    let pipes = methods.iter().map(|&m| build_pipeline(env, &calib, m, settings)).collect();
    Ok((calib, pipes))
}

/// Support of each set along `d`, step by step.
pub fn support_profile(p: &Pipeline, d: &DVector<f64>, steps: usize) -> SimResult<Vec<f64>> {
    (0..steps).map(|t| Ok(p.set_at(t).support(d)?)).collect()
}
