//! Monte-Carlo containment of the state-input deviation `ξ_t = K^e e_t` in
//! each method's reachable sets, plus the empirical quantile of `ξ_t` along
//! the constraint normal.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sgmpc_core::baselines::{RobustNoiseBounds, Zonotope};

use crate::campaign::{initial_state, trial_rng};
use crate::config::Method;
use crate::error::{SimError, SimResult};
use crate::metrics::{quantile_sorted, Containment};
use crate::noise::sample_noise;
use crate::pipeline::Pipeline;

/// Mixed into the campaign seed so containment draws differ from MPC trials.
pub const CONTAINMENT_SALT: u64 = 0x00c0_ffee_d00d_f00d;

#[derive(Debug, Clone, Serialize)]
pub struct MethodContainment {
    pub method: Method,
    pub containment: Containment,
    /// Support of the set along the study direction at each step.
    pub support: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContainmentStudy {
    pub trials: usize,
    pub steps: usize,
    pub direction: Vec<f64>,
    /// Empirical `1 − δ` quantile of `dᵀξ_t`.
    pub quantile: Vec<f64>,
    pub methods: Vec<MethodContainment>,
}

impl ContainmentStudy {
    pub fn method(&self, m: Method) -> Option<&MethodContainment> {
        self.methods.iter().find(|c| c.method == m)
    }
}

/// Alternating-projection rounds before falling back to the membership LP.
const REPAIR_ROUNDS: usize = 40;

/// Exact membership of the error in the error-space zonotopes, carried as
/// generator coefficients along the trajectory. A coefficient vector with
/// `|c|∞ ≤ 1` reproducing `e_t` is a certificate that `e_t ∈ E_t`, hence
/// `K^e e_t ∈ K^e E_t`.
struct ZonotopeTracker<'a> {
    zonotopes: &'a [Zonotope<f64>],
    /// `(G Gᵀ)⁺` per step.
    gram_pinv: Vec<DMatrix<f64>>,
    bounds: &'a RobustNoiseBounds<f64>,
    injection_order: usize,
}

fn box_coefficients(lower: &DVector<f64>, upper: &DVector<f64>, v: &DVector<f64>, out: &mut Vec<f64>) {
    for i in 0..v.len() {
        let r = 0.5 * (upper[i] - lower[i]);
        if r > 0.0 {
            out.push((v[i] - 0.5 * (upper[i] + lower[i])) / r);
        }
    }
}

impl<'a> ZonotopeTracker<'a> {
    fn new(p: &'a Pipeline, steps: usize) -> Option<Self> {
        let zonotopes = p.zonotopes.as_deref()?;
        let n = steps.min(zonotopes.len());
        let gram_pinv = zonotopes[..n]
            .iter()
            .map(|z| {
                let g = &z.generators;
                (g * g.transpose()).pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::zeros(g.nrows(), g.nrows()))
            })
            .collect();
        let b = &p.calibration.bounds;
        let injection_order = (0..b.w_lower.len()).filter(|&i| b.w_upper[i] > b.w_lower[i]).count()
            + (0..b.eps_lower.len()).filter(|&i| b.eps_upper[i] > b.eps_lower[i]).count();
        Some(Self {
            zonotopes: &zonotopes[..n],
            gram_pinv,
            bounds: b,
            injection_order,
        })
    }

    /// Coefficients for step `t` given those of step `t − 1` and the noise
    /// that drove the transition.
    fn advance(&self, t: usize, prev: Option<Vec<f64>>, noise: Option<&(DVector<f64>, DVector<f64>)>) -> Vec<f64> {
        let order = self.zonotopes[t].order();
        match (prev, noise) {
            (Some(mut c), Some((w, eps))) if t > 0 && self.zonotopes[t - 1].order() + self.injection_order == order => {
                let b = self.bounds;
                box_coefficients(&b.w_lower, &b.w_upper, w, &mut c);
                box_coefficients(&b.eps_lower, &b.eps_upper, eps, &mut c);
                c
            }
            _ => vec![0.0; order],
        }
    }

    /// Projects `coef` alternately onto `{G c = e − center}` and the unit
    /// box; returns the coefficients on success.
    fn certify(&self, t: usize, e: &DVector<f64>, coef: Vec<f64>) -> Option<Vec<f64>> {
        let z = &self.zonotopes[t];
        let target = e - &z.center;
        let tol = 1e-10 * target.amax().max(1.0);
        let mut c = DVector::from_vec(coef);
        for round in 0..=REPAIR_ROUNDS {
            let r = &target - &z.generators * &c;
            if r.amax() <= tol && c.amax() <= 1.0 {
                return Some(c.data.into());
            }
            if round == REPAIR_ROUNDS {
                break;
            }
            c += z.generators.transpose() * (&self.gram_pinv[t] * r);
            c.apply(|v| *v = v.clamp(-1.0, 1.0));
        }
        None
    }
}

struct TrialOutcome {
    /// `inside[method][t]`.
    inside: Vec<Vec<bool>>,
    projection: Vec<f64>,
}

/// Unit normal of the first state-input constraint row.
pub fn study_direction(p: &Pipeline) -> SimResult<DVector<f64>> {
    let poly = p.env.state_input_polytope()?;
    if poly.nrows() == 0 {
        return Err(SimError::Empty("constraint rows"));
    }
    let g = poly.row(0);
    Ok(&g / g.norm())
}

fn simulate(
    pipes: &[&Pipeline],
    trackers: &[Option<ZonotopeTracker>],
    d: &DVector<f64>,
    steps: usize,
    mut rng: ChaCha8Rng,
) -> SimResult<TrialOutcome> {
    let p0 = pipes[0];
    let env = &p0.env;
    let sys = &env.system;
    let (k, l) = (&p0.design.k, &p0.design.l);
    let ke = &p0.design.err.k_e;
    let (x_s, u_s) = &p0.steady_state;
    let nx = env.nx();

    let mut x = initial_state(env, &mut rng);
    let mut x_hat = env.mu0.clone();
    let mut z = env.mu0.clone();
    let mut coefs: Vec<Option<Vec<f64>>> = vec![None; pipes.len()];
    let mut noise: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut inside = vec![Vec::with_capacity(steps); pipes.len()];
    let mut projection = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut e = DVector::zeros(2 * nx);
        e.rows_mut(0, nx).copy_from(&(&x - &x_hat));
        e.rows_mut(nx, nx).copy_from(&(&x - &z));
        let xi = ke * &e;
        projection.push(d.dot(&xi));
        for (j, p) in pipes.iter().enumerate() {
            let tracked = match &trackers[j] {
                Some(tr) if t < tr.zonotopes.len() => {
                    let start = tr.advance(t, coefs[j].take(), noise.as_ref());
                    tr.certify(t, &e, start)
                }
                _ => None,
            };
            let hit = tracked.is_some() || p.set_at(t).contains(&xi);
            coefs[j] = tracked;
            inside[j].push(hit);
        }
        let v = u_s + k * (&z - x_s);
        let u = &v + k * (&x_hat - &z);
        let (w, eps) = sample_noise(&env.noise, &x, env.ny(), &mut rng);
        let x_next = &sys.a * &x + &sys.b * &u + &w;
        let y = &sys.c * &x_next + &eps;
        noise = Some((w, eps));
        let pred = &sys.a * &x_hat + &sys.b * &u;
        x_hat = &pred + l * (y - &sys.c * &pred);
        z = &sys.a * &z + &sys.b * &v;
        x = x_next;
    }
    Ok(TrialOutcome { inside, projection })
}

/// Runs `trials` error trajectories of `steps` steps under the tube law
/// `v = u_s + K(z − x_s)`, which leaves the error dynamics unchanged.
/// Every pipeline must share the same gains.
pub fn containment_study(pipes: &[&Pipeline], trials: usize, steps: usize, delta: f64, seed: u64) -> SimResult<ContainmentStudy> {
    let first = *pipes.first().ok_or(SimError::Empty("pipelines"))?;
    if trials == 0 || steps == 0 {
        return Err(SimError::Empty("containment trials"));
    }
    for p in pipes {
        if p.design.err.a_e != first.design.err.a_e || p.design.err.k_e != first.design.err.k_e {
            return Err(SimError::Config("containment pipelines must share one design".into()));
        }
    }
    let d = study_direction(first)?;
    let salted = seed ^ CONTAINMENT_SALT;
    let trackers: Vec<_> = pipes.iter().map(|p| ZonotopeTracker::new(p, steps)).collect();
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| simulate(pipes, &trackers, &d, steps, trial_rng(salted, i)))
        .collect::<SimResult<_>>()?;

    let mut methods = Vec::with_capacity(pipes.len());
    for (j, p) in pipes.iter().enumerate() {
        let counts: Vec<usize> = (0..steps)
            .map(|t| outcomes.iter().filter(|o| o.inside[j][t]).count())
            .collect();
        let support = (0..steps)
            .map(|t| Ok(p.set_at(t).support(&d)?))
            .collect::<SimResult<Vec<f64>>>()?;
        methods.push(MethodContainment {
            method: p.method,
            containment: Containment::from_counts(&counts, trials)?,
            support,
        });
    }
    let quantile = (0..steps)
        .map(|t| {
            let mut col: Vec<f64> = outcomes.iter().map(|o| o.projection[t]).collect();
            col.sort_by(f64::total_cmp);
            quantile_sorted(&col, 1.0 - delta)
        })
        .collect();
    Ok(ContainmentStudy {
        trials,
        steps,
        direction: d.iter().copied().collect(),
        quantile,
        methods,
    })
}
