//! Benchmark environments: a damped mass-spring system with a position
//! limit, and a five-state needle-steering surrogate confined to a funnel.

use nalgebra::{DMatrix, DVector};
use sgmpc_core::polytope::Polytope;
use sgmpc_core::reachability::PrsKind;
use sgmpc_core::tightening::{inner_polytope_of_funnel, FunnelParams};
use sgmpc_core::LinearSystem;

use crate::config::{BoundKind, EnvKind, ExperimentConfig};
use crate::error::{SimError, SimResult};
use crate::noise::{HeteroRule, NoiseFamily, NoiseSampler};

/// Constraint on the true state.
#[derive(Debug, Clone)]
pub enum StateConstraint {
    Polytope(Polytope<f64>),
    /// Nonconvex funnel on `(x₀, x₁, x₂)`, enforced through an inner polytope.
    Funnel {
        params: FunnelParams<f64>,
        facets: usize,
        slices: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub kind: EnvKind,
    pub system: LinearSystem<f64>,
    pub constraint: StateConstraint,
    pub x_target: DVector<f64>,
    /// Evaluation cost `‖x − x*‖²_Q + ‖u‖²_R`.
    pub q_env: DMatrix<f64>,
    pub r_env: DMatrix<f64>,
    /// Controller weights.
    pub q_mpc: DMatrix<f64>,
    pub r_mpc: DMatrix<f64>,
    pub noise: NoiseSampler,
    pub dt: f64,
    pub mu0: DVector<f64>,
    pub sigma0: f64,
    pub horizon: usize,
    pub steps: usize,
    pub bound: BoundKind,
    /// Back-off of the steady state from the tightened constraints.
    pub terminal_margin: f64,
    /// Half-width of the box around the steady state that bounds `Z_f`.
    pub terminal_radius: f64,
}

impl Environment {
    /// Mass 2, spring 1, damper 1, sampled at 0.1 s; position limited to 0.5.
    pub fn msd() -> Self {
        let (dt, m, k, b) = (0.1, 2.0, 1.0, 1.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, -k * dt / m, 1.0 - b * dt / m]);
        let bm = DMatrix::from_row_slice(2, 1, &[0.0, dt / m]);
        let system = LinearSystem::new(a, bm, DMatrix::identity(2, 2)).expect("mass-spring system is valid");
        let constraint = Polytope::from_row_list(2, &[(DVector::from_column_slice(&[1.0, 0.0]), 0.5)])
            .expect("position limit is valid");
        let noise = NoiseSampler::new(
            NoiseFamily::TruncatedStudentT { dof: 3.0, scale: 0.002, trunc: 6.0 },
            Some(HeteroRule { component: 0, threshold: 0.2, multiplier: 5.0 }),
        )
        .expect("default noise is valid");
        Self {
            kind: EnvKind::Msd,
            system,
            constraint: StateConstraint::Polytope(constraint),
            x_target: DVector::from_column_slice(&[0.5, 0.0]),
            q_env: DMatrix::identity(2, 2),
            r_env: DMatrix::zeros(1, 1),
            q_mpc: DMatrix::identity(2, 2),
            r_mpc: DMatrix::from_element(1, 1, 0.1),
            noise,
            dt,
            mu0: DVector::zeros(2),
            sigma0: 0.0,
            horizon: 15,
            steps: 100,
            bound: BoundKind::HalfSpace,
            terminal_margin: 0.01,
            terminal_radius: 1.0,
        }
    }

    /// Integrator chain `x⁺ = x + 0.075u` in five states; the tip must reach
    /// `x₀ = 0.12` while `(x₁, x₂)` stays inside the funnel around the axis.
    pub fn sp() -> Self {
        let n = 5;
        let dt = 0.075;
        let system = LinearSystem::new(DMatrix::identity(n, n), DMatrix::identity(n, n) * dt, DMatrix::identity(n, n))
            .expect("steering system is valid");
        let mut x_target = DVector::zeros(n);
        x_target[0] = 0.12;
        let noise = NoiseSampler::new(NoiseFamily::BoundedLaplace { scale: 0.0002, trunc: 8.0 }, None)
            .expect("default noise is valid");
        Self {
            kind: EnvKind::Sp,
            system,
            constraint: StateConstraint::Funnel {
                params: FunnelParams::default(),
                facets: 16,
                slices: 40,
            },
            x_target,
            q_env: DMatrix::identity(n, n),
            r_env: DMatrix::identity(n, n) * 0.001,
            q_mpc: DMatrix::identity(n, n),
            r_mpc: DMatrix::identity(n, n) * 0.001,
            noise,
            dt,
            mu0: DVector::from_column_slice(&[0.0, 0.001, -0.0005, 0.05, -0.05]),
            sigma0: 0.0002,
            horizon: 20,
            steps: 40,
            bound: BoundKind::Elliptical,
            terminal_margin: 0.0002,
            terminal_radius: 0.1,
        }
    }

    pub fn from_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Msd => Self::msd(),
            EnvKind::Sp => Self::sp(),
        }
    }

    /// Environment defaults with the configuration's overrides applied.
    pub fn from_config(cfg: &ExperimentConfig) -> SimResult<Self> {
        let mut env = Self::from_kind(cfg.environment);
        if let Some(h) = cfg.horizon {
            env.horizon = h;
        }
        if let Some(s) = cfg.steps {
            env.steps = s;
        }
        if let Some(b) = cfg.bound {
            env.bound = b;
        }
        if let Some(n) = cfg.noise {
            env.noise = NoiseSampler::new(n.family, n.hetero)?;
            if let Some(h) = n.hetero {
                if h.component >= env.nx() {
                    return Err(SimError::Config(format!("hetero component {} out of range", h.component)));
                }
            }
        }
        if let Some(s) = cfg.sigma0 {
            env.sigma0 = s;
        }
        Ok(env)
    }

    pub fn nx(&self) -> usize {
        self.system.nx()
    }

    pub fn nu(&self) -> usize {
        self.system.nu()
    }

    pub fn ny(&self) -> usize {
        self.system.ny()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::Msd => "msd",
            EnvKind::Sp => "sp",
        }
    }

    /// Convex state constraint in `x`, an inner approximation for the funnel.
    pub fn state_polytope(&self) -> SimResult<Polytope<f64>> {
        match &self.constraint {
            StateConstraint::Polytope(p) => Ok(p.clone()),
            StateConstraint::Funnel { params, facets, slices } => {
                Ok(inner_polytope_of_funnel(params, *facets, *slices)?.embed(&[0, 1, 2], self.nx())?)
            }
        }
    }

    /// The state constraint lifted to `(x, u)`.
    pub fn state_input_polytope(&self) -> SimResult<Polytope<f64>> {
        let cols: Vec<usize> = (0..self.nx()).collect();
        Ok(self.state_polytope()?.embed(&cols, self.nx() + self.nu())?)
    }

    /// Steady input `u*` with `(A − I)x* + Bu* = 0` in least squares.
    pub fn u_target(&self) -> DVector<f64> {
        let rhs = &self.x_target - &self.system.a * &self.x_target;
        self.system
            .b
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .expect("SVD with both factors solves")
    }

    /// Reachable-set shape; the half-space uses the single constraint row.
    pub fn prs_kind(&self) -> SimResult<PrsKind<f64>> {
        match self.bound {
            BoundKind::Elliptical => Ok(PrsKind::Elliptical),
            BoundKind::HalfSpace => {
                let p = self.state_input_polytope()?;
                if p.nrows() != 1 {
                    return Err(SimError::Config(format!(
                        "half-space bounds need a single constraint row, found {}",
                        p.nrows()
                    )));
                }
                Ok(PrsKind::HalfSpace(p.row(0)))
            }
        }
    }

    pub fn n_constraints(&self) -> usize {
        match &self.constraint {
            StateConstraint::Polytope(p) => p.nrows(),
            StateConstraint::Funnel { .. } => 1,
        }
    }

    /// One flag per constraint, true when violated by the true state.
    pub fn violations(&self, x: &DVector<f64>) -> Vec<bool> {
        match &self.constraint {
            StateConstraint::Polytope(p) => (0..p.nrows()).map(|i| p.g.row(i).transpose().dot(x) > p.h[i]).collect(),
            StateConstraint::Funnel { params, .. } => vec![!params.contains(x[0], x[1], x[2])],
        }
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let d = x - &self.x_target;
        d.dot(&(&self.q_env * &d)) + u.dot(&(&self.r_env * u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_satisfy_constraints() {
        for env in [Environment::msd(), Environment::sp()] {
            assert!(env.violations(&env.x_target).iter().all(|v| !v), "{}", env.name());
            assert!(env.violations(&env.mu0).iter().all(|v| !v), "{}", env.name());
            assert!(env.dt > 0.0);
        }
    }

    #[test]
    fn msd_matrices_and_steady_input() {
        let env = Environment::msd();
        assert_eq!(env.system.a, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.05, 0.95]));
        assert!((env.u_target()[0] - 0.5).abs() < 1e-12);
        let PrsKind::HalfSpace(h) = env.prs_kind().unwrap() else { panic!() };
        assert_eq!(h, DVector::from_column_slice(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn funnel_polytope_lies_inside_funnel() {
        let env = Environment::sp();
        let poly = env.state_polytope().unwrap();
        let StateConstraint::Funnel { params, .. } = env.constraint else { panic!() };
        for i in 0..=60 {
            let x0 = -0.02 + 0.14 * i as f64 / 60.0;
            let x = DVector::from_column_slice(&[x0, 0.0, 0.0, 0.0, 0.0]);
            if !poly.contains(&x, 0.0) {
                continue;
            }
            // Largest radius in direction x₁ allowed by the polytope.
            let mut d = x.clone();
            d[1] = params.radius(x0);
            assert!(!poly.contains(&(&d * 1.0 + DVector::from_column_slice(&[0.0, 1e-9, 0.0, 0.0, 0.0])), 0.0));
        }
        assert!(env.u_target().amax() < 1e-12);
    }
}
