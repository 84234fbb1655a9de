//! Output-feedback MPC: observer and nominal tracker state, condensed QP for
//! the finite-horizon problem, and the receding-horizon step with a
//! shifted-candidate fallback.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use crate::design::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{check_dim, max_eigenvalue, symmetrize};
use crate::polytope::Polytope;
use crate::qp::{candidate_tolerance, AdmmSolver, QpProblem, QpResult, QpSettings, QpStatus};
use crate::scalar::{lit, to_f64, Real};
use crate::tightening::TightenedSequence;

#[derive(Debug, Clone)]
pub struct MpcConfig<T: Real> {
    pub system: LinearSystem<T>,
    pub horizon: usize,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub p: DMatrix<T>,
    /// Error feedback gain `u = v + K(x̂ − z)`.
    pub k: DMatrix<T>,
    /// Observer gain.
    pub l: DMatrix<T>,
    /// Constraints on `(z, v)` per absolute time step plus `Z_f` on `z`.
    pub tightened: TightenedSequence<T>,
    pub x_target: DVector<T>,
    pub u_target: DVector<T>,
    /// Admissible steady state `(x_s, u_s)` around which `Z_f` is built; the
    /// terminal control law is `u_s + K(z − x_s)`.
    pub terminal_state: DVector<T>,
    pub terminal_input: DVector<T>,
    pub qp_settings: QpSettings<T>,
}

impl<T: Real> MpcConfig<T> {
    /// Checks dimensions, definiteness and the terminal decrease condition
    /// `(A+BK)ᵀP(A+BK) − P + Q + KᵀRK ⪯ 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        system: LinearSystem<T>,
        horizon: usize,
        q: DMatrix<T>,
        r: DMatrix<T>,
        p: DMatrix<T>,
        k: DMatrix<T>,
        l: DMatrix<T>,
        tightened: TightenedSequence<T>,
        x_target: DVector<T>,
        u_target: DVector<T>,
        terminal_state: DVector<T>,
        terminal_input: DVector<T>,
    ) -> Result<Self> {
        let (nx, nu, ny) = (system.nx(), system.nu(), system.ny());
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be ≥ 1".into()));
        }
        check_dim("state weight", nx, q.nrows())?;
        check_dim("input weight", nu, r.nrows())?;
        check_dim("terminal weight", nx, p.nrows())?;
        check_dim("feedback gain rows", nu, k.nrows())?;
        check_dim("feedback gain columns", nx, k.ncols())?;
        check_dim("observer gain", nx * ny, l.nrows() * l.ncols())?;
        check_dim("state target", nx, x_target.len())?;
        check_dim("input target", nu, u_target.len())?;
        check_dim("terminal state", nx, terminal_state.len())?;
        check_dim("terminal input", nu, terminal_input.len())?;
        check_dim("terminal set dimension", nx, tightened.terminal.dim())?;
        check_dim("tightened set dimension", nx + nu, tightened.steady.dim())?;
        for (m, name) in [(&q, "state weight Q"), (&r, "input weight R"), (&p, "terminal weight P")] {
            if symmetrize(m).cholesky().is_none() {
                return Err(Error::Singular(name));
            }
        }
        let acl = &system.a + &system.b * &k;
        let dec = acl.transpose() * &p * &acl - &p + &q + k.transpose() * &r * &k;
        let worst = max_eigenvalue(&symmetrize(&dec));
        if worst > lit::<T>(1e-8) * p.norm().max(T::one()) {
            return Err(Error::InvalidArgument(format!(
                "terminal weight violates the decrease condition (max eigenvalue {:e})",
                to_f64(worst)
            )));
        }
        Ok(Self {
            system,
            horizon,
            q,
            r,
            p,
            k,
            l,
            tightened,
            x_target,
            u_target,
            terminal_state,
            terminal_input,
            qp_settings: QpSettings::default(),
        })
    }

    pub fn nx(&self) -> usize {
        self.system.nx()
    }

    pub fn nu(&self) -> usize {
        self.system.nu()
    }
}

/// Nominal state `z`, estimate `x̂` and time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T: Real> {
    pub z: DVector<T>,
    pub x_hat: DVector<T>,
    pub t: usize,
}

impl<T: Real> ControllerState<T> {
    /// `z_0 = x̂_0 = µ_0`.
    pub fn new(mu0: DVector<T>) -> Self {
        Self {
            z: mu0.clone(),
            x_hat: mu0,
            t: 0,
        }
    }
}

/// Condensed problem: `v` stacked as `[v_0; …; v_{H−1}]`.
#[derive(Debug, Clone)]
pub struct CondensedQp<T: Real> {
    pub problem: QpProblem<T>,
    /// Objective constant so that `½vᵀPv + qᵀv + constant` equals the MPC cost.
    pub constant: T,
    /// `z_i = z_free_i + Γ_i v`.
    pub z_free: Vec<DVector<T>>,
    pub gamma: Vec<DMatrix<T>>,
    /// `e_i = x̄_i − z_i`, independent of `v`.
    pub e: Vec<DVector<T>>,
}

impl<T: Real> CondensedQp<T> {
    pub fn z_traj(&self, v: &DVector<T>) -> Vec<DVector<T>> {
        self.z_free
            .iter()
            .zip(&self.gamma)
            .map(|(zf, g)| zf + g * v)
            .collect()
    }

    pub fn xbar_traj(&self, v: &DVector<T>) -> Vec<DVector<T>> {
        self.z_traj(v)
            .into_iter()
            .zip(&self.e)
            .map(|(z, e)| z + e)
            .collect()
    }

    /// `max(Av − u)`, the largest constraint violation of `v`.
    pub fn max_violation(&self, v: &DVector<T>) -> T {
        let av = &self.problem.a * v;
        (0..av.len()).fold(T::min_value().unwrap_or(lit(f64::MIN)), |acc, i| {
            acc.max(av[i] - self.problem.u[i]).max(self.problem.l[i] - av[i])
        })
    }

    pub fn cost(&self, v: &DVector<T>) -> T {
        self.problem.objective(v) + self.constant
    }
}

/// Builds the condensed QP at the controller state.
pub fn assemble_qp<T: Real>(cfg: &MpcConfig<T>, state: &ControllerState<T>) -> Result<CondensedQp<T>> {
    let (nx, nu, hz) = (cfg.nx(), cfg.nu(), cfg.horizon);
    check_dim("nominal state", nx, state.z.len())?;
    check_dim("state estimate", nx, state.x_hat.len())?;
    let a = &cfg.system.a;
    let b = &cfg.system.b;
    let acl = a + b * &cfg.k;
    let nv = nu * hz;

    let mut z_free = Vec::with_capacity(hz + 1);
    let mut gamma = Vec::with_capacity(hz + 1);
    let mut e = Vec::with_capacity(hz + 1);
    z_free.push(state.z.clone());
    gamma.push(DMatrix::zeros(nx, nv));
    e.push(&state.x_hat - &state.z);
    for i in 0..hz {
        let zf = a * &z_free[i];
        let mut g = a * &gamma[i];
        g.view_mut((0, i * nu), (nx, nu)).add_assign(b);
        z_free.push(zf);
        gamma.push(g);
        e.push(&acl * &e[i]);
    }

    // Cost: Σ ‖x̄_i − x*‖²_Q + ‖u_i − u*‖²_R + ‖x̄_H − x*‖²_P, with
    // x̄_i = z_free_i + e_i + Γ_i v and u_i = E_i v + K e_i.
    let two = lit::<T>(2.0);
    let mut hess = DMatrix::zeros(nv, nv);
    let mut lin = DVector::zeros(nv);
    let mut constant = T::zero();
    for i in 0..=hz {
        let w = if i == hz { &cfg.p } else { &cfg.q };
        let c = &z_free[i] + &e[i] - &cfg.x_target;
        let gw = gamma[i].transpose() * w;
        hess += &gw * &gamma[i] * two;
        lin += &gw * &c * two;
        constant += c.dot(&(w * &c));
        if i < hz {
            let d = &cfg.k * &e[i] - &cfg.u_target;
            hess.view_mut((i * nu, i * nu), (nu, nu)).add_assign(&(&cfg.r * two));
            lin.rows_mut(i * nu, nu).add_assign(&(&cfg.r * &d * two));
            constant += d.dot(&(&cfg.r * &d));
        }
    }

    // Constraints: G_z z_i + G_v v_i ≤ h on each step, G_f z_H ≤ h_f.
    let mut rows: Vec<(DVector<T>, T)> = Vec::new();
    for i in 0..hz {
        let poly = cfg.tightened.at(state.t + i);
        let gz = poly.g.columns(0, nx);
        let gv = poly.g.columns(nx, nu);
        let mut ai = &gz * &gamma[i];
        ai.view_mut((0, i * nu), (poly.nrows(), nu)).add_assign(&gv);
        let bi = &poly.h - &gz * &z_free[i];
        for r in 0..poly.nrows() {
            rows.push((ai.row(r).transpose(), bi[r]));
        }
    }
    let term: &Polytope<T> = &cfg.tightened.terminal;
    let af = &term.g * &gamma[hz];
    let bf = &term.h - &term.g * &z_free[hz];
    for r in 0..term.nrows() {
        rows.push((af.row(r).transpose(), bf[r]));
    }
    let m = rows.len();
    let amat = DMatrix::from_fn(m, nv, |r, j| rows[r].0[j]);
    let upper = DVector::from_fn(m, |r, _| rows[r].1);
    let lower = DVector::from_element(m, lit(f64::NEG_INFINITY));
    let problem = QpProblem::new(symmetrize(&hess), lin, amat, lower, upper)?;
    Ok(CondensedQp {
        problem,
        constant,
        z_free,
        gamma,
        e,
    })
}

#[derive(Debug, Clone)]
pub struct QpSolution<T: Real> {
    pub v: Vec<DVector<T>>,
    pub z_traj: Vec<DVector<T>>,
    pub xbar_traj: Vec<DVector<T>>,
    pub objective: T,
    pub kkt_residual: T,
    pub status: QpStatus,
}

fn split_inputs<T: Real>(v: &DVector<T>, nu: usize) -> Vec<DVector<T>> {
    (0..v.len() / nu).map(|i| v.rows(i * nu, nu).into_owned()).collect()
}

fn stack_inputs<T: Real>(v: &[DVector<T>]) -> DVector<T> {
    DVector::from_iterator(v.iter().map(|x| x.len()).sum(), v.iter().flat_map(|x| x.iter().copied()))
}

/// Solves the condensed QP with a fresh solver.
pub fn solve_condensed<T: Real>(qp: &CondensedQp<T>, settings: QpSettings<T>) -> Result<(QpSolution<T>, QpResult<T>)> {
    let mut solver = AdmmSolver::new(qp.problem.p.clone(), qp.problem.a.clone(), settings)?;
    let res = solver.solve(&qp.problem.q, &qp.problem.l, &qp.problem.u, None)?;
    Ok((package(qp, &res), res))
}

fn package<T: Real>(qp: &CondensedQp<T>, res: &QpResult<T>) -> QpSolution<T> {
    let nv = qp.problem.nvars();
    let hz = qp.gamma.len() - 1;
    let nu = if hz == 0 { 0 } else { nv / hz };
    QpSolution {
        v: split_inputs(&res.x, nu.max(1)),
        z_traj: qp.z_traj(&res.x),
        xbar_traj: qp.xbar_traj(&res.x),
        objective: qp.cost(&res.x),
        kkt_residual: res.kkt.dual(),
        status: res.status,
    }
}

/// Per-step record of the receding-horizon loop.
#[derive(Debug, Clone)]
pub struct StepDiagnostics<T: Real> {
    pub t: usize,
    pub objective: T,
    pub kkt_residual: T,
    pub primal_residual: T,
    pub iterations: usize,
    pub fallback: bool,
    pub status: QpStatus,
}

impl<T: Real> StepDiagnostics<T> {
    /// Single JSON object on one line.
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"t\":{},\"objective\":{:e},\"kkt_residual\":{:e},\"primal_residual\":{:e},\"iterations\":{},\"fallback\":{},\"status\":\"{:?}\"}}",
            self.t,
            to_f64(self.objective),
            to_f64(self.kkt_residual),
            to_f64(self.primal_residual),
            self.iterations,
            self.fallback,
            self.status
        )
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput<T: Real> {
    /// Applied input `u_t = K(x̂_t − z_t) + v_t`.
    pub u: DVector<T>,
    pub v: DVector<T>,
    pub diagnostics: StepDiagnostics<T>,
}

/// Receding-horizon controller owning its state and a cached QP solver.
pub struct Controller<T: Real> {
    cfg: MpcConfig<T>,
    pub state: ControllerState<T>,
    plan: Option<Vec<DVector<T>>>,
    solver: Option<(DMatrix<T>, AdmmSolver<T>)>,
    pub fallbacks: usize,
}

impl<T: Real> Controller<T> {
    pub fn new(cfg: MpcConfig<T>, mu0: DVector<T>) -> Result<Self> {
        check_dim("initial mean", cfg.nx(), mu0.len())?;
        Ok(Self {
            cfg,
            state: ControllerState::new(mu0),
            plan: None,
            solver: None,
            fallbacks: 0,
        })
    }

    pub fn config(&self) -> &MpcConfig<T> {
        &self.cfg
    }

    /// Shifted candidate `v_{1:H−1|t−1}` followed by the terminal law.
    pub fn shifted_candidate(&self, qp: &CondensedQp<T>) -> Option<DVector<T>> {
        let plan = self.plan.as_ref()?;
        let mut v: Vec<DVector<T>> = plan[1..].to_vec();
        let z = qp.z_traj(&stack_inputs(&{
            let mut tmp = v.clone();
            tmp.push(self.cfg.terminal_input.clone());
            tmp
        }));
        let zh1 = &z[self.cfg.horizon - 1];
        v.push(&self.cfg.terminal_input + &self.cfg.k * (zh1 - &self.cfg.terminal_state));
        Some(stack_inputs(&v))
    }

    /// Solves the MPC problem at the current state and returns the input to
    /// apply; falls back to the shifted candidate when the solver fails at
    /// `t > 0`.
    pub fn compute_input(&mut self) -> Result<StepOutput<T>> {
        let qp = assemble_qp(&self.cfg, &self.state)?;
        let reuse = matches!(&self.solver, Some((a, _)) if *a == qp.problem.a);
        if !reuse {
            let solver = AdmmSolver::new(qp.problem.p.clone(), qp.problem.a.clone(), self.cfg.qp_settings)?;
            self.solver = Some((qp.problem.a.clone(), solver));
        }
        let warm = self.shifted_candidate(&qp);
        let solver = &mut self.solver.as_mut().expect("solver initialized").1;
        let res = solver.solve(&qp.problem.q, &qp.problem.l, &qp.problem.u, warm.as_ref())?;
        let tol = candidate_tolerance::<T>();
        let (v_all, fallback, diag_res) = if res.status == QpStatus::Optimal && res.kkt.primal <= tol {
            (res.x.clone(), false, res)
        } else if self.state.t == 0 {
            return Err(Error::Infeasible(format!(
                "MPC problem infeasible at t = 0 (status {:?})",
                res.status
            )));
        } else {
            let cand = warm.ok_or_else(|| Error::Infeasible("no previous plan to shift".into()))?;
            let viol = qp.max_violation(&cand);
            if viol > tol {
                return Err(Error::Infeasible(format!(
                    "shifted candidate violates constraints by {:e} at t = {}",
                    to_f64(viol),
                    self.state.t
                )));
            }
            self.fallbacks += 1;
            (cand, true, res)
        };
        let nu = self.cfg.nu();
        let plan = split_inputs(&v_all, nu);
        let v0 = plan[0].clone();
        let u = &self.cfg.k * (&self.state.x_hat - &self.state.z) + &v0;
        let diagnostics = StepDiagnostics {
            t: self.state.t,
            objective: qp.cost(&v_all),
            kkt_residual: if fallback { T::zero() } else { diag_res.kkt.dual() },
            primal_residual: qp.max_violation(&v_all).max(T::zero()),
            iterations: diag_res.iterations,
            fallback,
            status: diag_res.status,
        };
        self.plan = Some(plan);
        Ok(StepOutput { u, v: v0, diagnostics })
    }

    /// Advances `z_{t+1} = Az_t + Bv_t` and the observer with the next
    /// measurement `y_{t+1}`.
    pub fn update(&mut self, u: &DVector<T>, v: &DVector<T>, y_next: &DVector<T>) -> Result<()> {
        let sys = &self.cfg.system;
        check_dim("measurement", sys.ny(), y_next.len())?;
        let pred = &sys.a * &self.state.x_hat + &sys.b * u;
        self.state.x_hat = &pred + &self.cfg.l * (y_next - &sys.c * &pred);
        self.state.z = &sys.a * &self.state.z + &sys.b * v;
        self.state.t += 1;
        Ok(())
    }

    /// One closed-loop step: solve, apply `u` to `plant` (which returns the
    /// next measurement), update the estimator and tracker.
    pub fn step<F>(&mut self, plant: F) -> Result<StepOutput<T>>
    where
        F: FnOnce(&DVector<T>) -> DVector<T>,
    {
        let out = self.compute_input()?;
        let y = plant(&out.u);
        self.update(&out.u, &out.v, &y)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::solve_dare;

    fn scalar_cfg(horizon: usize, bound: f64) -> MpcConfig<f64> {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = LinearSystem::new(one.clone(), one.clone(), one.clone()).unwrap();
        let (p, k) = solve_dare(&sys.a, &sys.b, &one, &one).unwrap();
        let base = Polytope::from_bounds(
            &DVector::from_column_slice(&[-bound, -bound]),
            &DVector::from_column_slice(&[bound, bound]),
        )
        .unwrap();
        let term = Polytope::from_bounds(
            &DVector::from_column_slice(&[-bound]),
            &DVector::from_column_slice(&[bound]),
        )
        .unwrap();
        MpcConfig::new(
            sys,
            horizon,
            one.clone(),
            one.clone(),
            p,
            k,
            DMatrix::from_element(1, 1, 0.5),
            TightenedSequence {
                per_step: vec![],
                steady: base,
                terminal: term,
            },
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn one_step_matches_hand_derivation() {
        // x⁺ = x + v, cost x² + v² + p(x + v)²  ⇒  v* = −p x / (1 + p)
        let cfg = scalar_cfg(1, 100.0);
        let p = cfg.p[(0, 0)];
        let state = ControllerState::new(DVector::from_element(1, 0.3));
        let qp = assemble_qp(&cfg, &state).unwrap();
        assert!((qp.problem.p[(0, 0)] - 2.0 * (1.0 + p)).abs() < 1e-12);
        assert!((qp.problem.q[0] - 2.0 * p * 0.3).abs() < 1e-12);
        assert!((qp.constant - (0.09 + p * 0.09)).abs() < 1e-12);
        let (sol, _) = solve_condensed(&qp, QpSettings::default()).unwrap();
        assert!((sol.v[0][0] + p * 0.3 / (1.0 + p)).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_stays_put() {
        let cfg = scalar_cfg(5, 1.0);
        let mut ctrl = Controller::new(cfg, DVector::zeros(1)).unwrap();
        for _ in 0..5 {
            let out = ctrl.step(|u| u.clone() * 0.0).unwrap();
            assert!(out.u.amax() < 1e-9);
            assert!(out.diagnostics.objective.abs() < 1e-12);
        }
        assert!(ctrl.state.z.amax() < 1e-9);
    }

    #[test]
    fn rejects_bad_terminal_weight() {
        let cfg = scalar_cfg(3, 1.0);
        let small_p = DMatrix::from_element(1, 1, 0.5);
        let res = MpcConfig::new(
            cfg.system.clone(),
            3,
            cfg.q.clone(),
            cfg.r.clone(),
            small_p,
            cfg.k.clone(),
            cfg.l.clone(),
            cfg.tightened.clone(),
            cfg.x_target.clone(),
            cfg.u_target.clone(),
            cfg.terminal_state.clone(),
            cfg.terminal_input.clone(),
        );
        assert!(res.is_err());
    }

    #[test]
    fn infeasible_at_start_is_fatal() {
        let cfg = scalar_cfg(3, 1.0);
        let mut ctrl = Controller::new(cfg, DVector::from_element(1, 5.0)).unwrap();
        assert!(matches!(ctrl.compute_input(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn diagnostics_json() {
        let d = StepDiagnostics {
            t: 3,
            objective: 1.5,
            kkt_residual: 1e-9,
            primal_residual: 0.0,
            iterations: 50,
            fallback: false,
            status: QpStatus::Optimal,
        };
        let line = d.to_json_line();
        assert!(line.starts_with("{\"t\":3,"));
        assert!(line.contains("\"fallback\":false"));
    }
}
