//! Dense convex QP solver for `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`.
//!
//! Operator splitting (ADMM) with per-row step sizes and step adaptation,
//! dual-ray infeasibility detection confirmed by an exact Farkas LP, and an
//! active-set polish that turns an approximate ADMM point into a KKT point
//! accurate to round-off.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, check_square, symmetrize};
use crate::lp::farkas_certificate;
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: Real> {
    pub p: DMatrix<T>,
    pub q: DVector<T>,
    pub a: DMatrix<T>,
    pub l: DVector<T>,
    pub u: DVector<T>,
}

impl<T: Real> QpProblem<T> {
    pub fn new(p: DMatrix<T>, q: DVector<T>, a: DMatrix<T>, l: DVector<T>, u: DVector<T>) -> Result<Self> {
        check_square(&p, "QP Hessian")?;
        check_dim("QP linear term", p.nrows(), q.len())?;
        check_dim("QP constraint columns", p.nrows(), a.ncols())?;
        check_dim("QP lower bounds", a.nrows(), l.len())?;
        check_dim("QP upper bounds", a.nrows(), u.len())?;
        if l.iter().zip(u.iter()).any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidArgument("QP lower bound exceeds upper bound".into()));
        }
        if p.iter().chain(q.iter()).chain(a.iter()).any(|v| !v.is_finite())
            || l.iter().chain(u.iter()).any(|v| v.partial_cmp(v).is_none())
        {
            return Err(Error::NonFinite("QP data"));
        }
        Ok(Self {
            p: symmetrize(&p),
            q,
            a,
            l,
            u,
        })
    }

    /// Unconstrained problem.
    pub fn unconstrained(p: DMatrix<T>, q: DVector<T>) -> Result<Self> {
        let n = q.len();
        Self::new(p, q, DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        lit::<T>(0.5) * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn nvars(&self) -> usize {
        self.q.len()
    }

    pub fn ncons(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T: Real> {
    /// `‖max(Ax − u, l − Ax, 0)‖∞`
    pub primal: T,
    /// `‖Px + q + Aᵀy‖∞`
    pub stationarity: T,
    /// Largest `|y_i|·slack_i` plus wrong-sign multiplier magnitude.
    pub complementarity: T,
}

impl<T: Real> KktResiduals<T> {
    /// Stationarity and complementarity combined.
    pub fn dual(&self) -> T {
        self.stationarity.max(self.complementarity)
    }
}

/// Recomputes KKT residuals from raw problem data. Multipliers follow the
/// convention `y_i > 0` at the upper bound, `y_i < 0` at the lower bound.
pub fn kkt_residuals<T: Real>(prob: &QpProblem<T>, x: &DVector<T>, y: &DVector<T>) -> KktResiduals<T> {
    let ax = &prob.a * x;
    let mut primal = T::zero();
    let mut comp = T::zero();
    for i in 0..prob.ncons() {
        let (lo, hi) = (prob.l[i], prob.u[i]);
        primal = primal.max(ax[i] - hi).max(lo - ax[i]);
        let yi = y[i];
        if yi > T::zero() {
            comp = comp.max(if hi.is_finite() { yi * (hi - ax[i]).abs() } else { yi });
        } else if yi < T::zero() {
            comp = comp.max(if lo.is_finite() { -yi * (ax[i] - lo).abs() } else { -yi });
        }
    }
    let stat = (&prob.p * x + &prob.q + prob.a.transpose() * y).amax();
    KktResiduals {
        primal,
        stationarity: stat,
        complementarity: comp,
    }
}

/// ADMM iterates with KKT residuals below this (relative) are not polished.
pub const POLISH_SKIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings<T: Real> {
    pub rho: T,
    pub sigma: T,
    pub alpha: T,
    pub eps_abs: T,
    pub eps_rel: T,
    pub eps_infeasible: T,
    pub max_iter: usize,
    pub check_every: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
}

impl<T: Real> Default for QpSettings<T> {
    fn default() -> Self {
        Self {
            rho: lit(0.1),
            sigma: lit(1e-6),
            alpha: lit(1.6),
            eps_abs: lit(1e-8),
            eps_rel: lit(1e-8),
            eps_infeasible: lit(1e-6),
            max_iter: 20_000,
            check_every: 25,
            adaptive_rho: true,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpResult<T: Real> {
    pub status: QpStatus,
    pub x: DVector<T>,
    pub y: DVector<T>,
    pub objective: T,
    pub iterations: usize,
    pub kkt: KktResiduals<T>,
    pub polished: bool,
    /// Farkas multipliers `y` with `Aᵀy = 0` and `uᵀy₊ + lᵀy₋ < 0` when infeasible.
    pub certificate: Option<DVector<T>>,
}

/// `‖Aᵀy‖∞` and the support value `uᵀy₊ + lᵀy₋` of a Farkas ray (negative
/// for a valid certificate).
pub fn certificate_residual<T: Real>(prob: &QpProblem<T>, y: &DVector<T>) -> (T, T) {
    let mut value = T::zero();
    for i in 0..y.len() {
        if y[i] > T::zero() {
            value += prob.u[i] * y[i];
        } else if y[i] < T::zero() {
            value += prob.l[i] * y[i];
        }
    }
    ((prob.a.transpose() * y).amax(), value)
}

/// ADMM solver caching the factorization of `P + σI + Aᵀ diag(ρ) A`, reusable
/// for problems sharing `P` and `A` but different `q`, `l`, `u`.
pub struct AdmmSolver<T: Real> {
    p: DMatrix<T>,
    a: DMatrix<T>,
    settings: QpSettings<T>,
    rho_scale: T,
    eq_rows: Vec<bool>,
    factor: Option<(Vec<bool>, T, Cholesky<T, Dyn>)>,
    /// Duals and step size of the last solve, reused on warm starts.
    last: Option<(DVector<T>, T)>,
}

fn is_eq<T: Real>(l: T, u: T) -> bool {
    (u - l).abs() <= lit::<T>(1e-12) * l.abs().max(T::one())
}

impl<T: Real> AdmmSolver<T> {
    pub fn new(p: DMatrix<T>, a: DMatrix<T>, settings: QpSettings<T>) -> Result<Self> {
        check_square(&p, "QP Hessian")?;
        check_dim("QP constraint columns", p.nrows(), a.ncols())?;
        let m = a.nrows();
        Ok(Self {
            p: symmetrize(&p),
            a,
            rho_scale: settings.rho,
            settings,
            eq_rows: vec![false; m],
            factor: None,
            last: None,
        })
    }

    fn rho_vec(&self) -> DVector<T> {
        DVector::from_iterator(
            self.eq_rows.len(),
            self.eq_rows
                .iter()
                .map(|&e| if e { self.rho_scale * lit(1e3) } else { self.rho_scale }),
        )
    }

    fn factorize(&mut self) -> Result<()> {
        if let Some((eq, rho, _)) = &self.factor {
            if *eq == self.eq_rows && *rho == self.rho_scale {
                return Ok(());
            }
        }
        let n = self.p.nrows();
        let rho = self.rho_vec();
        let mut k = &self.p + DMatrix::identity(n, n) * self.settings.sigma;
        k += self.a.transpose() * DMatrix::from_diagonal(&rho) * &self.a;
        let ch = symmetrize(&k)
            .cholesky()
            .ok_or(Error::Singular("ADMM system matrix"))?;
        self.factor = Some((self.eq_rows.clone(), self.rho_scale, ch));
        Ok(())
    }

    /// Solves with the cached `P`, `A` and the given `q`, `l`, `u`.
    pub fn solve(
        &mut self,
        q: &DVector<T>,
        l: &DVector<T>,
        u: &DVector<T>,
        warm_x: Option<&DVector<T>>,
    ) -> Result<QpResult<T>> {
        let prob = QpProblem::new(self.p.clone(), q.clone(), self.a.clone(), l.clone(), u.clone())?;
        self.solve_problem(&prob, warm_x)
    }

    fn solve_problem(&mut self, prob: &QpProblem<T>, warm_x: Option<&DVector<T>>) -> Result<QpResult<T>> {
        let (n, m) = (prob.nvars(), prob.ncons());
        let s = self.settings;
        self.eq_rows = (0..m).map(|i| is_eq(prob.l[i], prob.u[i])).collect();
        let warm_y = match (&self.last, warm_x) {
            (Some((y, rho)), Some(_)) if y.len() == m => Some((y.clone(), *rho)),
            _ => None,
        };
        self.rho_scale = warm_y.as_ref().map_or(s.rho, |w| w.1);
        self.factorize()?;

        let mut x = warm_x.cloned().unwrap_or_else(|| DVector::zeros(n));
        let mut y: DVector<T> = warm_y.map_or_else(|| DVector::zeros(m), |w| w.0);
        let mut z = (&prob.a * &x).zip_zip_map(&prob.l, &prob.u, |v, lo, hi| v.max(lo).min(hi));
        let mut iterations = 0;
        let mut status = QpStatus::MaxIter;
        let mut certificate = None;
        let mut lp_checked = false;

        while iterations < s.max_iter {
            iterations += 1;
            let rho = self.rho_vec();
            let rhs = &x * s.sigma - &prob.q + prob.a.transpose() * (rho.component_mul(&z) - &y);
            let xt = self.factor.as_ref().expect("factorized").2.solve(&rhs);
            let zt = &prob.a * &xt;
            x = &xt * s.alpha + &x * (T::one() - s.alpha);
            let z_relax = &zt * s.alpha + &z * (T::one() - s.alpha);
            let y_prev = y.clone();
            let z_new = (&z_relax + y.component_div(&rho))
                .zip_zip_map(&prob.l, &prob.u, |v, lo, hi| v.max(lo).min(hi));
            y += rho.component_mul(&(&z_relax - &z_new));
            z = z_new;

            if iterations % s.check_every != 0 {
                continue;
            }
            let ax = &prob.a * &x;
            let px = &prob.p * &x;
            let aty = prob.a.transpose() * &y;
            let r_prim = if m > 0 { (&ax - &z).amax() } else { T::zero() };
            let r_dual = (&px + &prob.q + &aty).amax();
            let eps_prim = s.eps_abs + s.eps_rel * ax.amax().max(z.amax());
            let eps_dual = s.eps_abs + s.eps_rel * px.amax().max(aty.amax()).max(prob.q.amax());
            if r_prim <= eps_prim && r_dual <= eps_dual {
                status = QpStatus::Optimal;
                break;
            }

            // Dual ray suspicion: Aᵀδy ≈ 0 with negative support value.
            let dy = &y - &y_prev;
            let dy_norm = dy.amax();
            if dy_norm > T::zero() && !lp_checked {
                let (ray, value) = certificate_residual(prob, &dy);
                if ray <= s.eps_infeasible * dy_norm && value < -s.eps_infeasible * dy_norm {
                    lp_checked = true;
                    if let Some(cert) = exact_certificate(prob)? {
                        certificate = Some(cert);
                        status = QpStatus::Infeasible;
                        break;
                    }
                }
            }

            if s.adaptive_rho && m > 0 {
                let prim_scale = ax.amax().max(z.amax()).max(lit(1e-12));
                let dual_scale = px.amax().max(aty.amax()).max(prob.q.amax()).max(lit(1e-12));
                let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(lit(1e-30))).sqrt();
                let new_rho = (self.rho_scale * ratio).max(lit(1e-6)).min(lit(1e6));
                if new_rho > self.rho_scale * lit(5.0) || new_rho < self.rho_scale / lit(5.0) {
                    self.rho_scale = new_rho;
                    self.factorize()?;
                }
            }
        }

        if status == QpStatus::MaxIter && m > 0 {
            if let Some(cert) = exact_certificate(prob)? {
                certificate = Some(cert);
                status = QpStatus::Infeasible;
            }
        }

        let mut polished = false;
        let settled = status == QpStatus::Optimal && {
            let k = kkt_residuals(prob, &x, &y);
            let scale = prob.q.amax().max(y.amax()).max(T::one());
            k.primal.max(k.dual()) <= lit::<T>(POLISH_SKIP_TOL) * scale
        };
        if status != QpStatus::Infeasible && s.polish && !settled {
            if let Some((xp, yp)) = polish(prob, &x, &y) {
                let before = kkt_residuals(prob, &x, &y);
                let after = kkt_residuals(prob, &xp, &yp);
                let worst = |k: &KktResiduals<T>| k.primal.max(k.dual());
                if worst(&after) <= worst(&before) || status == QpStatus::MaxIter {
                    x = xp;
                    y = yp;
                    polished = true;
                    let tol = lit::<T>(1e-7).max(T::epsilon() * lit(1e3));
                    if worst(&after) <= tol {
                        status = QpStatus::Optimal;
                    }
                }
            }
        }

        let kkt = kkt_residuals(prob, &x, &y);
        self.last = (status == QpStatus::Optimal).then(|| (y.clone(), self.rho_scale));
        Ok(QpResult {
            status,
            objective: prob.objective(&x),
            x,
            y,
            iterations,
            kkt,
            polished,
            certificate,
        })
    }
}

/// One-shot solve with default settings.
pub fn solve_qp<T: Real>(prob: &QpProblem<T>) -> Result<QpResult<T>> {
    solve_qp_with(prob, QpSettings::default(), None)
}

pub fn solve_qp_with<T: Real>(
    prob: &QpProblem<T>,
    settings: QpSettings<T>,
    warm_x: Option<&DVector<T>>,
) -> Result<QpResult<T>> {
    let mut solver = AdmmSolver::new(prob.p.clone(), prob.a.clone(), settings)?;
    solver.solve_problem(prob, warm_x)
}

/// Farkas certificate via LP, translated to the `l ≤ Ax ≤ u` sign convention.
fn exact_certificate<T: Real>(prob: &QpProblem<T>) -> Result<Option<DVector<T>>> {
    let (n, m) = (prob.nvars(), prob.ncons());
    let mut g_rows: Vec<(usize, T)> = Vec::new(); // (row, sign)
    let mut e_rows: Vec<usize> = Vec::new();
    for i in 0..m {
        if is_eq(prob.l[i], prob.u[i]) {
            e_rows.push(i);
            continue;
        }
        if prob.u[i].is_finite() {
            g_rows.push((i, T::one()));
        }
        if prob.l[i].is_finite() {
            g_rows.push((i, -T::one()));
        }
    }
    let g = DMatrix::from_fn(g_rows.len(), n, |r, j| g_rows[r].1 * prob.a[(g_rows[r].0, j)]);
    let h = DVector::from_fn(g_rows.len(), |r, _| {
        let (i, s) = g_rows[r];
        if s > T::zero() {
            prob.u[i]
        } else {
            -prob.l[i]
        }
    });
    let e = DMatrix::from_fn(e_rows.len(), n, |r, j| prob.a[(e_rows[r], j)]);
    let f = DVector::from_fn(e_rows.len(), |r, _| prob.u[e_rows[r]]);
    let Some((yg, ye)) = farkas_certificate(&g, &h, &e, &f)? else {
        return Ok(None);
    };
    let mut y = DVector::zeros(m);
    for (r, &(i, s)) in g_rows.iter().enumerate() {
        y[i] += s * yg[r];
    }
    for (r, &i) in e_rows.iter().enumerate() {
        y[i] += ye[r];
    }
    Ok(Some(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Upper,
    Lower,
    Equal,
}

/// Primal-dual active-set refinement starting from the ADMM multipliers.
fn polish<T: Real>(prob: &QpProblem<T>, x0: &DVector<T>, y0: &DVector<T>) -> Option<(DVector<T>, DVector<T>)> {
    let m = prob.ncons();
    let scale = y0.amax().max(T::one());
    let guess_tol = lit::<T>(1e-7) * scale;
    let ax0 = &prob.a * x0;
    let mut active: Vec<(usize, Side)> = Vec::new();
    for i in 0..m {
        if is_eq(prob.l[i], prob.u[i]) {
            active.push((i, Side::Equal));
        } else if y0[i] > guess_tol && prob.u[i].is_finite() {
            active.push((i, Side::Upper));
        } else if y0[i] < -guess_tol && prob.l[i].is_finite() {
            active.push((i, Side::Lower));
        } else if prob.u[i].is_finite() && ax0[i] > prob.u[i] + guess_tol {
            active.push((i, Side::Upper));
        } else if prob.l[i].is_finite() && ax0[i] < prob.l[i] - guess_tol {
            active.push((i, Side::Lower));
        }
    }
    let feas_tol = lit::<T>(1e-10).max(T::epsilon() * lit(100.0));
    let mult_tol = lit::<T>(1e-12).max(T::epsilon() * lit(10.0));
    let mut seen: Vec<Vec<(usize, Side)>> = Vec::new();
    for _ in 0..50 {
        let (x, y) = solve_kkt(prob, &active)?;
        // Drop the multiplier with the worst sign first.
        let mut worst: Option<(usize, T)> = None;
        for (k, &(i, side)) in active.iter().enumerate() {
            let bad = match side {
                Side::Upper => -y[i],
                Side::Lower => y[i],
                Side::Equal => T::zero(),
            };
            if bad > mult_tol * scale && worst.map_or(true, |(_, b)| bad > b) {
                worst = Some((k, bad));
            }
        }
        if let Some((k, _)) = worst {
            active.remove(k);
            continue;
        }
        let ax = &prob.a * &x;
        let mut add: Option<(usize, Side, T)> = None;
        for i in 0..m {
            if active.iter().any(|&(j, _)| j == i) {
                continue;
            }
            let bound_scale = prob.u[i].abs().max(prob.l[i].abs()).max(T::one());
            let tol = feas_tol * if bound_scale.is_finite() { bound_scale } else { T::one() };
            if ax[i] - prob.u[i] > tol && add.map_or(true, |(_, _, v)| ax[i] - prob.u[i] > v) {
                add = Some((i, Side::Upper, ax[i] - prob.u[i]));
            }
            if prob.l[i] - ax[i] > tol && add.map_or(true, |(_, _, v)| prob.l[i] - ax[i] > v) {
                add = Some((i, Side::Lower, prob.l[i] - ax[i]));
            }
        }
        match add {
            Some((i, side, _)) => {
                active.push((i, side));
                active.sort_by_key(|&(j, _)| j);
                if seen.contains(&active) {
                    return None;
                }
                seen.push(active.clone());
            }
            None => return Some((x, y)),
        }
    }
    None
}

fn solve_kkt<T: Real>(prob: &QpProblem<T>, active: &[(usize, Side)]) -> Option<(DVector<T>, DVector<T>)> {
    let n = prob.nvars();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&prob.p);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&prob.q));
    for (r, &(i, side)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = prob.a[(i, j)];
            kkt[(j, n + r)] = prob.a[(i, j)];
        }
        rhs[n + r] = match side {
            Side::Lower => prob.l[i],
            _ => prob.u[i],
        };
    }
    let sol = kkt.clone().lu().solve(&rhs).or_else(|| {
        // Dependent active rows: regularize the multiplier block.
        let mut reg = kkt.clone();
        let eps = lit::<T>(1e-10);
        for r in 0..k {
            reg[(n + r, n + r)] = -eps;
        }
        reg.lu().solve(&rhs)
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // One step of iterative refinement against the unregularized system.
    let resid = &rhs - &kkt * &sol;
    let sol = match kkt.clone().lu().solve(&resid) {
        Some(corr) if corr.iter().all(|v| v.is_finite()) => &sol + corr,
        _ => sol,
    };
    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(prob.ncons());
    for (r, &(i, _)) in active.iter().enumerate() {
        y[i] = sol[n + r];
    }
    Some((x, y))
}

/// Counts finite bounds, used by callers sizing diagnostics.
pub fn count_finite_bounds<T: Real>(prob: &QpProblem<T>) -> usize {
    prob.l.iter().chain(prob.u.iter()).filter(|v| v.is_finite()).count()
}

/// Default primal tolerance for accepting a fallback candidate.
pub fn candidate_tolerance<T: Real>() -> T {
    lit::<T>(1e-7).max(T::epsilon() * from_usize::<T>(1000))
}
