//! Offline synthesis: LQR gain, steady-state Kalman gain, and the stacked
//! estimation/tracking error system.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    block, check_dim, check_square, is_detectable, is_stabilizable, set_block, solve_spd,
    spectral_radius, symmetrize,
};
use crate::scalar::{lit, to_f64, Real};
use crate::subgaussian::ScalarProxy;

/// `x⁺ = Ax + Bu + w`, `y = Cx + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
}

impl<T: Real> LinearSystem<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        check_square(&a, "state matrix")?;
        check_dim("input matrix rows", a.nrows(), b.nrows())?;
        check_dim("output matrix columns", a.nrows(), c.ncols())?;
        let tol = lit(1e-8);
        if !is_stabilizable(&a, &b, tol) {
            return Err(Error::NotStabilizable);
        }
        if !is_detectable(&a, &c, tol) {
            return Err(Error::NotDetectable);
        }
        Ok(Self { a, b, c })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }
}

/// Scalar proxies of the initial state, process noise and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T: Real> {
    pub sigma0: ScalarProxy<T>,
    pub sigma_w: ScalarProxy<T>,
    pub sigma_eps: ScalarProxy<T>,
}

impl<T: Real> NoiseSpec<T> {
    pub fn new(sigma0: T, sigma_w: T, sigma_eps: T) -> Result<Self> {
        Ok(Self {
            sigma0: ScalarProxy::new(sigma0)?,
            sigma_w: ScalarProxy::new(sigma_w)?,
            sigma_eps: ScalarProxy::new(sigma_eps)?,
        })
    }
}

/// Dynamics of `e = [x − x̂; x − z]` and the map `K^e` to state-input
/// deviations `[x − z; u − v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem<T: Real> {
    pub a_e: DMatrix<T>,
    pub b1_e: DMatrix<T>,
    pub b2_e: DMatrix<T>,
    pub k_e: DMatrix<T>,
    pub k: DMatrix<T>,
    pub l: DMatrix<T>,
    pub spectral_radius: T,
}

impl<T: Real> ErrorSystem<T> {
    pub fn nx(&self) -> usize {
        self.l.nrows()
    }

    pub fn nu(&self) -> usize {
        self.k.nrows()
    }

    pub fn ny(&self) -> usize {
        self.l.ncols()
    }

    /// `1 − ρ(A^e)`.
    pub fn stability_margin(&self) -> T {
        T::one() - self.spectral_radius
    }

    /// Recovers `A` from the blocks: `(A + BK) + (−BK)`.
    pub fn recover_a(&self) -> DMatrix<T> {
        let n = self.nx();
        block(&self.a_e, n, n, n, n) + block(&self.a_e, n, 0, n, n)
    }
}

/// Riccati map `Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
pub fn riccati_map<T: Real>(
    p: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let gain = solve_spd(&s, &(&bt_p * a))?;
    Ok(symmetrize(&(q + a.transpose() * p * a - a.transpose() * p * b * gain)))
}

/// `K = −(R + BᵀPB)⁻¹BᵀPA`.
pub fn lqr_gain<T: Real>(
    p: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let bt_p = b.transpose() * p;
    Ok(-solve_spd(&(r + &bt_p * b), &(bt_p * a))?)
}

/// Stabilizing solution of the discrete algebraic Riccati equation and the
/// associated LQR gain.
///
/// Structured doubling first; if it fails to converge or produces a
/// non-stabilizing solution, plain fixed-point iteration from `Q`.
pub fn solve_dare<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_square(a, "DARE state matrix")?;
    let n = a.nrows();
    check_dim("DARE input rows", n, b.nrows())?;
    check_dim("DARE state weight", n, q.nrows())?;
    check_square(q, "DARE state weight")?;
    check_square(r, "DARE input weight")?;
    check_dim("DARE input weight", b.ncols(), r.nrows())?;
    if r.clone().cholesky().is_none() {
        return Err(Error::Singular("input weight R must be positive definite"));
    }
    if !is_stabilizable(a, b, lit(1e-8)) {
        return Err(Error::NotStabilizable);
    }
    let tol = lit::<T>(1e-9).max(T::epsilon() * lit(1e3));
    let accept = |p: DMatrix<T>| -> Option<(DMatrix<T>, DMatrix<T>)> {
        let p = polish(p, a, b, q, r, tol)?;
        let k = lqr_gain(&p, a, b, r).ok()?;
        (spectral_radius(&(a + b * &k)) < T::one()).then_some((p, k))
    };
    if let Some(sol) = doubling(a, b, q, r).and_then(accept) {
        return Ok(sol);
    }
    let mut p = q.clone();
    for _ in 0..100_000 {
        let next = riccati_map(&p, a, b, q, r)?;
        let diff = (&next - &p).norm();
        p = next;
        if diff <= tol * p.norm().max(T::one()) {
            break;
        }
    }
    accept(p).ok_or_else(|| Error::NonConvergence("Riccati iteration".into()))
}

fn doubling<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Option<DMatrix<T>> {
    let n = a.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = symmetrize(&(b * solve_spd(r, &b.transpose()).ok()?));
    let mut hk = q.clone();
    for _ in 0..200 {
        let w = (&eye + &gk * &hk).lu();
        let w_a = w.solve(&ak)?;
        let w_g = w.solve(&gk)?;
        let a_next = &ak * &w_a;
        let g_next = symmetrize(&(&gk + &ak * w_g * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_a));
        let diff = (&h_next - &hk).norm();
        let scale = h_next.norm().max(T::one());
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if !hk.iter().all(|v| v.is_finite()) {
            return None;
        }
        if diff <= T::epsilon() * lit(10.0) * scale {
            return Some(hk);
        }
    }
    None
}

/// A few fixed-point sweeps to squeeze the residual; `None` if it stays above
/// `tol` relative.
fn polish<T: Real>(
    mut p: DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    tol: T,
) -> Option<DMatrix<T>> {
    for _ in 0..50 {
        let next = riccati_map(&p, a, b, q, r).ok()?;
        let resid = (&next - &p).norm();
        p = next;
        if resid <= tol * p.norm().max(T::epsilon()) {
            return Some(p);
        }
    }
    let resid = (riccati_map(&p, a, b, q, r).ok()? - &p).norm();
    (resid <= tol * p.norm().max(T::epsilon())).then_some(p)
}

/// Relative DARE residual `‖P − Riccati(P)‖_F / ‖P‖_F`.
pub fn dare_residual<T: Real>(
    p: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<T> {
    let rp = riccati_map(p, a, b, q, r)?;
    Ok((rp - p).norm() / p.norm().max(T::epsilon()))
}

/// Steady-state a-posteriori Kalman gain with process intensity `σ_w²I` and
/// measurement intensity `σ_ε²I`.
pub fn design_observer<T: Real>(sys: &LinearSystem<T>, noise: &NoiseSpec<T>) -> Result<DMatrix<T>> {
    if !is_detectable(&sys.a, &sys.c, lit(1e-8)) {
        return Err(Error::NotDetectable);
    }
    let var_eps = noise.sigma_eps.variance();
    if var_eps <= T::zero() {
        return Err(Error::InvalidArgument(
            "measurement proxy must be positive for observer design".into(),
        ));
    }
    let (nx, ny) = (sys.nx(), sys.ny());
    let w = DMatrix::<T>::identity(nx, nx) * noise.sigma_w.variance();
    let v = DMatrix::<T>::identity(ny, ny) * var_eps;
    let (p, _) = solve_dare(&sys.a.transpose(), &sys.c.transpose(), &w, &v)?;
    let s = &sys.c * &p * sys.c.transpose() + v;
    let l = solve_spd(&s, &(&sys.c * &p))?.transpose();
    let est = (DMatrix::identity(nx, nx) - &l * &sys.c) * &sys.a;
    let rho = spectral_radius(&est);
    if rho >= T::one() {
        return Err(Error::NotSchur(to_f64(rho)));
    }
    Ok(l)
}

/// Assembles the error dynamics for `e = [x − x̂; x − z]`:
///
/// ```text
/// A^e = [[A − LCA, 0], [−BK, A + BK]]   B₁^e = [I − LC; I]   B₂^e = [−L; 0]
/// K^e = [[0, I], [−K, K]]
/// ```
///
/// `K^e e = [x − z; u − v]` since `u − v = K(x̂ − z) = K((x − z) − (x − x̂))`.
pub fn build_error_system<T: Real>(
    sys: &LinearSystem<T>,
    k: &DMatrix<T>,
    l: &DMatrix<T>,
) -> Result<ErrorSystem<T>> {
    let (nx, nu, ny) = (sys.nx(), sys.nu(), sys.ny());
    check_dim("feedback gain rows", nu, k.nrows())?;
    check_dim("feedback gain columns", nx, k.ncols())?;
    check_dim("observer gain rows", nx, l.nrows())?;
    check_dim("observer gain columns", ny, l.ncols())?;
    let eye = DMatrix::<T>::identity(nx, nx);
    let lc = l * &sys.c;
    let bk = &sys.b * k;

    let mut a_e = DMatrix::zeros(2 * nx, 2 * nx);
    set_block(&mut a_e, 0, 0, &((&eye - &lc) * &sys.a));
    set_block(&mut a_e, nx, 0, &(-&bk));
    set_block(&mut a_e, nx, nx, &(&sys.a + &bk));

    let mut b1_e = DMatrix::zeros(2 * nx, nx);
    set_block(&mut b1_e, 0, 0, &(&eye - &lc));
    set_block(&mut b1_e, nx, 0, &eye);

    let mut b2_e = DMatrix::zeros(2 * nx, ny);
    set_block(&mut b2_e, 0, 0, &(-l));

    let mut k_e = DMatrix::zeros(nx + nu, 2 * nx);
    set_block(&mut k_e, 0, nx, &eye);
    set_block(&mut k_e, nx, 0, &(-k));
    set_block(&mut k_e, nx, nx, k);

    let rho = spectral_radius(&a_e);
    if rho >= T::one() {
        return Err(Error::NotSchur(to_f64(rho)));
    }
    Ok(ErrorSystem {
        a_e,
        b1_e,
        b2_e,
        k_e,
        k: k.clone(),
        l: l.clone(),
        spectral_radius: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    fn msd() -> LinearSystem<f64> {
        LinearSystem::new(
            m(2, 2, &[1.0, 0.1, -0.05, 0.95]),
            m(2, 1, &[0.0, 0.05]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn scalar_dare_golden_ratio() {
        let one = m(1, 1, &[1.0]);
        let (p, k) = solve_dare(&one, &one, &one, &one).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p[(0, 0)] - phi).abs() < 1e-12);
        assert!((k[(0, 0)] + phi / (1.0 + phi)).abs() < 1e-12);
    }

    #[test]
    fn dare_zero_dynamics() {
        let q = m(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let (p, k) = solve_dare(&DMatrix::zeros(2, 2), &m(2, 1, &[1.0, 0.0]), &q, &m(1, 1, &[1.0])).unwrap();
        assert!((p - &q).amax() < 1e-14);
        assert!(k.amax() < 1e-14);
    }

    #[test]
    fn dare_without_input_solves_lyapunov() {
        let a = m(2, 2, &[0.5, 0.2, 0.0, -0.3]);
        let q = DMatrix::identity(2, 2);
        let (p, k) = solve_dare(&a, &DMatrix::zeros(2, 1), &q, &m(1, 1, &[1.0])).unwrap();
        let lyap = a.transpose() * &p * &a + &q;
        assert!((lyap - &p).amax() < 1e-12);
        assert!(k.amax() == 0.0);
    }

    #[test]
    fn dare_rejects_unstabilizable() {
        let a = m(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let b = m(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            solve_dare(&a, &b, &DMatrix::identity(2, 2), &m(1, 1, &[1.0])),
            Err(Error::NotStabilizable)
        ));
    }

    #[test]
    fn msd_designs_are_stable() {
        let sys = msd();
        let (p, k) = solve_dare(&sys.a, &sys.b, &DMatrix::identity(2, 2), &m(1, 1, &[0.1])).unwrap();
        assert!(dare_residual(&p, &sys.a, &sys.b, &DMatrix::identity(2, 2), &m(1, 1, &[0.1])).unwrap() <= 1e-9);
        assert!(spectral_radius(&(&sys.a + &sys.b * &k)) < 1.0);
        let noise = NoiseSpec::new(0.0, 0.017, 0.017).unwrap();
        let l = design_observer(&sys, &noise).unwrap();
        let err = build_error_system(&sys, &k, &l).unwrap();
        assert!(err.spectral_radius < 1.0);
        assert!(err.stability_margin() > 0.0);
    }

    #[test]
    fn observer_scalar_and_limits() {
        let one = m(1, 1, &[1.0]);
        let sys = LinearSystem::new(one.clone(), one.clone(), one.clone()).unwrap();
        let l = design_observer(&sys, &NoiseSpec::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!((l[(0, 0)] - 0.618_033_988_749_895).abs() < 1e-10);

        let sys = msd();
        let quiet_process = design_observer(&sys, &NoiseSpec::new(0.0, 1e-6, 1.0).unwrap()).unwrap();
        assert!(quiet_process.amax() < 1e-6);
        let quiet_sensor = design_observer(&sys, &NoiseSpec::new(0.0, 1.0, 1e-6).unwrap()).unwrap();
        assert!((quiet_sensor - DMatrix::identity(2, 2)).amax() < 1e-6);
        assert!(design_observer(&sys, &NoiseSpec::new(0.0, 1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn error_system_trivial_gains() {
        let sys = msd();
        let err = build_error_system(&sys, &DMatrix::zeros(1, 2), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(block(&err.a_e, 0, 0, 2, 2), sys.a);
        assert_eq!(block(&err.a_e, 2, 2, 2, 2), sys.a);
        assert!(block(&err.a_e, 2, 0, 2, 2).amax() == 0.0);
        assert_eq!(block(&err.b1_e, 0, 0, 2, 2), DMatrix::identity(2, 2));
        assert_eq!(block(&err.b1_e, 2, 0, 2, 2), DMatrix::identity(2, 2));
        assert!(err.b2_e.amax() == 0.0);
        let e = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&err.k_e * e, DVector::from_column_slice(&[3.0, 4.0, 0.0]));
    }

    #[test]
    fn error_system_blocks_round_trip() {
        let sys = msd();
        let k = m(1, 2, &[-2.0, -3.4]);
        let l = m(2, 2, &[0.6, 0.01, 0.02, 0.55]);
        let err = build_error_system(&sys, &k, &l).unwrap();
        assert!((err.recover_a() - &sys.a).amax() < 1e-15);
        assert_eq!(-block(&err.b2_e, 0, 0, 2, 2), l);
        assert_eq!(block(&err.k_e, 2, 2, 1, 2), k);
        assert_eq!(err.nx(), 2);
        assert_eq!(err.nu(), 1);
    }

    #[test]
    fn state_input_map_matches_closed_loop_deviation() {
        // Simulate plant, observer and nominal tracker one step and compare
        // [x − z; u − v] with K^e e.
        let sys = msd();
        let k = m(1, 2, &[-2.0, -3.4]);
        let l = m(2, 2, &[0.6, 0.0, 0.0, 0.6]);
        let err = build_error_system(&sys, &k, &l).unwrap();
        let x = DVector::from_column_slice(&[0.3, -0.1]);
        let xhat = DVector::from_column_slice(&[0.25, 0.05]);
        let z = DVector::from_column_slice(&[0.1, 0.0]);
        let v = DVector::from_column_slice(&[0.7]);
        let u = &k * (&xhat - &z) + &v;
        let e = DVector::from_iterator(4, (&x - &xhat).iter().chain((&x - &z).iter()).copied());
        let dev = &err.k_e * &e;
        assert!((dev.rows(0, 2) - (&x - &z)).amax() < 1e-15);
        assert!((dev[2] - (u[0] - v[0])).abs() < 1e-14);

        // one step of the error dynamics
        let w = DVector::from_column_slice(&[0.01, -0.02]);
        let eps = DVector::from_column_slice(&[0.003, 0.004]);
        let x1 = &sys.a * &x + &sys.b * &u + &w;
        let y1 = &sys.c * &x1 + &eps;
        let pred = &sys.a * &xhat + &sys.b * &u;
        let xhat1 = &pred + &l * (&y1 - &sys.c * &pred);
        let z1 = &sys.a * &z + &sys.b * &v;
        let e1 = DVector::from_iterator(4, (&x1 - &xhat1).iter().chain((&x1 - &z1).iter()).copied());
        let e1_model = &err.a_e * &e + &err.b1_e * &w + &err.b2_e * &eps;
        assert!((e1 - e1_model).amax() < 1e-14);
    }
}
