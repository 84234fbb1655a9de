//! Offline propagation of the error proxy and the probabilistic reachable
//! sets it induces in state-input space.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::bounds::{cylindrical_set, elliptical_set, half_space_set, ConfidenceSet};
use crate::design::{ErrorSystem, NoiseSpec};
use crate::error::{Error, Result};
use crate::linalg::{check_dim, check_square, sanitize_psd, set_block, spectral_radius, symmetrize};
use crate::scalar::{lit, to_f64, Real};
use crate::subgaussian::SubGaussianVector;

/// Iteration cap for the steady-state search.
pub const STEADY_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxySequence<T: Real> {
    /// `Σ_0, …, Σ_{steps−1}`.
    pub per_step: Vec<DMatrix<T>>,
    pub steady: DMatrix<T>,
    /// First index whose trace is within `1e-6` (relative) of the steady trace.
    pub converged_at: usize,
}

impl<T: Real> ProxySequence<T> {
    /// `Σ_t`, frozen at the steady state past the computed horizon.
    pub fn at(&self, t: usize) -> &DMatrix<T> {
        self.per_step.get(t).unwrap_or(&self.steady)
    }

    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }

    /// One row per step: `step, m11, m12, …` in row-major order, then a
    /// final `steady` row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.steady.nrows();
        let mut header = vec!["step".to_string()];
        for i in 0..n {
            for j in 0..n {
                header.push(format!("s{i}_{j}"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        let row = |label: String, m: &DMatrix<T>| {
            let mut cells = vec![label];
            for i in 0..n {
                for j in 0..n {
                    cells.push(format!("{:e}", to_f64(m[(i, j)])));
                }
            }
            cells.join(",")
        };
        for (t, m) in self.per_step.iter().enumerate() {
            writeln!(out, "{}", row(t.to_string(), m))?;
        }
        writeln!(out, "{}", row("steady".into(), &self.steady))
    }
}

/// `σ_w² B₁B₁ᵀ + σ_ε² B₂B₂ᵀ`.
pub fn noise_injection<T: Real>(err: &ErrorSystem<T>, noise: &NoiseSpec<T>) -> DMatrix<T> {
    symmetrize(
        &(&err.b1_e * err.b1_e.transpose() * noise.sigma_w.variance()
            + &err.b2_e * err.b2_e.transpose() * noise.sigma_eps.variance()),
    )
}

/// Proxy of `e_0 = [x_0 − x̂_0; x_0 − z_0]` when `x̂_0 = z_0 = µ_0`: both
/// blocks equal `x_0 − µ_0`, so `Σ_0 = σ_0² [[I, I], [I, I]]`.
pub fn coupled_initial_proxy<T: Real>(nx: usize, sigma0_sq: T) -> DMatrix<T> {
    let block = DMatrix::<T>::identity(nx, nx) * sigma0_sq;
    let mut s = DMatrix::zeros(2 * nx, 2 * nx);
    for (r, c) in [(0, 0), (0, nx), (nx, 0), (nx, nx)] {
        set_block(&mut s, r, c, &block);
    }
    s
}

/// `Σ_{t+1} = A^e Σ_t A^eᵀ + σ_w² B₁B₁ᵀ + σ_ε² B₂B₂ᵀ` from `Σ_0 = σ_0² I`.
pub fn propagate_proxy<T: Real>(
    err: &ErrorSystem<T>,
    noise: &NoiseSpec<T>,
    steps: usize,
) -> Result<ProxySequence<T>> {
    let n = err.a_e.nrows();
    let init = DMatrix::identity(n, n) * noise.sigma0.variance();
    propagate_linear(&err.a_e, &noise_injection(err, noise), &init, steps)
}

/// Same recursion with an explicit initial proxy.
pub fn propagate_proxy_from<T: Real>(
    err: &ErrorSystem<T>,
    noise: &NoiseSpec<T>,
    init: &DMatrix<T>,
    steps: usize,
) -> Result<ProxySequence<T>> {
    propagate_linear(&err.a_e, &noise_injection(err, noise), init, steps)
}

/// `S_{t+1} = A S_t Aᵀ + W` for `steps` entries plus the fixed point.
/// Shared by proxy and covariance propagation.
pub fn propagate_linear<T: Real>(
    a: &DMatrix<T>,
    injection: &DMatrix<T>,
    init: &DMatrix<T>,
    steps: usize,
) -> Result<ProxySequence<T>> {
    check_square(a, "propagation matrix")?;
    check_dim("injection size", a.nrows(), injection.nrows())?;
    check_dim("initial proxy size", a.nrows(), init.nrows())?;
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let rho = spectral_radius(a);
    if rho >= T::one() {
        return Err(Error::NotSchur(to_f64(rho)));
    }
    let injection = sanitize_psd(injection)?;
    let step = |s: &DMatrix<T>| symmetrize(&(a * s * a.transpose() + &injection));

    let mut per_step = Vec::with_capacity(steps);
    let mut cur = sanitize_psd(init)?;
    for _ in 0..steps {
        let next = step(&cur);
        per_step.push(std::mem::replace(&mut cur, next));
    }

    let tol = lit::<T>(1e-10).max(T::epsilon() * lit(10.0));
    let mut steady = per_step.last().cloned().unwrap_or(cur);
    let mut converged = false;
    for _ in 0..STEADY_CAP {
        let next = step(&steady);
        let diff = (&next - &steady).norm();
        let scale = steady.norm();
        steady = next;
        if diff <= tol * scale || diff == T::zero() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence("steady-state proxy".into()));
    }
    if let Some(exact) = lyapunov_kronecker(a, &injection) {
        if (step(&exact) - &exact).norm() <= (step(&steady) - &steady).norm() {
            steady = exact;
        }
    }
    let steady = sanitize_psd(&steady)?;

    let target = steady.trace();
    let close = |m: &DMatrix<T>| (m.trace() - target).abs() <= lit::<T>(1e-6) * target.abs().max(T::epsilon());
    let converged_at = (0..per_step.len())
        .find(|&t| per_step[t..].iter().all(close))
        .unwrap_or(per_step.len());

    Ok(ProxySequence {
        per_step,
        steady,
        converged_at,
    })
}

/// Fixed point of `S = ASAᵀ + W` from `vec S = (I − A⊗A)⁻¹ vec W`, for
/// small dimensions only.
fn lyapunov_kronecker<T: Real>(a: &DMatrix<T>, w: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = a.nrows();
    if n > 16 {
        return None;
    }
    let big = DMatrix::<T>::identity(n * n, n * n) - a.kronecker(a);
    let vec_w = DVector::from_column_slice(w.as_slice());
    let sol = big.lu().solve(&vec_w)?;
    Some(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// Shape of the reachable set built from each proxy.
#[derive(Debug, Clone, PartialEq)]
pub enum PrsKind<T: Real> {
    /// Single half-space with normal `h` in state-input space.
    HalfSpace(DVector<T>),
    Elliptical,
    /// Cylinder whose bounded directions are the rows of `H`.
    Cylinder(DMatrix<T>),
}

/// State-input proxy `K^e Σ K^eᵀ`.
pub fn state_input_proxy<T: Real>(err: &ErrorSystem<T>, sigma: &DMatrix<T>) -> DMatrix<T> {
    symmetrize(&(&err.k_e * sigma * err.k_e.transpose()))
}

/// Reachable set of `ξ − ξ̄` at one step, centered at the origin.
pub fn prs_set<T: Real>(
    err: &ErrorSystem<T>,
    sigma: &DMatrix<T>,
    delta: T,
    kind: &PrsKind<T>,
) -> Result<ConfidenceSet<T>> {
    let proxy = state_input_proxy(err, sigma);
    let x = SubGaussianVector::new(DVector::zeros(proxy.nrows()), proxy)?;
    match kind {
        PrsKind::HalfSpace(h) => half_space_set(&x, h, delta),
        PrsKind::Elliptical => elliptical_set(&x, delta),
        PrsKind::Cylinder(h) => cylindrical_set(&x, h, delta),
    }
}

/// Reachable sets for every entry of the sequence.
pub fn prs_sequence<T: Real>(
    seq: &ProxySequence<T>,
    err: &ErrorSystem<T>,
    delta: T,
    kind: &PrsKind<T>,
) -> Result<Vec<ConfidenceSet<T>>> {
    seq.per_step
        .iter()
        .map(|s| prs_set(err, s, delta, kind))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{elliptical_radius_sq, g_inverse};
    use crate::design::{build_error_system, design_observer, solve_dare, LinearSystem};

    fn msd_error_system() -> (ErrorSystem<f64>, NoiseSpec<f64>) {
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.05, 0.95]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.05]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let (_, k) = solve_dare(&sys.a, &sys.b, &DMatrix::identity(2, 2), &DMatrix::from_element(1, 1, 0.1)).unwrap();
        let noise = NoiseSpec::new(0.0, 0.017, 0.017).unwrap();
        let l = design_observer(&sys, &noise).unwrap();
        (build_error_system(&sys, &k, &l).unwrap(), noise)
    }

    #[test]
    fn zero_noise_zero_proxy() {
        let (err, _) = msd_error_system();
        let seq = propagate_proxy(&err, &NoiseSpec::new(0.0, 0.0, 0.0).unwrap(), 20).unwrap();
        assert!(seq.per_step.iter().all(|m| m.amax() == 0.0));
        assert_eq!(seq.steady.amax(), 0.0);
    }

    #[test]
    fn scalar_geometric_series() {
        let a = DMatrix::from_element(1, 1, 0.8);
        let w = DMatrix::from_element(1, 1, 0.3f64.powi(2));
        let seq = propagate_linear(&a, &w, &DMatrix::zeros(1, 1), 5).unwrap();
        let expect = 0.09 / (1.0 - 0.64);
        assert!((seq.steady[(0, 0)] - expect).abs() < 1e-10 * expect);
        assert!((seq.per_step[1][(0, 0)] - 0.09).abs() < 1e-16);
    }

    #[test]
    fn one_step_matches_recursion() {
        let (err, _) = msd_error_system();
        let noise = NoiseSpec::new(0.01, 0.02, 0.03).unwrap();
        let seq = propagate_proxy(&err, &noise, 2).unwrap();
        let s0 = DMatrix::identity(4, 4) * 1e-4;
        assert_eq!(seq.per_step[0], s0);
        let direct = &err.a_e * &s0 * err.a_e.transpose()
            + &err.b1_e * err.b1_e.transpose() * 4e-4
            + &err.b2_e * err.b2_e.transpose() * 9e-4;
        assert!((&seq.per_step[1] - direct).amax() < 1e-18);
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let (err, noise) = msd_error_system();
        let seq = propagate_proxy(&err, &noise, 50).unwrap();
        let again = &err.a_e * &seq.steady * err.a_e.transpose() + noise_injection(&err, &noise);
        assert!((again - &seq.steady).norm() <= 1e-8 * seq.steady.norm());
        assert!(seq.converged_at <= 50);
    }

    #[test]
    fn rejects_unstable() {
        let a = DMatrix::from_element(1, 1, 1.01);
        assert!(matches!(
            propagate_linear(&a, &DMatrix::zeros(1, 1), &DMatrix::zeros(1, 1), 3),
            Err(Error::NotSchur(_))
        ));
    }

    #[test]
    fn zero_gain_input_block_is_singular() {
        let (mut err, noise) = msd_error_system();
        err.k_e.fill(0.0);
        set_block(&mut err.k_e, 0, 2, &DMatrix::identity(2, 2));
        let seq = propagate_proxy(&err, &noise, 5).unwrap();
        let s = &seq.per_step[3];
        assert!(prs_set(&err, s, 0.05, &PrsKind::Elliptical).is_err());
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(prs_set(&err, s, 0.05, &PrsKind::Cylinder(h)).is_ok());
    }

    #[test]
    fn msd_radius_and_nesting() {
        let r = elliptical_radius_sq(3, 0.05).unwrap();
        let y = 0.05f64.powf(-2.0 / 3.0);
        assert!((y - 7.368).abs() < 1e-3);
        assert!((r - (3.0 + 3.0 * g_inverse(y).unwrap())).abs() < 1e-12);

        let (err, noise) = msd_error_system();
        let seq = propagate_proxy(&err, &noise, 40).unwrap();
        // Σ_0 = 0 is singular; start from the first noisy step.
        let tail = ProxySequence {
            per_step: seq.per_step[1..].to_vec(),
            ..seq.clone()
        };
        let sets = prs_sequence(&tail, &err, 0.05, &PrsKind::Elliptical).unwrap();
        let d = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let supports: Vec<f64> = sets.iter().map(|s| s.support(&d).unwrap()).collect();
        for w in supports.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }

    #[test]
    fn csv_export_shape() {
        let (err, noise) = msd_error_system();
        let seq = propagate_proxy(&err, &noise, 3).unwrap();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 17);
        assert!(lines[4].starts_with("steady,"));
    }
}
