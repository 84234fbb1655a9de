//! Small dense linear-algebra helpers shared by the numeric modules.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Absolute tolerance for symmetry and PSD checks.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn is_symmetric<T: Real>(m: &DMatrix<T>, tol: T) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

/// PSD tolerance scaled to the magnitude of the matrix and the precision of `T`.
pub fn psd_tolerance<T: Real>(m: &DMatrix<T>) -> T {
    let scale = m.amax().max(T::one());
    lit::<T>(PSD_TOL).max(T::epsilon() * from_usize::<T>(100 * m.nrows().max(1)) * scale)
}

pub fn min_eigenvalue<T: Real>(sym: &DMatrix<T>) -> T {
    if sym.nrows() == 0 {
        return T::zero();
    }
    sym.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| lit(f64::MAX)), |a, b| a.min(b))
}

pub fn max_eigenvalue<T: Real>(sym: &DMatrix<T>) -> T {
    if sym.nrows() == 0 {
        return T::zero();
    }
    sym.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::min_value().unwrap_or_else(|| lit(f64::MIN)), |a, b| a.max(b))
}

/// Symmetrizes `m` and clips tiny negative eigenvalues to zero.
///
/// Fails with [`Error::NotPsd`] if an eigenvalue is more negative than the
/// tolerance. Matrices that are already PSD are returned symmetrized but
/// otherwise untouched.
pub fn sanitize_psd<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "proxy must be square",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("proxy matrix"));
    }
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return Ok(sym);
    }
    let tol = psd_tolerance(&sym);
    let eig = sym.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(T::zero(), |a, b| a.min(b));
    if min >= T::zero() {
        return Ok(sym);
    }
    if -min > tol {
        return Err(Error::NotPsd {
            min_eigenvalue: to_f64(min),
        });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(T::zero()));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// `sqrt(vᵀ M v)`, clamped at zero against round-off.
pub fn weighted_norm<T: Real>(v: &DVector<T>, m: &DMatrix<T>) -> T {
    let q = (v.transpose() * m * v)[(0, 0)];
    q.max(T::zero()).sqrt()
}

const SCHUR_MAX_ITER: usize = 10_000;

fn schur_eigenvalues<T: Real>(m: &DMatrix<T>) -> Option<Vec<Complex<T>>> {
    Schur::try_new(m.clone(), T::default_epsilon(), SCHUR_MAX_ITER)
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
}

/// Gelfand estimate `‖M^(2^k)‖^(2^-k)` with per-step renormalisation.
fn gelfand_radius<T: Real>(m: &DMatrix<T>) -> T {
    let mut p = m.clone();
    let mut log_scale = T::zero();
    let mut power = T::one();
    for _ in 0..60 {
        let nrm = p.norm();
        if nrm == T::zero() {
            return T::zero();
        }
        p /= nrm;
        log_scale += nrm.ln() / power;
        p = &p * &p;
        power = power * lit(2.0);
    }
    (log_scale + p.norm().ln() / power).exp()
}

pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    match schur_eigenvalues(m) {
        Some(ev) => ev.iter().map(modulus).fold(T::zero(), |a, b| a.max(b)),
        None => gelfand_radius(m),
    }
}

fn modulus<T: Real>(c: &Complex<T>) -> T {
    (c.re * c.re + c.im * c.im).sqrt()
}

/// Eigenvalues, or `None` when the Schur iteration does not converge.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Option<Vec<Complex<T>>> {
    schur_eigenvalues(m)
}

/// Numerical rank from singular values with a relative threshold.
pub fn rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if top == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Hautus test: `rank [A − λI, B] = n` for every eigenvalue with `|λ| ≥ 1`.
pub fn is_stabilizable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, tol: T) -> bool {
    let n = a.nrows();
    let Some(spectrum) = eigenvalues(a) else {
        return false;
    };
    for lambda in spectrum {
        if modulus(&lambda) < T::one() - tol {
            continue;
        }
        let mut pencil = DMatrix::<Complex<T>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(a[(i, j)], T::zero());
            }
            pencil[(i, i)] -= lambda;
            for j in 0..b.ncols() {
                pencil[(i, n + j)] = Complex::new(b[(i, j)], T::zero());
            }
        }
        let sv = pencil.singular_values();
        let top = sv.iter().copied().fold(T::zero(), |x, y| x.max(y));
        let full = sv.iter().filter(|&&s| s > tol * top.max(T::one())).count();
        if full < n {
            return false;
        }
    }
    true
}

/// Detectability of `(A, C)` is stabilizability of `(Aᵀ, Cᵀ)`.
pub fn is_detectable<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>, tol: T) -> bool {
    is_stabilizable(&a.transpose(), &c.transpose(), tol)
}

/// Solves `M X = B` for symmetric positive definite `M`, falling back to LU.
pub fn solve_spd<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::Singular("linear system"))
}

pub fn solve<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::Singular("linear system"))
}

/// Copies `block` into `dst` with its top-left corner at `(r, c)`.
pub fn set_block<T: Real>(dst: &mut DMatrix<T>, r: usize, c: usize, block: &DMatrix<T>) {
    dst.view_mut((r, c), (block.nrows(), block.ncols()))
        .copy_from(block);
}

pub fn block<T: Real>(src: &DMatrix<T>, r: usize, c: usize, nr: usize, nc: usize) -> DMatrix<T> {
    src.view((r, c), (nr, nc)).into_owned()
}

pub fn check_square<T: Real>(m: &DMatrix<T>, context: &'static str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected: m.nrows(),
            got: m.ncols(),
        })
    }
}

pub fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelfand_matches_schur() {
        let m = DMatrix::<f64>::from_row_slice(3, 3, &[0.5, 1.0, 0.0, -0.3, 0.2, 0.4, 0.0, 0.1, -0.7]);
        let exact = spectral_radius(&m);
        assert!((gelfand_radius(&m) - exact).abs() < 1e-6 * exact);
        let jordan = DMatrix::<f64>::from_row_slice(2, 2, &[0.9, 5.0, 0.0, 0.9]);
        assert!((gelfand_radius(&jordan) - 0.9).abs() < 1e-6);
        let nilpotent = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(gelfand_radius(&nilpotent), 0.0);
    }

    #[test]
    fn sanitize_clips_roundoff_but_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        let s = sanitize_psd(&m).unwrap();
        assert!(min_eigenvalue(&s) >= 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(sanitize_psd(&bad), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn hautus_test_detects_uncontrollable_unstable_mode() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let b_good = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b_bad = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(is_stabilizable(&a, &b_good, 1e-8));
        assert!(!is_stabilizable(&a, &b_bad, 1e-8));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let (s, c) = (0.5f64, 0.75f64.sqrt());
        let r = DMatrix::from_row_slice(2, 2, &[0.9 * c, -0.9 * s, 0.9 * s, 0.9 * c]);
        assert!((spectral_radius(&r) - 0.9).abs() < 1e-12);
    }
}
