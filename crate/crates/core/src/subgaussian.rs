//! Sub-Gaussian random vectors described by a mean and a matrix variance proxy.
//!
//! A vector `X` is `SG(µ, Σ)` when `E exp(λᵀ(X − µ)) ≤ exp(‖λ‖²_Σ / 2)` for all
//! `λ`. The proxy behaves like a covariance under linear maps and under
//! addition of conditionally sub-Gaussian terms, which is what makes
//! propagation through linear dynamics a closed-form recursion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, max_eigenvalue, sanitize_psd, symmetrize};
use crate::scalar::Real;

/// Scalar variance proxy `σ ≥ 0` (the classic `σ`-sub-Gaussian parameter).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProxy<T: Real>(T);

impl<T: Real> ScalarProxy<T> {
    pub fn new(sigma: T) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::NonFinite("scalar proxy"));
        }
        if sigma < T::zero() {
            return Err(Error::InvalidArgument("scalar proxy must be nonnegative".into()));
        }
        Ok(Self(sigma))
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    pub fn sigma(&self) -> T {
        self.0
    }

    pub fn variance(&self) -> T {
        self.0 * self.0
    }
}

/// Mean vector plus symmetric PSD matrix variance proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct SubGaussianVector<T: Real> {
    mean: DVector<T>,
    proxy: DMatrix<T>,
}

impl<T: Real> SubGaussianVector<T> {
    /// Validates dimensions, symmetry and positive semidefiniteness. The proxy
    /// is stored symmetrized with round-off negative eigenvalues clipped.
    pub fn new(mean: DVector<T>, proxy: DMatrix<T>) -> Result<Self> {
        check_dim("proxy rows vs mean length", mean.len(), proxy.nrows())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean vector"));
        }
        let proxy = sanitize_psd(&proxy)?;
        Ok(Self { mean, proxy })
    }

    /// `X ~ SG(µ, σ²I)`.
    pub fn isotropic(mean: DVector<T>, sigma: ScalarProxy<T>) -> Self {
        let n = mean.len();
        Self {
            mean,
            proxy: scalar_to_matrix(sigma, n),
        }
    }

    /// A deterministic vector (zero proxy).
    pub fn deterministic(mean: DVector<T>) -> Self {
        let n = mean.len();
        Self {
            mean,
            proxy: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn proxy(&self) -> &DMatrix<T> {
        &self.proxy
    }

    pub fn into_parts(self) -> (DVector<T>, DMatrix<T>) {
        (self.mean, self.proxy)
    }
}

/// `AX ~ SG(Aµ, AΣAᵀ)`.
pub fn linear_transform<T: Real>(
    x: &SubGaussianVector<T>,
    a: &DMatrix<T>,
) -> Result<SubGaussianVector<T>> {
    check_dim("transform columns vs vector dimension", x.dim(), a.ncols())?;
    let mean = a * &x.mean;
    let proxy = symmetrize(&(a * &x.proxy * a.transpose()));
    SubGaussianVector::new(mean, proxy)
}

/// `X + Y ~ SG(µ + µ′, Σ + Σ′)`.
///
/// The caller asserts that `y` describes `Y` conditionally on `X`; in
/// particular independent summands and martingale-difference noise qualify.
pub fn add_conditional<T: Real>(
    x: &SubGaussianVector<T>,
    y: &SubGaussianVector<T>,
) -> Result<SubGaussianVector<T>> {
    check_dim("summand dimensions", x.dim(), y.dim())?;
    SubGaussianVector::new(&x.mean + &y.mean, &x.proxy + &y.proxy)
}

/// `σ ↦ σ²I_n`.
pub fn scalar_to_matrix<T: Real>(sigma: ScalarProxy<T>, n: usize) -> DMatrix<T> {
    DMatrix::identity(n, n) * sigma.variance()
}

/// `Σ ↦ √‖Σ‖₂`, the smallest isotropic proxy dominating `Σ`.
pub fn matrix_to_scalar<T: Real>(proxy: &DMatrix<T>) -> Result<ScalarProxy<T>> {
    let p = sanitize_psd(proxy)?;
    if p.nrows() == 0 {
        return Ok(ScalarProxy::zero());
    }
    ScalarProxy::new(max_eigenvalue(&p).max(T::zero()).sqrt())
}
