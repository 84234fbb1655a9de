//! Confidence sets for sub-Gaussian vectors and the distribution-free
//! Chebyshev set used by the distributionally robust baseline.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, rank, sanitize_psd, symmetrize, weighted_norm};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::subgaussian::SubGaussianVector;

/// `{x : (x − c)ᵀ Σ⁻¹ (x − c) ≤ τ²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid<T: Real> {
    pub center: DVector<T>,
    pub shape: DMatrix<T>,
    pub radius_sq: T,
}

impl<T: Real> Ellipsoid<T> {
    /// Requires a positive definite shape and `τ² ≥ 0`.
    pub fn new(center: DVector<T>, shape: DMatrix<T>, radius_sq: T) -> Result<Self> {
        check_dim("ellipsoid shape vs center", center.len(), shape.nrows())?;
        let shape = sanitize_psd(&shape)?;
        if shape.clone().cholesky().is_none() {
            return Err(Error::Singular("ellipsoid shape"));
        }
        if !(radius_sq >= T::zero()) || !radius_sq.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ellipsoid radius² must be finite and nonnegative, got {radius_sq:e}"
            )));
        }
        Ok(Self {
            center,
            shape,
            radius_sq,
        })
    }

    /// Allows a singular PSD shape; the set then lies in `c + range(Σ)`.
    pub fn new_degenerate(center: DVector<T>, shape: DMatrix<T>, radius_sq: T) -> Result<Self> {
        check_dim("ellipsoid shape vs center", center.len(), shape.nrows())?;
        let shape = sanitize_psd(&shape)?;
        if !(radius_sq >= T::zero()) || !radius_sq.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ellipsoid radius² must be finite and nonnegative, got {radius_sq:e}"
            )));
        }
        Ok(Self {
            center,
            shape,
            radius_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `τ‖d‖_Σ + dᵀc`.
    pub fn support(&self, d: &DVector<T>) -> T {
        d.dot(&self.center) + self.radius_sq.sqrt() * weighted_norm(d, &self.shape)
    }

    /// Squared Mahalanobis distance of `x` from the center.
    pub fn mahalanobis_sq(&self, x: &DVector<T>) -> T {
        let diff = x - &self.center;
        if let Some(ch) = self.shape.clone().cholesky() {
            return diff.dot(&ch.solve(&diff));
        }
        // Singular shape: pseudo-inverse on the range, infinite off it.
        let eig = self.shape.clone().symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let cut = lit::<T>(1e-12) * top.max(T::epsilon());
        let mut q = T::zero();
        for (i, lam) in eig.eigenvalues.iter().enumerate() {
            let c = eig.eigenvectors.column(i).dot(&diff);
            if *lam > cut {
                q += c * c / *lam;
            } else if c.abs() > lit::<T>(1e-12) * diff.norm().max(T::one()) {
                return T::max_value().unwrap_or(lit(f64::MAX));
            }
        }
        q
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        self.mahalanobis_sq(x) <= self.radius_sq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfidenceSet<T: Real> {
    /// `{x : hᵀx ≤ offset}`.
    HalfSpace { h: DVector<T>, offset: T },
    Ellipsoid(Ellipsoid<T>),
    /// `{x : Hx ∈ inner}`, unbounded along `Null(H)`.
    Cylinder { h: DMatrix<T>, inner: Ellipsoid<T> },
    Box { lower: DVector<T>, upper: DVector<T> },
    /// `{c + G s : ‖s‖_∞ ≤ 1}`.
    Zonotope { center: DVector<T>, generators: DMatrix<T> },
    /// Same geometry as [`ConfidenceSet::Ellipsoid`], radius `n_c/δ`.
    ChebyshevEllipsoid(Ellipsoid<T>),
}

impl<T: Real> ConfidenceSet<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::HalfSpace { h, .. } => h.len(),
            Self::Ellipsoid(e) | Self::ChebyshevEllipsoid(e) => e.dim(),
            Self::Cylinder { h, .. } => h.ncols(),
            Self::Box { lower, .. } => lower.len(),
            Self::Zonotope { center, .. } => center.len(),
        }
    }

    /// The singleton `{0}` in `n` dimensions.
    pub fn origin(n: usize) -> Self {
        Self::Box {
            lower: DVector::zeros(n),
            upper: DVector::zeros(n),
        }
    }

    pub fn boxed(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidArgument("box lower bound exceeds upper bound".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        match self {
            Self::HalfSpace { h, offset } => h.dot(x) <= *offset,
            Self::Ellipsoid(e) | Self::ChebyshevEllipsoid(e) => e.contains(x),
            Self::Cylinder { h, inner } => inner.contains(&(h * x)),
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *l <= *v && *v <= *u),
            Self::Zonotope { center, generators } => {
                zonotope_contains(center, generators, x)
            }
        }
    }

    /// `sup_{x ∈ set} dᵀx`.
    pub fn support(&self, d: &DVector<T>) -> Result<T> {
        support_function(self, d)
    }
}

/// `sup_{x ∈ set} dᵀx`; [`Error::Unbounded`] when the set extends to
/// infinity along `d`.
pub fn support_function<T: Real>(set: &ConfidenceSet<T>, d: &DVector<T>) -> Result<T> {
    check_dim("support direction", set.dim(), d.len())?;
    let dn = d.norm();
    if dn == T::zero() {
        return Err(Error::ZeroDirection);
    }
    match set {
        ConfidenceSet::HalfSpace { h, offset } => {
            // Bounded only along positive multiples of h.
            let c = d.dot(h) / h.norm_squared();
            let resid = (d - h * c).norm();
            if c > T::zero() && resid <= lit::<T>(1e-9) * dn {
                Ok(c * *offset)
            } else {
                Err(Error::Unbounded)
            }
        }
        ConfidenceSet::Ellipsoid(e) | ConfidenceSet::ChebyshevEllipsoid(e) => Ok(e.support(d)),
        ConfidenceSet::Cylinder { h, inner } => {
            // d = Hᵀy must hold exactly for a finite supremum.
            let ht = h.transpose();
            let svd = ht.clone().svd(true, true);
            let y = svd
                .solve(&DMatrix::from_column_slice(d.len(), 1, d.as_slice()), lit(1e-12))
                .map_err(|_| Error::Singular("cylinder projection"))?;
            let y = y.column(0).into_owned();
            if (&ht * &y - d).norm() > lit::<T>(1e-9) * dn {
                return Err(Error::Unbounded);
            }
            Ok(inner.support(&y))
        }
        ConfidenceSet::Box { lower, upper } => Ok(d
            .iter()
            .zip(lower.iter().zip(upper.iter()))
            .fold(T::zero(), |acc, (di, (l, u))| acc + (*di * *l).max(*di * *u))),
        ConfidenceSet::Zonotope { center, generators } => {
            let spread = (generators.transpose() * d)
                .iter()
                .fold(T::zero(), |acc, v| acc + v.abs());
            Ok(d.dot(center) + spread)
        }
    }
}

fn zonotope_contains<T: Real>(c: &DVector<T>, g: &DMatrix<T>, x: &DVector<T>) -> bool {
    // Exact membership needs an LP; the interval hull check is exact for
    // axis-aligned generators, which is all the robust baseline produces after
    // reduction. Otherwise fall back to the LP.
    let diff = x - c;
    if g.ncols() == 0 {
        return diff.amax() <= lit(1e-12);
    }
    crate::lp::zonotope_membership(g, &diff)
}

fn check_delta_open<T: Real>(delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidProbability(to_f64(delta)))
    }
}

fn check_delta_half_open<T: Real>(delta: T) -> Result<()> {
    if delta > T::zero() && delta <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidProbability(to_f64(delta)))
    }
}

/// `√(2 ln 1/δ)`, the half-space multiplier of `‖h‖_Σ`.
pub fn half_space_factor<T: Real>(delta: T) -> Result<T> {
    check_delta_half_open(delta)?;
    Ok((lit::<T>(2.0) * (T::one() / delta).ln()).max(T::zero()).sqrt())
}

/// `{x : hᵀx ≤ hᵀµ + ‖h‖_Σ √(2 ln 1/δ)}`.
pub fn half_space_set<T: Real>(
    x: &SubGaussianVector<T>,
    h: &DVector<T>,
    delta: T,
) -> Result<ConfidenceSet<T>> {
    check_dim("half-space normal", x.dim(), h.len())?;
    if h.norm() == T::zero() {
        return Err(Error::ZeroDirection);
    }
    let factor = half_space_factor(delta)?;
    Ok(ConfidenceSet::HalfSpace {
        h: h.clone(),
        offset: h.dot(x.mean()) + weighted_norm(h, x.proxy()) * factor,
    })
}

/// Unique `s ≥ 0` with `eˢ/(1+s) = y`.
pub fn g_inverse<T: Real>(y: T) -> Result<T> {
    if !(y >= T::one()) || !y.is_finite() {
        return Err(Error::InvalidArgument(format!("g⁻¹ needs y ≥ 1, got {y:e}")));
    }
    Ok(g_inverse_ln(y.ln()))
}

/// `g⁻¹` evaluated from `ln y`, solving `s − ln(1+s) = ln y`.
pub fn g_inverse_ln<T: Real>(ln_y: T) -> T {
    if ln_y <= T::zero() {
        return T::zero();
    }
    let two = lit::<T>(2.0);
    let f = |s: T| s - s.ln_1p() - ln_y;
    let mut lo = T::zero();
    let mut hi = (two * ln_y + two * (T::one() + two * ln_y).ln() + T::one()).max(T::one());
    while f(hi) < T::zero() {
        hi *= two;
    }
    for _ in 0..80 {
        let mid = (lo + hi) / two;
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut s = (lo + hi) / two;
    for _ in 0..3 {
        // f'(s) = s / (1 + s)
        let deriv = s / (T::one() + s);
        if deriv <= T::zero() {
            break;
        }
        let next = s - f(s) / deriv;
        if next.is_finite() && next >= T::zero() {
            s = next;
        }
    }
    s
}

/// `τ² = n + n g⁻¹(δ^{−2/n})`.
pub fn elliptical_radius_sq<T: Real>(n: usize, delta: T) -> Result<T> {
    check_delta_open(delta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be ≥ 1".into()));
    }
    let nn = from_usize::<T>(n);
    let ln_y = -lit::<T>(2.0) * delta.ln() / nn;
    Ok(nn + nn * g_inverse_ln(ln_y))
}

/// Ellipsoid around `µ` with shape `Σ` containing `X` with probability `1 − δ`.
pub fn elliptical_set<T: Real>(x: &SubGaussianVector<T>, delta: T) -> Result<ConfidenceSet<T>> {
    let r2 = elliptical_radius_sq(x.dim(), delta)?;
    if x.proxy().clone().cholesky().is_none() {
        return Err(Error::Singular("elliptical set needs a positive definite proxy"));
    }
    Ok(ConfidenceSet::Ellipsoid(Ellipsoid::new(
        x.mean().clone(),
        x.proxy().clone(),
        r2,
    )?))
}

/// `{x : ‖Hx − Hµ‖²_{(HΣHᵀ)⁻¹} ≤ τ²(n_c, δ)}` for a full-row-rank `H` with
/// fewer rows than the dimension.
pub fn cylindrical_set<T: Real>(
    x: &SubGaussianVector<T>,
    h: &DMatrix<T>,
    delta: T,
) -> Result<ConfidenceSet<T>> {
    check_dim("subspace map columns", x.dim(), h.ncols())?;
    let nc = h.nrows();
    if nc == 0 || nc >= x.dim() {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension must satisfy 1 ≤ n_c < {}, got {nc}",
            x.dim()
        )));
    }
    if rank(h, lit(1e-10)) < nc {
        return Err(Error::RankDeficient("subspace map H"));
    }
    let r2 = elliptical_radius_sq(nc, delta)?;
    let shape = symmetrize(&(h * x.proxy() * h.transpose()));
    let inner = Ellipsoid::new(h * x.mean(), shape, r2)?;
    Ok(ConfidenceSet::Cylinder {
        h: h.clone(),
        inner,
    })
}

/// `(1 + ln 4) n + 4 ln(1/δ)`, an upper bound on [`elliptical_radius_sq`].
pub fn elliptical_growth_bound<T: Real>(n: usize, delta: T) -> T {
    (T::one() + lit::<T>(4.0).ln()) * from_usize::<T>(n) + lit::<T>(4.0) * (T::one() / delta).ln()
}

/// `B(p, n) = p 2^{(p−1)/2} (2e/n)^{n/2} Γ((n+p+1)/2)`, bounding
/// `E‖X − µ‖ᵖ_{Σ⁻¹}`.
pub fn moment_bound<T: Real>(p: T, n: usize) -> Result<T> {
    let pf = to_f64(p);
    if !(pf >= 1.0) || n == 0 {
        return Err(Error::InvalidArgument(format!("moment bound needs p ≥ 1, n ≥ 1 (p={pf}, n={n})")));
    }
    let nf = n as f64;
    let ln_b = pf.ln()
        + 0.5 * (pf - 1.0) * std::f64::consts::LN_2
        + 0.5 * nf * (2.0 * std::f64::consts::E / nf).ln()
        + ln_gamma(0.5 * (nf + pf + 1.0));
    Ok(lit(ln_b.exp()))
}

/// Chebyshev ellipsoid `{x : (x−c)ᵀ Cov⁻¹ (x−c) ≤ n_c/δ}`.
pub fn chebyshev_set<T: Real>(
    center: &DVector<T>,
    covariance: &DMatrix<T>,
    delta: T,
    n_c: usize,
) -> Result<ConfidenceSet<T>> {
    check_delta_open(delta)?;
    if n_c == 0 {
        return Err(Error::InvalidArgument("n_c must be ≥ 1".into()));
    }
    Ok(ConfidenceSet::ChebyshevEllipsoid(Ellipsoid::new(
        center.clone(),
        covariance.clone(),
        chebyshev_radius_sq(n_c, delta)?,
    )?))
}

pub fn chebyshev_radius_sq<T: Real>(n_c: usize, delta: T) -> Result<T> {
    check_delta_open(delta)?;
    Ok(from_usize::<T>(n_c) / delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgaussian::SubGaussianVector;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn std_normal(n: usize) -> SubGaussianVector<f64> {
        SubGaussianVector::new(DVector::zeros(n), DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn half_space_offsets() {
        let x = std_normal(2);
        let e1 = v(&[1.0, 0.0]);
        match half_space_set(&x, &e1, 1.0).unwrap() {
            ConfidenceSet::HalfSpace { offset, .. } => assert_eq!(offset, 0.0),
            _ => unreachable!(),
        }
        match half_space_set(&x, &e1, 0.05).unwrap() {
            ConfidenceSet::HalfSpace { offset, .. } => {
                assert!((offset - 2.447_746_830_680_816).abs() < 1e-12)
            }
            _ => unreachable!(),
        }
        assert!(half_space_set(&x, &v(&[0.0, 0.0]), 0.05).is_err());
        assert!(half_space_set(&x, &e1, 0.0).is_err());
        assert!(half_space_set(&x, &e1, 1.5).is_err());
    }

    #[test]
    fn half_space_scale_invariant() {
        let x = SubGaussianVector::new(v(&[0.3, -1.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let h = v(&[1.0, -2.0]);
        let a = half_space_set(&x, &h, 0.1).unwrap();
        let b = half_space_set(&x, &(&h * 3.7), 0.1).unwrap();
        let (ConfidenceSet::HalfSpace { offset: oa, .. }, ConfidenceSet::HalfSpace { offset: ob, .. }) = (a, b) else {
            unreachable!()
        };
        assert!((ob / 3.7 - oa).abs() < 1e-12);
    }

    #[test]
    fn g_inverse_values() {
        assert_eq!(g_inverse(1.0f64).unwrap(), 0.0);
        let s = g_inverse(20.0f64).unwrap();
        assert!((s - 4.7445).abs() < 1e-3, "{s}");
        assert!((s.exp() / (1.0 + s) - 20.0).abs() <= 1e-9 * 20.0);
        assert!(g_inverse(0.5).is_err());
        let mut prev = 0.0;
        for y in [1.01, 1.5, 3.0, 10.0, 1e3, 1e8] {
            let s = g_inverse(y).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn elliptical_radius_values() {
        let r = elliptical_radius_sq(2, 0.05f64).unwrap();
        assert!((r - 11.489).abs() < 0.01, "{r}");
        assert!(r <= elliptical_growth_bound(2, 0.05f64));
        assert!(r < chebyshev_radius_sq(2, 0.05).unwrap());
        assert!((elliptical_growth_bound(2, 0.05f64) - 16.756).abs() < 1e-3);
        // tiny δ in high dimension stays finite
        let r = elliptical_radius_sq(200, 1e-300f64).unwrap();
        assert!(r.is_finite() && r > 200.0);
    }

    #[test]
    fn elliptical_rejects_singular() {
        let x = SubGaussianVector::new(v(&[0.0, 0.0]), DMatrix::from_diagonal(&v(&[1.0, 0.0]))).unwrap();
        assert!(matches!(elliptical_set(&x, 0.05), Err(Error::Singular(_))));
    }

    #[test]
    fn cylinder_cases() {
        let x = std_normal(2);
        assert!(cylindrical_set(&x, &DMatrix::identity(2, 2), 0.05).is_err());
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let c = cylindrical_set(&x, &h, 0.05).unwrap();
        let bound = (1.0 + g_inverse(0.05f64.powi(-2)).unwrap()).sqrt();
        assert!(c.contains(&v(&[bound - 1e-9, 1e6])));
        assert!(!c.contains(&v(&[bound + 1e-9, 0.0])));
        assert!(matches!(c.support(&v(&[0.0, 1.0])), Err(Error::Unbounded)));
        assert!((c.support(&v(&[2.0, 0.0])).unwrap() - 2.0 * bound).abs() < 1e-9);
    }

    #[test]
    fn support_examples() {
        let e = ConfidenceSet::Ellipsoid(Ellipsoid::new(v(&[0.0, 0.0]), DMatrix::identity(2, 2), 4.0).unwrap());
        assert!((e.support(&v(&[1.0, 0.0])).unwrap() - 2.0).abs() < 1e-15);
        let b = ConfidenceSet::boxed(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(b.support(&v(&[1.0, 1.0])).unwrap(), 2.0);
        let h = v(&[3.0, 4.0]);
        let hs = ConfidenceSet::HalfSpace { h: h.clone(), offset: 10.0 };
        assert!((hs.support(&(&h / 5.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(hs.support(&v(&[1.0, 0.0])), Err(Error::Unbounded)));
        assert!(matches!(e.support(&v(&[0.0, 0.0])), Err(Error::ZeroDirection)));
    }

    #[test]
    fn moment_bound_values() {
        assert!((moment_bound(2.0f64, 2).unwrap() - 10.220).abs() < 1e-3);
        assert!((moment_bound(1.0f64, 1).unwrap() - 2.0664).abs() < 1e-3);
        assert!(moment_bound(0.5f64, 1).is_err());
    }

    #[test]
    fn chebyshev_radii() {
        let c = chebyshev_set(&v(&[0.0, 0.0]), &DMatrix::identity(2, 2), 0.05, 2).unwrap();
        let ConfidenceSet::ChebyshevEllipsoid(e) = c else { unreachable!() };
        assert!((e.radius_sq - 40.0).abs() < 1e-12);
        assert_eq!(chebyshev_radius_sq(1, 0.5).unwrap(), 2.0);
        assert!(chebyshev_set(&v(&[0.0]), &DMatrix::zeros(1, 1), 0.05, 1).is_err());
    }
}
