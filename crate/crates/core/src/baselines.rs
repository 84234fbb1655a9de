//! Baseline reachable sets: worst-case (zonotope) propagation from sampled
//! noise bounds, and distribution-free Chebyshev sets from propagated
//! covariances.

use nalgebra::{DMatrix, DVector};

use crate::bounds::{chebyshev_radius_sq, ConfidenceSet, Ellipsoid};
use crate::design::ErrorSystem;
use crate::error::{Error, Result};
use crate::linalg::{check_dim, spectral_radius};
use crate::reachability::{propagate_linear, ProxySequence};
use crate::scalar::{lit, to_f64, Real};

/// Generator budget before the interval-hull reduction kicks in.
pub const GENERATOR_CAP: usize = 200;

/// `{c + G s : ‖s‖_∞ ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope<T: Real> {
    pub center: DVector<T>,
    pub generators: DMatrix<T>,
}

impl<T: Real> Zonotope<T> {
    pub fn point(center: DVector<T>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    /// Axis-aligned box as a zonotope with one generator per nonflat axis.
    pub fn from_box(lower: &DVector<T>, upper: &DVector<T>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument("box lower bound exceeds upper bound".into()));
        }
        let half = lit::<T>(0.5);
        let center = (lower + upper) * half;
        let radii = (upper - lower) * half;
        let axes: Vec<usize> = (0..radii.len()).filter(|&i| radii[i] > T::zero()).collect();
        let mut generators = DMatrix::zeros(center.len(), axes.len());
        for (j, &i) in axes.iter().enumerate() {
            generators[(i, j)] = radii[i];
        }
        Ok(Self { center, generators })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn order(&self) -> usize {
        self.generators.ncols()
    }

    pub fn linear_map(&self, m: &DMatrix<T>) -> Self {
        Self {
            center: m * &self.center,
            generators: m * &self.generators,
        }
    }

    /// Exact Minkowski sum by generator concatenation.
    pub fn minkowski_sum(&self, other: &Self) -> Self {
        let n = self.dim();
        let mut generators = DMatrix::zeros(n, self.order() + other.order());
        generators.columns_mut(0, self.order()).copy_from(&self.generators);
        generators.columns_mut(self.order(), other.order()).copy_from(&other.generators);
        Self {
            center: &self.center + &other.center,
            generators,
        }
    }

    pub fn support(&self, d: &DVector<T>) -> T {
        d.dot(&self.center)
            + (self.generators.transpose() * d)
                .iter()
                .fold(T::zero(), |acc, v| acc + v.abs())
    }

    /// Per-axis radius `Σ_j |G_ij|`.
    pub fn radii(&self) -> DVector<T> {
        DVector::from_fn(self.dim(), |i, _| {
            self.generators.row(i).iter().fold(T::zero(), |acc, v| acc + v.abs())
        })
    }

    pub fn interval_hull(&self) -> (DVector<T>, DVector<T>) {
        let r = self.radii();
        (&self.center - &r, &self.center + &r)
    }

    /// Replaces the generators by the interval hull's axis generators.
    pub fn reduce_to_box(&self) -> Self {
        let r = self.radii();
        let mut generators = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            generators[(i, i)] = r[i];
        }
        Self {
            center: self.center.clone(),
            generators,
        }
    }

    pub fn to_set(&self) -> ConfidenceSet<T> {
        ConfidenceSet::Zonotope {
            center: self.center.clone(),
            generators: self.generators.clone(),
        }
    }
}

/// Component-wise sample extremes of the process and measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustNoiseBounds<T: Real> {
    pub w_lower: DVector<T>,
    pub w_upper: DVector<T>,
    pub eps_lower: DVector<T>,
    pub eps_upper: DVector<T>,
}

fn extremes<T: Real>(samples: &[DVector<T>], what: &'static str) -> Result<(DVector<T>, DVector<T>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::DegenerateSamples(format!("no {what} samples")))?;
    let n = first.len();
    let mut lo = first.clone();
    let mut hi = first.clone();
    for s in samples {
        check_dim(what, n, s.len())?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        lo = lo.zip_map(s, |a, b| a.min(b));
        hi = hi.zip_map(s, |a, b| a.max(b));
    }
    Ok((lo, hi))
}

impl<T: Real> RobustNoiseBounds<T> {
    pub fn from_samples(w: &[DVector<T>], eps: &[DVector<T>]) -> Result<Self> {
        let (w_lower, w_upper) = extremes(w, "process noise")?;
        let (eps_lower, eps_upper) = extremes(eps, "measurement noise")?;
        Ok(Self {
            w_lower,
            w_upper,
            eps_lower,
            eps_upper,
        })
    }

    pub fn zero(nx: usize, ny: usize) -> Self {
        Self {
            w_lower: DVector::zeros(nx),
            w_upper: DVector::zeros(nx),
            eps_lower: DVector::zeros(ny),
            eps_upper: DVector::zeros(ny),
        }
    }

    pub fn contains(&self, w: &DVector<T>, eps: &DVector<T>) -> bool {
        let inside = |x: &DVector<T>, l: &DVector<T>, u: &DVector<T>| {
            x.iter().zip(l.iter().zip(u.iter())).all(|(v, (a, b))| a <= v && v <= b)
        };
        inside(w, &self.w_lower, &self.w_upper) && inside(eps, &self.eps_lower, &self.eps_upper)
    }
}

#[derive(Debug, Clone)]
pub struct RobustSequence<T: Real> {
    /// Error-space zonotopes `E_0, …, E_{steps−1}`.
    pub zonotopes: Vec<Zonotope<T>>,
    /// Whether the generator cap forced an interval-hull reduction.
    pub reduced: bool,
}

impl<T: Real> RobustSequence<T> {
    pub fn sets(&self) -> Vec<ConfidenceSet<T>> {
        self.zonotopes.iter().map(Zonotope::to_set).collect()
    }

    /// Interval hulls as boxes.
    pub fn boxes(&self) -> Vec<ConfidenceSet<T>> {
        self.zonotopes
            .iter()
            .map(|z| {
                let (lower, upper) = z.interval_hull();
                ConfidenceSet::Box { lower, upper }
            })
            .collect()
    }
}

/// `E_{t+1} = A^e E_t ⊕ B₁^e W ⊕ B₂^e ℰ` from `E_0 = initial`.
pub fn robust_propagate<T: Real>(
    err: &ErrorSystem<T>,
    bounds: &RobustNoiseBounds<T>,
    initial: &Zonotope<T>,
    steps: usize,
) -> Result<RobustSequence<T>> {
    check_dim("initial error set", err.a_e.nrows(), initial.dim())?;
    check_dim("process noise bounds", err.b1_e.ncols(), bounds.w_lower.len())?;
    check_dim("measurement noise bounds", err.b2_e.ncols(), bounds.eps_lower.len())?;
    let rho = spectral_radius(&err.a_e);
    if rho >= T::one() {
        return Err(Error::NotSchur(to_f64(rho)));
    }
    let w = Zonotope::from_box(&bounds.w_lower, &bounds.w_upper)?.linear_map(&err.b1_e);
    let eps = Zonotope::from_box(&bounds.eps_lower, &bounds.eps_upper)?.linear_map(&err.b2_e);
    let injection = w.minkowski_sum(&eps);
    let mut zonotopes = Vec::with_capacity(steps);
    let mut cur = initial.clone();
    let mut reduced = false;
    for _ in 0..steps {
        let mut next = cur.linear_map(&err.a_e).minkowski_sum(&injection);
        if next.order() > GENERATOR_CAP {
            next = next.reduce_to_box();
            reduced = true;
        }
        zonotopes.push(std::mem::replace(&mut cur, next));
    }
    Ok(RobustSequence { zonotopes, reduced })
}

/// Chebyshev set for one covariance; `{0}` for a zero covariance and a
/// degenerate ellipsoid (confined to the covariance range) when singular.
pub fn chebyshev_from_covariance<T: Real>(
    cov: &DMatrix<T>,
    delta: T,
    n_c: usize,
) -> Result<ConfidenceSet<T>> {
    let n = cov.nrows();
    let r2 = chebyshev_radius_sq(n_c, delta)?;
    if cov.amax() == T::zero() {
        return Ok(ConfidenceSet::origin(n));
    }
    let center = DVector::zeros(n);
    let e = match Ellipsoid::new(center.clone(), cov.clone(), r2) {
        Ok(e) => e,
        Err(Error::Singular(_)) => Ellipsoid::new_degenerate(center, cov.clone(), r2)?,
        Err(e) => return Err(e),
    };
    Ok(ConfidenceSet::ChebyshevEllipsoid(e))
}

/// Covariance recursion with the error dynamics, from `cov0`.
pub fn dr_covariances<T: Real>(
    err: &ErrorSystem<T>,
    cov_w: &DMatrix<T>,
    cov_eps: &DMatrix<T>,
    cov0: &DMatrix<T>,
    steps: usize,
) -> Result<ProxySequence<T>> {
    check_dim("process covariance", err.b1_e.ncols(), cov_w.nrows())?;
    check_dim("measurement covariance", err.b2_e.ncols(), cov_eps.nrows())?;
    let injection = &err.b1_e * cov_w * err.b1_e.transpose() + &err.b2_e * cov_eps * err.b2_e.transpose();
    propagate_linear(&err.a_e, &injection, cov0, steps)
}

/// Error-space Chebyshev sets `{e : eᵀΣ_t⁻¹e ≤ n_c/δ}` along the covariance
/// recursion.
pub fn dr_propagate<T: Real>(
    err: &ErrorSystem<T>,
    cov_w: &DMatrix<T>,
    cov_eps: &DMatrix<T>,
    cov0: &DMatrix<T>,
    delta: T,
    n_c: usize,
    steps: usize,
) -> Result<Vec<ConfidenceSet<T>>> {
    let seq = dr_covariances(err, cov_w, cov_eps, cov0, steps)?;
    seq.per_step
        .iter()
        .map(|c| chebyshev_from_covariance(c, delta, n_c))
        .collect()
}

/// Sample covariance (population normalization) of zero-mean-or-not samples.
pub fn empirical_covariance<T: Real>(samples: &[DVector<T>]) -> Result<DMatrix<T>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::DegenerateSamples("no samples for covariance".into()))?;
    let n = first.len();
    let count = T::from_usize(samples.len()).expect("count fits");
    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / count;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    Ok(cov / count)
}
