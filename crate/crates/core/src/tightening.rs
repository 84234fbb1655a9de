//! Constraint tightening against reachable sets, maximal positively
//! invariant terminal sets, and the inner polytope of the funnel constraint.

use nalgebra::{DMatrix, DVector};

use crate::bounds::ConfidenceSet;
use crate::error::{Error, Result};
use crate::linalg::{check_dim, spectral_radius};
use crate::lp::lp_tolerance;
use crate::polytope::Polytope;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Redundancy tolerance for LP-based row elimination.
pub const REDUNDANCY_TOL: f64 = 1e-9;

/// Nominal constraint sets for each prediction step plus the terminal set.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedSequence<T: Real> {
    /// Tightened `(z, v)` constraints at `t = 0, 1, …`.
    pub per_step: Vec<Polytope<T>>,
    /// Used for every step past `per_step`.
    pub steady: Polytope<T>,
    /// Terminal set over `z`.
    pub terminal: Polytope<T>,
}

impl<T: Real> TightenedSequence<T> {
    pub fn at(&self, t: usize) -> &Polytope<T> {
        self.per_step.get(t).unwrap_or(&self.steady)
    }
}

/// Replaces each row `(g, b)` by `(g, b − amount(g))` and certifies the
/// result is nonempty.
pub fn tighten_rows_with<T: Real, F>(p: &Polytope<T>, mut amount: F) -> Result<Polytope<T>>
where
    F: FnMut(&DVector<T>) -> Result<T>,
{
    let mut out = p.clone();
    for i in 0..p.nrows() {
        out.h[i] -= amount(&p.row(i))?;
    }
    if p.nrows() > 0 && out.is_empty()? {
        return Err(Error::EmptySet("tightened constraints are infeasible".into()));
    }
    Ok(out)
}

/// `P ⊖ E` through support functions: `b − σ_E(g)` row by row.
pub fn minkowski_diff<T: Real>(p: &Polytope<T>, e: &ConfidenceSet<T>) -> Result<Polytope<T>> {
    check_dim("tightening set dimension", p.dim(), e.dim())?;
    tighten_rows_with(p, |g| e.support(g))
}

/// `P ⊖ (E_1 ∪ … ∪ E_k)` with each row tightened by its largest support.
pub fn tighten_by_union<T: Real>(p: &Polytope<T>, sets: &[ConfidenceSet<T>]) -> Result<Polytope<T>> {
    tighten_rows_with(p, |g| {
        sets.iter().try_fold(T::zero(), |acc, e| Ok(acc.max(e.support(g)?)))
    })
}

/// Restricts a `(z, v)` polytope to the feedback section
/// `{d : (x_s + d, u_s + K d) ∈ P}`.
pub fn feedback_section<T: Real>(
    p: &Polytope<T>,
    k: &DMatrix<T>,
    x_s: &DVector<T>,
    u_s: &DVector<T>,
) -> Result<Polytope<T>> {
    let (nu, nx) = k.shape();
    check_dim("feedback section dimension", nx + nu, p.dim())?;
    let mut map = DMatrix::zeros(nx + nu, nx);
    map.view_mut((0, 0), (nx, nx)).fill_with_identity();
    map.view_mut((nx, 0), (nu, nx)).copy_from(k);
    let offset = DVector::from_iterator(nx + nu, x_s.iter().chain(u_s.iter()).copied());
    // {d : G(offset + M d) ≤ h}
    let shifted = Polytope {
        g: p.g.clone(),
        h: &p.h - &p.g * offset,
    };
    shifted.preimage(&map)
}

/// Maximal positively invariant subset of `base` under `z ↦ A_cl z`.
pub fn maximal_invariant_set<T: Real>(
    a_cl: &DMatrix<T>,
    base: &Polytope<T>,
    iteration_cap: usize,
) -> Result<Polytope<T>> {
    maximal_invariant_set_with_index(a_cl, base, iteration_cap).map(|(p, _)| p)
}

/// As [`maximal_invariant_set`], also returning the determination index `k*`
/// (the set equals `{z : A_cl^j z ∈ base, j = 0..k*}`).
pub fn maximal_invariant_set_with_index<T: Real>(
    a_cl: &DMatrix<T>,
    base: &Polytope<T>,
    iteration_cap: usize,
) -> Result<(Polytope<T>, usize)> {
    check_dim("closed-loop matrix", base.dim(), a_cl.nrows())?;
    check_dim("closed-loop matrix", base.dim(), a_cl.ncols())?;
    let rho = spectral_radius(a_cl);
    if rho >= T::one() {
        return Err(Error::NotSchur(to_f64(rho)));
    }
    if base.nrows() == 0 {
        return Err(Error::InvalidArgument("MPI base has no constraints".into()));
    }
    if base.is_empty()? {
        return Err(Error::EmptySet("MPI base".into()));
    }
    let tol = lp_tolerance::<T>();
    if let Some(i) = (0..base.nrows()).find(|&i| base.h[i] <= tol * base.g.row(i).norm()) {
        return Err(Error::InvalidArgument(format!(
            "MPI base must contain the origin in its interior (row {i} has offset {:e})",
            to_f64(base.h[i])
        )));
    }
    let red_tol = lit::<T>(REDUNDANCY_TOL).max(tol);
    let mut omega = base.clone();
    let mut power = a_cl.clone();
    for k in 1..=iteration_cap {
        let gk = &base.g * &power;
        let mut rows = Vec::new();
        for i in 0..gk.nrows() {
            let r = gk.row(i).transpose();
            if r.norm() <= tol * base.g.row(i).norm() {
                continue;
            }
            let redundant = match omega.support(&r) {
                Ok(s) => s <= base.h[i] + red_tol * base.h[i].abs().max(T::one()),
                Err(Error::Unbounded) => false,
                Err(e) => return Err(e),
            };
            if !redundant {
                rows.push((r, base.h[i]));
            }
        }
        if rows.is_empty() {
            return Ok((omega.remove_redundant(red_tol)?, k - 1));
        }
        omega = omega.intersect(&Polytope::from_row_list(base.dim(), &rows)?)?;
        power = a_cl * power;
    }
    Err(Error::NonConvergence(format!(
        "MPI set not determined within {iteration_cap} iterations"
    )))
}

/// `‖(x₁, x₂)‖ ≤ gain · √(exp(−decay·x₀² − offset) + floor)` restricted to
/// `x₀ ∈ [x0_min, x0_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunnelParams<T: Real> {
    pub gain: T,
    pub decay: T,
    pub offset: T,
    pub floor: T,
    pub x0_min: T,
    pub x0_max: T,
}

impl<T: Real> Default for FunnelParams<T> {
    fn default() -> Self {
        Self {
            gain: lit(0.2),
            decay: lit(2500.0),
            offset: lit(5.0),
            floor: lit(0.0004),
            x0_min: lit(-0.02),
            x0_max: lit(0.12),
        }
    }
}

impl<T: Real> FunnelParams<T> {
    pub fn radius(&self, x0: T) -> T {
        self.gain * ((-self.decay * x0 * x0 - self.offset).exp() + self.floor).sqrt()
    }

    /// Whether `(x₀, x₁, x₂)` satisfies the funnel and the `x₀` range.
    pub fn contains(&self, x0: T, x1: T, x2: T) -> bool {
        x0 >= self.x0_min && x0 <= self.x0_max && (x1 * x1 + x2 * x2).sqrt() <= self.radius(x0)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.gain > T::zero()
            && self.decay >= T::zero()
            && self.floor >= T::zero()
            && self.x0_min < self.x0_max
            && [self.gain, self.decay, self.offset, self.floor, self.x0_min, self.x0_max]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("degenerate funnel parameters".into()))
        }
    }
}

/// Convex inner approximation of the funnel in `(x₀, x₁, x₂)`.
///
/// The radial bound is replaced by `min(ℓ_L, ℓ_R)` of two lines lying below
/// the slice-wise minimum of the radius, and each disk cross-section by the
/// regular polygon with facet distance `cos(π/n)·ℓ(x₀)`, which is inscribed
/// in the disk of radius `ℓ(x₀)`.
pub fn inner_polytope_of_funnel<T: Real>(
    params: &FunnelParams<T>,
    n_facets_angular: usize,
    n_slices: usize,
) -> Result<Polytope<T>> {
    params.validate()?;
    if n_facets_angular < 3 || n_slices < 2 {
        return Err(Error::InvalidArgument(format!(
            "funnel needs ≥ 3 facets and ≥ 2 slices (got {n_facets_angular}, {n_slices})"
        )));
    }
    let (lo, hi) = (params.x0_min, params.x0_max);
    let knots: Vec<T> = (0..=n_slices)
        .map(|i| lo + (hi - lo) * from_usize::<T>(i) / from_usize::<T>(n_slices))
        .collect();
    // The radius is even and decreasing in |x₀|, so each slice attains its
    // minimum at the endpoint farther from zero.
    let slice_min: Vec<T> = (0..n_slices)
        .map(|j| params.radius(knots[j].abs().max(knots[j + 1].abs())))
        .collect();
    let peak = (0..n_slices)
        .fold(0, |best, j| if slice_min[j] > slice_min[best] { j } else { best });

    // ℓ_L(x) = s_0 + m_L (x − x_1), pinned to the first slice's minimum at its
    // right end; ℓ_R(x) = s_N + m_R (x_N − x), pinned at the last slice's left end.
    let last = n_slices - 1;
    let mut m_l = T::max_value().unwrap_or(lit(f64::MAX));
    for j in 1..=peak {
        m_l = m_l.min((slice_min[j] - slice_min[0]) / (knots[j + 1] - knots[1]));
    }
    if peak == 0 {
        m_l = T::zero();
    }
    let mut m_r = T::max_value().unwrap_or(lit(f64::MAX));
    for j in peak..last {
        m_r = m_r.min((slice_min[j] - slice_min[last]) / (knots[last] - knots[j]));
    }
    if peak == last {
        m_r = T::zero();
    }
    let m_l = m_l.max(T::zero());
    let m_r = m_r.max(T::zero());

    let shrink = (T::pi() / from_usize::<T>(n_facets_angular)).cos();
    let mut rows: Vec<(DVector<T>, T)> = Vec::new();
    for k in 0..n_facets_angular {
        let theta = T::two_pi() * from_usize::<T>(k) / from_usize::<T>(n_facets_angular);
        let (s, c) = theta.sin_cos();
        // cᵀy ≤ shrink · (s_0 + m_L (x₀ − x_1))
        rows.push((
            DVector::from_column_slice(&[-shrink * m_l, c, s]),
            shrink * (slice_min[0] - m_l * knots[1]),
        ));
        // cᵀy ≤ shrink · (s_N + m_R (x_N − x₀))
        rows.push((
            DVector::from_column_slice(&[shrink * m_r, c, s]),
            shrink * (slice_min[last] + m_r * knots[last]),
        ));
    }
    rows.push((DVector::from_column_slice(&[T::one(), T::zero(), T::zero()]), hi));
    rows.push((DVector::from_column_slice(&[-T::one(), T::zero(), T::zero()]), -lo));
    Polytope::new(
        DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0[j]),
        DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
    )
}
