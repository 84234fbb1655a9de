//! Dense two-phase simplex for the small linear programs that show up in
//! polytope manipulation: feasibility, redundancy checks, support values
//! and infeasibility certificates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::check_dim;
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T: Real> {
    pub status: LpStatus,
    pub x: DVector<T>,
    pub value: T,
}

/// Pivot tolerance adapted to the scalar precision.
pub fn lp_tolerance<T: Real>() -> T {
    lit::<T>(1e-9).max(T::epsilon() * lit(1e4))
}

struct Tableau<T: Real> {
    // rows 0..m are constraints, row m is the objective (reduced costs, -value).
    t: DMatrix<T>,
    basis: Vec<usize>,
    m: usize,
    cols: usize,
    tol: T,
}

impl<T: Real> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[(r, c)];
        let width = self.t.ncols();
        for j in 0..width {
            self.t[(r, j)] /= p;
        }
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[(i, c)];
            if f != T::zero() {
                for j in 0..width {
                    let v = self.t[(r, j)];
                    self.t[(i, j)] -= f * v;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over the columns `0..allowed`. Returns false if
    /// the objective is unbounded below.
    fn optimize(&mut self, allowed: usize) -> bool {
        let rhs = self.cols;
        let mut degenerate = 0usize;
        let cap = 50 * (self.m + allowed) + 1000;
        for _ in 0..cap {
            // Dantzig's rule, switching to Bland's after a run of degenerate pivots.
            let bland = degenerate > 2 * (self.m + 1);
            let mut enter = None;
            let mut best = -self.tol;
            for j in 0..allowed {
                let rc = self.t[(self.m, j)];
                if rc < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(c) = enter else {
                return true;
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.t[(i, c)];
                if a > self.tol {
                    let ratio = self.t[(i, rhs)] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - self.tol
                                || (ratio <= lr + self.tol && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return false;
            };
            if ratio.abs() <= self.tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
        true
    }
}

/// `min cᵀx  s.t.  Ax = b, x ≥ 0`.
pub fn solve_standard<T: Real>(
    c: &DVector<T>,
    a: &DMatrix<T>,
    b: &DVector<T>,
) -> Result<LpSolution<T>> {
    let (m, n) = a.shape();
    check_dim("lp cost length", n, c.len())?;
    check_dim("lp rhs length", m, b.len())?;
    if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear program data"));
    }
    let tol = lp_tolerance::<T>();
    let cols = n + m;
    let mut t = DMatrix::zeros(m + 1, cols + 1);
    for i in 0..m {
        let sign = if b[i] < T::zero() { -T::one() } else { T::one() };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, n + i)] = T::one();
        t[(i, cols)] = sign * b[i];
    }
    // Phase one: minimise the sum of artificials.
    for j in 0..=cols {
        let mut s = T::zero();
        for i in 0..m {
            if j < n || j == cols {
                s += t[(i, j)];
            }
        }
        t[(m, j)] = -s;
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        m,
        cols,
        tol,
    };
    tab.optimize(cols);
    let scale = b.amax().max(T::one());
    if -tab.t[(m, cols)] > tol * scale * from_usize::<T>(m.max(1)) {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: DVector::zeros(n),
            value: T::zero(),
        });
    }
    // Drive remaining artificials out of the basis; rows with no usable pivot are redundant.
    let mut keep = vec![true; m];
    for r in 0..m {
        if tab.basis[r] >= n {
            let mut col = None;
            for j in 0..n {
                if tab.t[(r, j)].abs() > tol {
                    col = Some(j);
                    break;
                }
            }
            match col {
                Some(j) => tab.pivot(r, j),
                None => keep[r] = false,
            }
        }
    }
    // Phase two objective in terms of the current basis.
    for j in 0..=cols {
        tab.t[(m, j)] = if j < n { c[j] } else { T::zero() };
    }
    for r in 0..m {
        let bj = tab.basis[r];
        if keep[r] && bj < n {
            let f = tab.t[(m, bj)];
            if f != T::zero() {
                for j in 0..=cols {
                    let v = tab.t[(r, j)];
                    tab.t[(m, j)] -= f * v;
                }
            }
        }
    }
    // Redundant rows keep an artificial basic at zero; zero their artificial
    // column contributions by forbidding artificials from entering.
    let bounded = tab.optimize(n);
    let mut x = DVector::zeros(n);
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.t[(r, cols)];
        }
    }
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x,
            value: T::zero(),
        });
    }
    let value = c.dot(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
    })
}

/// `min cᵀx  s.t.  Gx ≤ h`, with `x` free.
pub fn minimize<T: Real>(c: &DVector<T>, g: &DMatrix<T>, h: &DVector<T>) -> Result<LpSolution<T>> {
    minimize_with_equalities(c, g, h, &DMatrix::zeros(0, c.len()), &DVector::zeros(0))
}

/// `min cᵀx  s.t.  Gx ≤ h, Ex = f`, with `x` free.
pub fn minimize_with_equalities<T: Real>(
    c: &DVector<T>,
    g: &DMatrix<T>,
    h: &DVector<T>,
    e: &DMatrix<T>,
    f: &DVector<T>,
) -> Result<LpSolution<T>> {
    let n = c.len();
    check_dim("inequality columns", n, g.ncols())?;
    check_dim("inequality rhs", g.nrows(), h.len())?;
    check_dim("equality columns", n, e.ncols())?;
    check_dim("equality rhs", e.nrows(), f.len())?;
    let (mi, me) = (g.nrows(), e.nrows());
    // variables [x⁺, x⁻, s]
    let mut a = DMatrix::zeros(mi + me, 2 * n + mi);
    let mut b = DVector::zeros(mi + me);
    for i in 0..mi {
        for j in 0..n {
            a[(i, j)] = g[(i, j)];
            a[(i, n + j)] = -g[(i, j)];
        }
        a[(i, 2 * n + i)] = T::one();
        b[i] = h[i];
    }
    for i in 0..me {
        for j in 0..n {
            a[(mi + i, j)] = e[(i, j)];
            a[(mi + i, n + j)] = -e[(i, j)];
        }
        b[mi + i] = f[i];
    }
    let mut cc = DVector::zeros(2 * n + mi);
    for j in 0..n {
        cc[j] = c[j];
        cc[n + j] = -c[j];
    }
    let sol = solve_standard(&cc, &a, &b)?;
    let x = DVector::from_fn(n, |j, _| sol.x[j] - sol.x[n + j]);
    let value = c.dot(&x);
    Ok(LpSolution {
        status: sol.status,
        x,
        value,
    })
}

/// Any point of `{x : Gx ≤ h}`, or `None` if empty.
pub fn feasible_point<T: Real>(g: &DMatrix<T>, h: &DVector<T>) -> Result<Option<DVector<T>>> {
    let sol = minimize(&DVector::zeros(g.ncols()), g, h)?;
    Ok(match sol.status {
        LpStatus::Infeasible => None,
        _ => Some(sol.x),
    })
}

/// Largest ball `{x : ‖x − c‖ ≤ r}` inside `{Gx ≤ h}` (radius capped at
/// `cap`). `None` if the polytope is empty.
pub fn chebyshev_center<T: Real>(
    g: &DMatrix<T>,
    h: &DVector<T>,
    cap: T,
) -> Result<Option<(DVector<T>, T)>> {
    let n = g.ncols();
    let m = g.nrows();
    let mut ga = DMatrix::zeros(m + 1, n + 1);
    let mut ha = DVector::zeros(m + 1);
    for i in 0..m {
        for j in 0..n {
            ga[(i, j)] = g[(i, j)];
        }
        ga[(i, n)] = g.row(i).norm();
        ha[i] = h[i];
    }
    ga[(m, n)] = T::one();
    ha[m] = cap;
    let mut c = DVector::zeros(n + 1);
    c[n] = -T::one();
    let sol = minimize(&c, &ga, &ha)?;
    Ok(match sol.status {
        LpStatus::Optimal if sol.x[n] >= -lp_tolerance::<T>() => {
            Some((sol.x.rows(0, n).into_owned(), sol.x[n]))
        }
        _ => None,
    })
}

/// Whether `d = G s` for some `‖s‖_∞ ≤ 1`.
pub fn zonotope_membership<T: Real>(g: &DMatrix<T>, d: &DVector<T>) -> bool {
    let (n, p) = g.shape();
    // s = t − 1 with t ∈ [0, 2]: G t = d + G1, t + r = 2.
    let mut a = DMatrix::zeros(n + p, 2 * p);
    let mut b = DVector::zeros(n + p);
    let ones = DVector::from_element(p, T::one());
    let shifted = d + g * ones;
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = g[(i, j)];
        }
        b[i] = shifted[i];
    }
    for j in 0..p {
        a[(n + j, j)] = T::one();
        a[(n + j, p + j)] = T::one();
        b[n + j] = lit(2.0);
    }
    matches!(
        solve_standard(&DVector::zeros(2 * p), &a, &b).map(|s| s.status),
        Ok(LpStatus::Optimal)
    )
}

/// Farkas certificate of emptiness of `{x : Gx ≤ h, Ex = f}`:
/// multipliers `y ≥ 0`, `µ` with `Gᵀy + Eᵀµ = 0` and `hᵀy + fᵀµ = −1`.
pub fn farkas_certificate<T: Real>(
    g: &DMatrix<T>,
    h: &DVector<T>,
    e: &DMatrix<T>,
    f: &DVector<T>,
) -> Result<Option<(DVector<T>, DVector<T>)>> {
    let n = g.ncols();
    let (mi, me) = (g.nrows(), e.nrows());
    // variables [y, µ⁺, µ⁻] ≥ 0
    let nv = mi + 2 * me;
    let mut a = DMatrix::zeros(n + 1, nv);
    let mut b = DVector::zeros(n + 1);
    for j in 0..n {
        for i in 0..mi {
            a[(j, i)] = g[(i, j)];
        }
        for i in 0..me {
            a[(j, mi + i)] = e[(i, j)];
            a[(j, mi + me + i)] = -e[(i, j)];
        }
    }
    for i in 0..mi {
        a[(n, i)] = h[i];
    }
    for i in 0..me {
        a[(n, mi + i)] = f[i];
        a[(n, mi + me + i)] = -f[i];
    }
    b[n] = -T::one();
    let sol = solve_standard(&DVector::zeros(nv), &a, &b)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let y = sol.x.rows(0, mi).into_owned();
    let mu = DVector::from_fn(me, |i, _| sol.x[mi + i] - sol.x[mi + me + i]);
    Ok(Some((y, mu)))
}
