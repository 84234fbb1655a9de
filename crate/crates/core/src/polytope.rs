//! Half-space (H-representation) polytopes `{x : Gx ≤ h}`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::check_dim;
use crate::lp::{chebyshev_center, feasible_point, lp_tolerance, minimize, LpStatus};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope<T: Real> {
    pub g: DMatrix<T>,
    pub h: DVector<T>,
}

impl<T: Real> Polytope<T> {
    /// Validates rows and certifies nonemptiness with an LP.
    pub fn new(g: DMatrix<T>, h: DVector<T>) -> Result<Self> {
        let p = Self::from_rows_unchecked(g, h)?;
        if p.is_empty()? {
            return Err(Error::EmptySet("polytope constraints are infeasible".into()));
        }
        Ok(p)
    }

    /// Validates shapes and rows but skips the emptiness check.
    pub fn from_rows_unchecked(g: DMatrix<T>, h: DVector<T>) -> Result<Self> {
        check_dim("polytope rows", g.nrows(), h.len())?;
        for i in 0..g.nrows() {
            if g.row(i).norm() == T::zero() {
                return Err(Error::InvalidArgument(format!("polytope row {i} is zero")));
            }
        }
        if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("polytope data"));
        }
        Ok(Self { g, h })
    }

    /// Whole space in `n` dimensions (no rows).
    pub fn universe(n: usize) -> Self {
        Self {
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
        }
    }

    /// Axis-aligned box; infinite bounds produce no row.
    pub fn from_bounds(lower: &DVector<T>, upper: &DVector<T>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        let n = lower.len();
        let mut rows: Vec<(DVector<T>, T)> = Vec::new();
        for i in 0..n {
            if upper[i].is_finite() {
                let mut e = DVector::zeros(n);
                e[i] = T::one();
                rows.push((e, upper[i]));
            }
            if lower[i].is_finite() {
                let mut e = DVector::zeros(n);
                e[i] = -T::one();
                rows.push((e, -lower[i]));
            }
        }
        Self::from_row_list(n, &rows)
    }

    pub fn from_row_list(n: usize, rows: &[(DVector<T>, T)]) -> Result<Self> {
        let mut g = DMatrix::zeros(rows.len(), n);
        let mut h = DVector::zeros(rows.len());
        for (i, (row, b)) in rows.iter().enumerate() {
            check_dim("polytope row length", n, row.len())?;
            g.set_row(i, &row.transpose());
            h[i] = *b;
        }
        Self::from_rows_unchecked(g, h)
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.g.nrows()
    }

    pub fn row(&self, i: usize) -> DVector<T> {
        self.g.row(i).transpose()
    }

    pub fn contains(&self, x: &DVector<T>, tol: T) -> bool {
        (&self.g * x - &self.h).iter().all(|v| *v <= tol)
    }

    /// Largest constraint violation `max(Gx − h)` (negative inside).
    pub fn max_violation(&self, x: &DVector<T>) -> T {
        (&self.g * x - &self.h)
            .iter()
            .copied()
            .fold(T::min_value().unwrap_or(lit(f64::MIN)), |a, b| a.max(b))
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(feasible_point(&self.g, &self.h)?.is_none())
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        check_dim("intersection dimension", self.dim(), other.dim())?;
        let mut g = DMatrix::zeros(self.nrows() + other.nrows(), self.dim());
        g.rows_mut(0, self.nrows()).copy_from(&self.g);
        g.rows_mut(self.nrows(), other.nrows()).copy_from(&other.g);
        let h = DVector::from_iterator(
            self.nrows() + other.nrows(),
            self.h.iter().chain(other.h.iter()).copied(),
        );
        Ok(Self { g, h })
    }

    /// `{x : Ax ∈ P}`; zero rows of `GA` are dropped when satisfied and
    /// reported as emptiness otherwise.
    pub fn preimage(&self, a: &DMatrix<T>) -> Result<Self> {
        check_dim("preimage map rows", self.dim(), a.nrows())?;
        let ga = &self.g * a;
        let mut rows = Vec::new();
        for i in 0..ga.nrows() {
            let r = ga.row(i).transpose();
            if r.norm() <= lp_tolerance::<T>() * self.g.row(i).norm() {
                if self.h[i] < -lp_tolerance::<T>() {
                    return Err(Error::EmptySet("preimage has an infeasible constant row".into()));
                }
                continue;
            }
            rows.push((r, self.h[i]));
        }
        Self::from_row_list(a.ncols(), &rows)
    }

    /// `{x + c : x ∈ P}`.
    pub fn translate(&self, c: &DVector<T>) -> Self {
        Self {
            g: self.g.clone(),
            h: &self.h + &self.g * c,
        }
    }

    /// Places the polytope on coordinates `cols` of an `n`-dimensional space.
    pub fn embed(&self, cols: &[usize], n: usize) -> Result<Self> {
        check_dim("embedding columns", self.dim(), cols.len())?;
        let mut g = DMatrix::zeros(self.nrows(), n);
        for (j, &c) in cols.iter().enumerate() {
            if c >= n {
                return Err(Error::InvalidArgument(format!("column {c} outside dimension {n}")));
            }
            g.set_column(c, &self.g.column(j));
        }
        Ok(Self {
            g,
            h: self.h.clone(),
        })
    }

    /// `sup_{x ∈ P} dᵀx` via LP.
    pub fn support(&self, d: &DVector<T>) -> Result<T> {
        let sol = minimize(&(-d), &self.g, &self.h)?;
        match sol.status {
            LpStatus::Optimal => Ok(-sol.value),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::Infeasible => Err(Error::EmptySet("support of empty polytope".into())),
        }
    }

    /// Inscribed ball center and radius (capped).
    pub fn chebyshev_center(&self, cap: T) -> Result<Option<(DVector<T>, T)>> {
        chebyshev_center(&self.g, &self.h, cap)
    }

    /// Drops rows implied by the others (LP with tolerance `tol`). Exact
    /// duplicates keep their first occurrence.
    pub fn remove_redundant(&self, tol: T) -> Result<Self> {
        let normalized = self.normalized();
        let mut keep: Vec<bool> = vec![true; self.nrows()];
        for i in 0..self.nrows() {
            for j in 0..i {
                if keep[j]
                    && (normalized.g.row(i) - normalized.g.row(j)).amax() <= tol
                    && normalized.h[j] <= normalized.h[i] + tol
                {
                    keep[i] = false;
                    break;
                }
            }
        }
        for i in 0..self.nrows() {
            if !keep[i] {
                continue;
            }
            // Maximise row i over the others (kept) plus a relaxed copy of itself
            // to keep the LP bounded.
            let idx: Vec<usize> = (0..self.nrows()).filter(|&j| keep[j] && j != i).collect();
            let mut g = DMatrix::zeros(idx.len() + 1, self.dim());
            let mut h = DVector::zeros(idx.len() + 1);
            for (r, &j) in idx.iter().enumerate() {
                g.set_row(r, &normalized.g.row(j));
                h[r] = normalized.h[j];
            }
            g.set_row(idx.len(), &normalized.g.row(i));
            h[idx.len()] = normalized.h[i] + T::one();
            let sol = minimize(&(-normalized.row(i)), &g, &h)?;
            if sol.status == LpStatus::Infeasible {
                return Err(Error::EmptySet("redundancy check on empty polytope".into()));
            }
            if sol.status == LpStatus::Optimal && -sol.value <= normalized.h[i] + tol {
                keep[i] = false;
            }
        }
        let rows: Vec<(DVector<T>, T)> = (0..self.nrows())
            .filter(|&i| keep[i])
            .map(|i| (self.row(i), self.h[i]))
            .collect();
        Self::from_row_list(self.dim(), &rows)
    }

    /// Rows scaled to unit normals.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows() {
            let n = self.g.row(i).norm();
            out.g.row_mut(i).unscale_mut(n);
            out.h[i] /= n;
        }
        out
    }

    /// One row per constraint: `h_1, …, h_n, b`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("g{j}")).collect();
        header.push("b".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.nrows() {
            let mut cells: Vec<String> = self.g.row(i).iter().map(|v| format!("{:e}", to_f64(*v))).collect();
            cells.push(format!("{:e}", to_f64(self.h[i])));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// `X × U` as a polytope over the stacked vector `[x; u]`.
pub fn cartesian_product<T: Real>(x: &Polytope<T>, u: &Polytope<T>) -> Polytope<T> {
    let (nx, nu) = (x.dim(), u.dim());
    let mut g = DMatrix::zeros(x.nrows() + u.nrows(), nx + nu);
    g.view_mut((0, 0), (x.nrows(), nx)).copy_from(&x.g);
    g.view_mut((x.nrows(), nx), (u.nrows(), nu)).copy_from(&u.g);
    let h = DVector::from_iterator(x.nrows() + u.nrows(), x.h.iter().chain(u.h.iter()).copied());
    Polytope { g, h }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit_square() -> Polytope<f64> {
        Polytope::from_bounds(&v(&[-1.0, -1.0]), &v(&[1.0, 1.0])).unwrap()
    }

    #[test]
    fn box_rows_and_membership() {
        let p = unit_square();
        assert_eq!(p.nrows(), 4);
        assert!(p.contains(&v(&[0.5, -1.0]), 0.0));
        assert!(!p.contains(&v(&[1.1, 0.0]), 1e-12));
        assert!((p.support(&v(&[1.0, 2.0])).unwrap() - 3.0).abs() < 1e-9);
        let half = Polytope::from_bounds(&v(&[f64::NEG_INFINITY]), &v(&[0.5])).unwrap();
        assert_eq!(half.nrows(), 1);
    }

    #[test]
    fn rejects_zero_rows_and_empty() {
        assert!(Polytope::new(DMatrix::zeros(1, 2), v(&[1.0])).is_err());
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(matches!(Polytope::new(g, v(&[-1.0, 0.0])), Err(Error::EmptySet(_))));
    }

    #[test]
    fn redundancy_removal() {
        let p = unit_square();
        let extra = Polytope::from_row_list(2, &[(v(&[1.0, 1.0]), 5.0), (v(&[2.0, 0.0]), 2.0)]).unwrap();
        let q = p.intersect(&extra).unwrap().remove_redundant(1e-9).unwrap();
        assert_eq!(q.nrows(), 4);
        let tight = Polytope::from_row_list(2, &[(v(&[1.0, 1.0]), 1.0)]).unwrap();
        let q = p.intersect(&tight).unwrap().remove_redundant(1e-9).unwrap();
        assert_eq!(q.nrows(), 5);
    }

    #[test]
    fn preimage_and_translate() {
        let p = unit_square();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let q = p.preimage(&a).unwrap();
        assert!(q.contains(&v(&[0.5, 1.0]), 1e-12));
        assert!(!q.contains(&v(&[0.6, 0.0]), 1e-12));
        let t = p.translate(&v(&[2.0, 0.0]));
        assert!(t.contains(&v(&[3.0, 0.0]), 1e-12));
        assert!(!t.contains(&v(&[0.0, 0.0]), 1e-12));
        let zero = p.preimage(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.nrows(), 0);
    }

    #[test]
    fn product_and_embed() {
        let x = Polytope::from_bounds(&v(&[-1.0]), &v(&[1.0])).unwrap();
        let u = Polytope::from_bounds(&v(&[0.0]), &v(&[2.0])).unwrap();
        let xu = cartesian_product(&x, &u);
        assert!(xu.contains(&v(&[0.5, 1.5]), 0.0));
        assert!(!xu.contains(&v(&[0.5, -0.5]), 0.0));
        let e = x.embed(&[1], 3).unwrap();
        assert!(e.contains(&v(&[100.0, 0.9, -100.0]), 0.0));
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        unit_square().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next().unwrap(), "g0,g1,b");
    }
}
