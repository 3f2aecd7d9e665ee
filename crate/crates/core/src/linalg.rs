//! Small dense and tridiagonal linear-algebra kernels.
//!
//! Everything here is sized for desk-scale problems (a few hundred unknowns):
//! the Thomas algorithm for tridiagonal solves, an implicit QL eigenvalue
//! solver for symmetric tridiagonal matrices and a one-sided Jacobi SVD for
//! small dense matrices.

use crate::error::{Error, Result};

/// Tridiagonal matrix with explicit sub-, main- and super-diagonals.
///
/// `lower[i]` is entry `(i + 1, i)` and `upper[i]` is entry `(i, i + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagMatrix {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TridiagMatrix {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidParameter("tridiagonal matrix needs dim >= 1".into()));
        }
        for band in [&lower, &upper] {
            if band.len() != n - 1 {
                return Err(Error::LengthMismatch {
                    expected: n - 1,
                    found: band.len(),
                });
            }
        }
        Ok(Self { lower, diag, upper })
    }

    /// Symmetric matrix from its diagonal and off-diagonal.
    pub fn symmetric(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        Self::new(off.clone(), diag, off)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .all(|(l, u)| (l - u).abs() <= tol * (1.0 + l.abs().max(u.abs())))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n, "matvec dimension mismatch");
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Solves `A x = rhs` with the Thomas algorithm (no pivoting), in O(n).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e3 * f64::EPSILON * f64::EPSILON.sqrt();
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let mut pivot = self.diag[0];
        if !(pivot.abs() > tiny) {
            return Err(Error::SingularTridiagonal(0));
        }
        if n > 1 {
            cp[0] = self.upper[0] / pivot;
        }
        dp[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i - 1] * cp[i - 1];
            if !(pivot.abs() > tiny) {
                return Err(Error::SingularTridiagonal(i));
            }
            if i + 1 < n {
                cp[i] = self.upper[i] / pivot;
            }
            dp[i] = (rhs[i] - self.lower[i - 1] * dp[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            dp[i] -= cp[i] * dp[i + 1];
        }
        Ok(dp)
    }

    /// True when the symmetric matrix admits an `L D L^T` factorisation with
    /// positive pivots, i.e. it is positive definite.
    pub fn cholesky_ok(&self) -> bool {
        if !self.is_symmetric(1e-12) {
            return false;
        }
        let mut pivot = self.diag[0];
        if !(pivot > 0.0) {
            return false;
        }
        for i in 1..self.dim() {
            pivot = self.diag[i] - self.lower[i - 1] * self.lower[i - 1] / pivot;
            if !(pivot > 0.0) {
                return false;
            }
        }
        true
    }

    /// Eigenvalues of a symmetric tridiagonal matrix, ascending.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        let mut d = self.diag.clone();
        let mut e = self.upper.clone();
        e.push(0.0);
        tql_eigenvalues(&mut d, &mut e)?;
        d.sort_by(f64::total_cmp);
        Ok(d)
    }
}

// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
// `d` holds the diagonal, `e[i]` the entry (i, i+1) with `e[n-1] = 0`.
fn tql_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::SingularMatrix);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Singular values of a dense row-major matrix, descending, by one-sided
/// Jacobi rotations.
pub fn singular_values(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = rows.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let n = rows[0].len();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let tol = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = cols[p]
                    .iter()
                    .zip(&cols[q])
                    .fold((0.0, 0.0, 0.0), |(a, b, g), (x, y)| (a + x * x, b + y * y, g + x * y));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            return Ok(sv);
        }
    }
    Err(Error::SingularMatrix)
}

/// Spectral condition number `sigma_max / sigma_min` of a dense matrix.
pub fn dense_condition(rows: &[Vec<f64>]) -> Result<f64> {
    let sv = singular_values(rows)?;
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && lo.is_finite() => Ok(hi / lo),
        _ => Err(Error::SingularMatrix),
    }
}
