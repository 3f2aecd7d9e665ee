//! Condition numbers of the spline mass matrix `M`, the weight-to-scaling map
//! `T` and their product `M T^{-1}`.
//!
//! For uniform knots all three are tridiagonal Toeplitz (or share Toeplitz
//! eigenvectors), so closed-form eigenvalues are available:
//!
//! * `lambda_k = (N-1) (-2 + 2 cos(pi k / (M+1)))`, `k = 1..M`, `M = N-2` for `T`;
//! * `mu_k = (4 + 2 cos(pi k / (N+1))) / (6 (N-1))`, `k = 1..N` for `M`.
//!
//! `kappa(M) < 3` for every `N`, whereas `kappa(T)` and `kappa(M T^{-1})` grow
//! like `N^2`; the latter is close to `12 N^2 / pi^2`.
//!
//! The mass matrix used here is the `N x N` Toeplitz-style matrix whose end
//! rows are completed with mirrored ghost knots `k_{-1} = -k_1` and
//! `k_N = 2 - k_{N-2}`. For uniform knots it is exactly the Toeplitz matrix
//! with `4` on the diagonal and `1` off it (scaled by `1/(6(N-1))`), which is
//! what the closed form describes; its interior rows coincide with the true
//! Gram matrix of the hats.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dense_condition, TridiagMatrix};
use crate::relu::t_matrix;
use crate::splines::KnotVector;

/// Largest knot count accepted by the dense condition-number routines.
pub const MAX_DENSE_N: usize = 512;

/// Closed-form eigenvalues of `T` for `n_knots` uniform knots (`n_interior = n_knots - 2`).
pub fn toeplitz_eigs_t(n_interior: usize, n_knots: usize) -> Vec<f64> {
    let scale = (n_knots - 1) as f64;
    (1..=n_interior)
        .map(|k| scale * (-2.0 + 2.0 * (PI * k as f64 / (n_interior + 1) as f64).cos()))
        .collect()
}

/// Closed-form eigenvalues of the uniform `N x N` mass matrix.
pub fn toeplitz_eigs_m(n: usize) -> Vec<f64> {
    let denom = 6.0 * (n - 1) as f64;
    (1..=n)
        .map(|k| (4.0 + 2.0 * (PI * k as f64 / (n + 1) as f64).cos()) / denom)
        .collect()
}

/// `12 N^2 / pi^2`, the large-`N` estimate of `kappa(M T^{-1})`.
pub fn predicted_kappa_mtinv(n: usize) -> f64 {
    12.0 * (n * n) as f64 / (PI * PI)
}

/// `4 (M+1)^2 / pi^2 + 1`, the large-`M` estimate of `kappa(T)`.
pub fn predicted_kappa_t(n_interior: usize) -> f64 {
    4.0 * ((n_interior + 1) * (n_interior + 1)) as f64 / (PI * PI) + 1.0
}

// Knot spans k_{i+1} - k_{i-1} with mirrored ghost knots at both ends.
fn spans(kv: &KnotVector) -> Vec<f64> {
    let k = kv.as_slice();
    let n = k.len();
    let ghost = |i: isize| -> f64 {
        if i < 0 {
            -k[1]
        } else if i as usize >= n {
            2.0 - k[n - 2]
        } else {
            k[i as usize]
        }
    };
    (0..n as isize).map(|i| ghost(i + 1) - ghost(i - 1)).collect()
}

/// `N x N` mass matrix with ghost-completed end rows (see module docs).
pub fn conditioning_mass_matrix(kv: &KnotVector) -> TridiagMatrix {
    let k = kv.as_slice();
    let diag = spans(kv).iter().map(|d| d / 3.0).collect();
    let off = k.windows(2).map(|w| (w[1] - w[0]) / 6.0).collect();
    TridiagMatrix::symmetric(diag, off).expect("bands sized from the knot vector")
}

/// Gershgorin enclosure `(min d_i / 6, max d_i / 2)` of the spectrum of
/// [`conditioning_mass_matrix`], where `d_i = k_{i+1} - k_{i-1}`.
pub fn gershgorin_bounds_m(kv: &KnotVector) -> (f64, f64) {
    let d = spans(kv);
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = d.iter().cloned().fold(0.0, f64::max);
    (min / 6.0, max / 2.0)
}

/// Which matrix to condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    M,
    T,
    MTinv,
}

fn ratio_abs(values: &[f64]) -> Result<f64> {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min > 0.0 && min.is_finite() {
        Ok(max / min)
    } else {
        Err(Error::SingularMatrix)
    }
}

fn check_size(kv: &KnotVector) -> Result<()> {
    let n = kv.len();
    if n < 3 {
        return Err(Error::TooFewKnots(n));
    }
    if n > MAX_DENSE_N {
        return Err(Error::InvalidParameter(format!(
            "condition numbers are computed densely for N <= {MAX_DENSE_N}, got {n}"
        )));
    }
    Ok(())
}

/// Spectral condition number computed numerically.
///
/// `M` and `T` are symmetric tridiagonal and use a QL eigensolve. For
/// `M T^{-1}` (with the interior block of `M`) uniform knots exploit the
/// common eigenvectors of the two Toeplitz factors, so `nu_k = mu_k / lambda_k`
/// pairs eigenvalues of equal index; otherwise the product is formed column by
/// column with Thomas solves and conditioned by a dense SVD.
pub fn numeric_condition(kv: &KnotVector, which: Which) -> Result<f64> {
    check_size(kv)?;
    match which {
        Which::M => ratio_abs(&conditioning_mass_matrix(kv).symmetric_eigenvalues()?),
        Which::T => ratio_abs(&t_matrix(kv)?.symmetric_eigenvalues()?),
        Which::MTinv => {
            let m_int = interior_mass_block(kv);
            let t = t_matrix(kv)?;
            if kv.is_uniform(1e-12) {
                // Both spectra are sorted by the same cosine, i.e. by eigenvector index.
                let mu = m_int.symmetric_eigenvalues()?;
                let lambda = t.symmetric_eigenvalues()?;
                let nu: Vec<f64> = mu.iter().zip(&lambda).map(|(m, l)| m / l).collect();
                ratio_abs(&nu)
            } else {
                dense_condition(&mt_inverse_dense(&m_int, &t)?)
            }
        }
    }
}

/// Dense `M T^{-1}` via one Thomas solve per column; `T` is symmetric so the
/// columns of `T^{-1}` are its rows.
pub fn mt_inverse_dense(m_int: &TridiagMatrix, t: &TridiagMatrix) -> Result<Vec<Vec<f64>>> {
    let dim = t.dim();
    let mut cols = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        cols.push(m_int.matvec(&t.solve(&e)?));
    }
    Ok((0..dim).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

fn interior_mass_block(kv: &KnotVector) -> TridiagMatrix {
    let full = conditioning_mass_matrix(kv);
    let n = full.dim();
    TridiagMatrix::symmetric(full.diag[1..n - 1].to_vec(), full.upper[1..n - 2].to_vec())
        .expect("interior block of a valid matrix")
}

/// How the condition numbers in a report were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ClosedFormUniform,
    Numeric,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedFormUniform => "closed_form_uniform",
            Method::Numeric => "numeric",
        })
    }
}

/// Condition numbers of `M`, `T` and `M T^{-1}` for one knot vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningReport {
    pub n: usize,
    pub kappa_m: f64,
    pub kappa_t: f64,
    pub kappa_mtinv: f64,
    pub predicted_kappa_mtinv: f64,
    /// Upper bound `3 max d_i / min d_i` on `kappa(M)` from Gershgorin discs.
    pub gershgorin_bound_m: f64,
    pub method: Method,
}

impl ConditioningReport {
    /// Condition number of the normal equations for the scalings, `kappa(M T^{-1})^2`.
    pub fn kappa_normal_equations(&self) -> f64 {
        self.kappa_mtinv * self.kappa_mtinv
    }
}

/// Closed-form report for `n` uniform knots (any `n >= 3`).
pub fn closed_form_report(n: usize) -> Result<ConditioningReport> {
    if n < 3 {
        return Err(Error::TooFewKnots(n));
    }
    let m = n - 2;
    let kappa_m = ratio_abs(&toeplitz_eigs_m(n))?;
    let lambda = toeplitz_eigs_t(m, n);
    let kappa_t = ratio_abs(&lambda)?;
    let denom = 6.0 * (n - 1) as f64;
    let nu: Vec<f64> = lambda
        .iter()
        .enumerate()
        .map(|(i, l)| (4.0 + 2.0 * (PI * (i + 1) as f64 / (m + 1) as f64).cos()) / denom / l)
        .collect();
    Ok(ConditioningReport {
        n,
        kappa_m,
        kappa_t,
        kappa_mtinv: ratio_abs(&nu)?,
        predicted_kappa_mtinv: predicted_kappa_mtinv(n),
        gershgorin_bound_m: 3.0,
        method: Method::ClosedFormUniform,
    })
}

/// Numeric report for an arbitrary knot vector with `3 <= N <= 512`.
pub fn numeric_report(kv: &KnotVector) -> Result<ConditioningReport> {
    let (lo, hi) = gershgorin_bounds_m(kv);
    Ok(ConditioningReport {
        n: kv.len(),
        kappa_m: numeric_condition(kv, Which::M)?,
        kappa_t: numeric_condition(kv, Which::T)?,
        kappa_mtinv: numeric_condition(kv, Which::MTinv)?,
        predicted_kappa_mtinv: predicted_kappa_mtinv(kv.len()),
        gershgorin_bound_m: hi / lo,
        method: Method::Numeric,
    })
}
