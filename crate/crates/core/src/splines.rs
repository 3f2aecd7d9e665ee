//! Knot vectors, the linear hat basis and free-knot-spline models.
//!
//! A [`FksModel`] is a continuous piecewise linear function given by its
//! nodal values on a [`KnotVector`]. Both the weights and the interior knots
//! are treated as free parameters by the trainers; this module provides the
//! fixed-knot building blocks: evaluation, interpolation, the mass matrix and
//! the tridiagonal least-squares weight solve.

use crate::error::{Error, Result};
use crate::linalg::TridiagMatrix;
use crate::quadrature::QuadratureGrid;
use crate::targets::TargetFunction;

/// Default minimum spacing between neighbouring knots.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-8;

/// Strictly increasing knots on [0, 1] with `k_0 = 0` and `k_{N-1} = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    gap_floor: f64,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        Self::with_gap_floor(knots, DEFAULT_GAP_FLOOR)
    }

    pub fn with_gap_floor(knots: Vec<f64>, gap_floor: f64) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::TooFewKnots(knots.len()));
        }
        if !(gap_floor >= 0.0) {
            return Err(Error::InvalidParameter(format!("gap floor must be >= 0, got {gap_floor}")));
        }
        let (first, last) = (knots[0], knots[knots.len() - 1]);
        if first != 0.0 || last != 1.0 {
            return Err(Error::Endpoints { first, last });
        }
        if let Some(index) = knots.windows(2).position(|w| !(w[1] - w[0] >= gap_floor && w[1] > w[0])) {
            return Err(Error::Ordering { index, gap_floor });
        }
        Ok(Self { knots, gap_floor })
    }

    /// `n` equispaced knots.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_map(n, |xi| xi)
    }

    /// Knots `k_i = g(i / (n - 1))` for a monotone map `g` with `g(0) = 0`, `g(1) = 1`.
    pub fn from_map<F: Fn(f64) -> f64>(n: usize, g: F) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewKnots(n));
        }
        let mut knots: Vec<f64> = (0..n).map(|i| g(i as f64 / (n - 1) as f64)).collect();
        knots[0] = 0.0;
        knots[n - 1] = 1.0;
        Self::new(knots)
    }

    /// Graded knots `k_i = (i / (n - 1))^p`.
    pub fn power(n: usize, p: f64) -> Result<Self> {
        Self::from_map(n, |xi| xi.powf(p))
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.knots
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.knots
    }

    pub fn gap_floor(&self) -> f64 {
        self.gap_floor
    }

    pub fn min_gap(&self) -> f64 {
        self.knots.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Index `i` of the cell `[k_i, k_{i+1}]` containing `x`; `x = 1` maps to the last cell.
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.knots.len();
        let p = self.knots.partition_point(|&k| k <= x);
        p.saturating_sub(1).min(n - 2)
    }

    /// True when the knots are equispaced to within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let h = 1.0 / (self.len() - 1) as f64;
        self.knots.iter().enumerate().all(|(i, &k)| (k - i as f64 * h).abs() <= tol)
    }
}

/// Value of the `i`-th hat function at `x`.
pub fn basis_eval(kv: &KnotVector, i: usize, x: f64) -> Result<f64> {
    let k = kv.as_slice();
    let n = k.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if i > 0 && x >= k[i - 1] && x <= k[i] {
        return Ok((x - k[i - 1]) / (k[i] - k[i - 1]));
    }
    if i + 1 < n && x >= k[i] && x <= k[i + 1] {
        return Ok((k[i + 1] - x) / (k[i + 1] - k[i]));
    }
    Ok(0.0)
}

/// Knots plus nodal weights: `y(x) = sum_i w_i phi_i(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FksModel {
    knots: KnotVector,
    weights: Vec<f64>,
}

impl FksModel {
    pub fn new(knots: KnotVector, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != knots.len() {
            return Err(Error::LengthMismatch {
                expected: knots.len(),
                found: weights.len(),
            });
        }
        Ok(Self { knots, weights })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_parts(self) -> (KnotVector, Vec<f64>) {
        (self.knots, self.weights)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.knots.as_slice();
        let c = self.knots.cell_of(x);
        let t = (x - k[c]) / (k[c + 1] - k[c]);
        self.weights[c] * (1.0 - t) + self.weights[c + 1] * t
    }

    /// Evaluates at sorted points in a single merge pass, O(s + N).
    pub fn eval_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let k = self.knots.as_slice();
        let last = k.len() - 2;
        let mut c = 0;
        xs.iter()
            .map(|&x| {
                while c < last && x >= k[c + 1] {
                    c += 1;
                }
                let t = (x - k[c]) / (k[c + 1] - k[c]);
                self.weights[c] * (1.0 - t) + self.weights[c + 1] * t
            })
            .collect()
    }
}

/// `sum_i w_i phi_i(x)`.
pub fn fks_eval(m: &FksModel, x: f64) -> f64 {
    m.eval(x)
}

/// The piecewise linear interpolant of `u` on `kv`.
pub fn interpolating_fks(kv: &KnotVector, u: &TargetFunction) -> FksModel {
    let weights = kv.as_slice().iter().map(|&k| u.eval(k)).collect();
    FksModel {
        knots: kv.clone(),
        weights,
    }
}

/// L2 Gram matrix of the hat basis on [0, 1].
pub fn assemble_mass_matrix(kv: &KnotVector) -> TridiagMatrix {
    let k = kv.as_slice();
    let n = k.len();
    let h: Vec<f64> = k.windows(2).map(|w| w[1] - w[0]).collect();
    let diag = (0..n)
        .map(|i| {
            let left = if i > 0 { h[i - 1] } else { 0.0 };
            let right = if i + 1 < n { h[i] } else { 0.0 };
            (left + right) / 3.0
        })
        .collect();
    let off = h.iter().map(|hi| hi / 6.0).collect();
    TridiagMatrix::symmetric(diag, off).expect("bands sized from the knot vector")
}

/// Tridiagonal normal equations `P w = q` of the discrete least-squares
/// problem on `grid`.
pub fn least_squares_system(kv: &KnotVector, u: &TargetFunction, grid: &QuadratureGrid) -> (TridiagMatrix, Vec<f64>) {
    let k = kv.as_slice();
    let n = k.len();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    let mut rhs = vec![0.0; n];
    let mut c = 0;
    for (&x, &q) in grid.points().iter().zip(grid.weights()) {
        while c < n - 2 && x >= k[c + 1] {
            c += 1;
        }
        let t = (x - k[c]) / (k[c + 1] - k[c]);
        let (a, b) = (1.0 - t, t);
        let ux = u.eval(x);
        diag[c] += q * a * a;
        diag[c + 1] += q * b * b;
        off[c] += q * a * b;
        rhs[c] += q * a * ux;
        rhs[c + 1] += q * b * ux;
    }
    let p = TridiagMatrix::symmetric(diag, off).expect("bands sized from the knot vector");
    (p, rhs)
}

/// Least-squares weights on fixed knots using a uniform grid of `s` points.
pub fn solve_fixed_knot_least_squares(kv: &KnotVector, u: &TargetFunction, s: usize) -> Result<FksModel> {
    let min = 4 * kv.len();
    if s < min {
        return Err(Error::QuadratureTooSmall { s, n: kv.len(), min });
    }
    least_squares_on_grid(kv, u, &QuadratureGrid::fixed_uniform(s)?)
}

/// Least-squares weights on fixed knots for an arbitrary quadrature grid.
pub fn least_squares_on_grid(kv: &KnotVector, u: &TargetFunction, grid: &QuadratureGrid) -> Result<FksModel> {
    let s = grid.len();
    let (p, rhs) = least_squares_system(kv, u, grid);
    // A hat whose support holds no quadrature mass leaves its weight undetermined.
    let scale = p.diag.iter().fold(0.0f64, |m, v| m.max(*v));
    if let Some(index) = p.diag.iter().position(|&d| !(d > 1e-14 * scale)) {
        return Err(Error::DegenerateNormalMatrix { index, s });
    }
    let mut w = p.solve(&rhs).map_err(|e| match e {
        Error::SingularTridiagonal(index) => Error::DegenerateNormalMatrix { index, s },
        other => other,
    })?;
    // One step of iterative refinement tightens the stationarity residual.
    let r: Vec<f64> = rhs.iter().zip(p.matvec(&w)).map(|(b, pw)| b - pw).collect();
    let dw = p.solve(&r)?;
    w.iter_mut().zip(dw).for_each(|(wi, d)| *wi += d);
    FksModel::new(kv.clone(), w)
}
