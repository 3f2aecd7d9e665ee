//! Loss functions and their analytic gradients.
//!
//! * `L2`   — discrete squared L2 error on a [`QuadratureGrid`].
//! * `L_E`  — equidistribution loss: spread of the per-cell densities
//!   `rho_i = h_i (eps^2 + u''(mid_i)^2)^(1/5)` around their mean.
//! * `L_comb = L2 + beta * L_E`.
//! * `L_I`  — the interpolation-error proxy `sum h_i^5 u''(mid_i)^2 / 120`.
//!
//! Gradients are exact derivatives of the discrete losses. Where the model
//! has a kink exactly at a quadrature point the one-sided derivative that
//! treats the kink as inactive is used (the derivative of `max(z, 0)` at
//! `z = 0` is taken as 0).

use crate::error::{Error, Result};
pub use crate::quadrature::{QuadratureGrid, QuadratureMode};
use crate::splines::{FksModel, KnotVector};
use crate::targets::TargetFunction;

/// Default regulariser in the density `rho`.
pub const DEFAULT_EPSILON_SQ: f64 = 0.1;
/// Default number of quadrature points.
pub const DEFAULT_QUAD_POINTS: usize = 1000;

/// Weight of the equidistribution term, regulariser and quadrature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub beta: f64,
    pub epsilon_sq: f64,
    pub grid: QuadratureGrid,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            epsilon_sq: DEFAULT_EPSILON_SQ,
            grid: QuadratureGrid::fixed_uniform(DEFAULT_QUAD_POINTS).expect("valid default size"),
        }
    }
}

impl LossConfig {
    pub fn new(beta: f64, epsilon_sq: f64, grid: QuadratureGrid) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        if !(epsilon_sq >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon_sq must be >= 0, got {epsilon_sq}")));
        }
        Ok(Self { beta, epsilon_sq, grid })
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_epsilon_sq(mut self, epsilon_sq: f64) -> Self {
        self.epsilon_sq = epsilon_sq;
        self
    }
}

/// Loss value plus gradients with respect to the model's free parameters.
///
/// `d_weights` follows the model's coefficient layout (nodal weights for a
/// spline, `[left_coef, c_0, .., c_{N-2}]` for a ReLU network); `d_knots`
/// holds the `N - 2` interior knots.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub d_weights: Vec<f64>,
    pub d_knots: Vec<f64>,
    pub loss: f64,
}

/// A continuous piecewise linear model on a knot vector.
pub trait PiecewiseLinear {
    fn knot_vector(&self) -> &KnotVector;

    /// Model values at sorted points.
    fn eval_sorted(&self, xs: &[f64]) -> Vec<f64>;

    /// `L2` with its gradient given the residual weights `g_j = 2 q_j (y_j - u_j)`.
    fn l2_gradient(&self, xs: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>);
}

impl PiecewiseLinear for FksModel {
    fn knot_vector(&self) -> &KnotVector {
        self.knots()
    }

    fn eval_sorted(&self, xs: &[f64]) -> Vec<f64> {
        FksModel::eval_sorted(self, xs)
    }

    fn l2_gradient(&self, xs: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.knots().as_slice();
        let w = self.weights();
        let n = k.len();
        let mut dw = vec![0.0; n];
        let mut dk_full = vec![0.0; n];
        let mut c = 0;
        for (&x, &gj) in xs.iter().zip(g) {
            while c < n - 2 && x >= k[c + 1] {
                c += 1;
            }
            let h = k[c + 1] - k[c];
            let t = (x - k[c]) / h;
            let slope = (w[c + 1] - w[c]) / h;
            dw[c] += gj * (1.0 - t);
            dw[c + 1] += gj * t;
            dk_full[c] -= gj * slope * (1.0 - t);
            dk_full[c + 1] -= gj * slope * t;
        }
        (dw, dk_full[1..n - 1].to_vec())
    }
}

fn residual_weights<M: PiecewiseLinear + ?Sized>(m: &M, u: &TargetFunction, grid: &QuadratureGrid) -> (f64, Vec<f64>) {
    let xs = grid.points();
    let y = m.eval_sorted(xs);
    let mut loss = 0.0;
    let g = xs
        .iter()
        .zip(&y)
        .zip(grid.weights())
        .map(|((&x, &yx), &q)| {
            let r = yx - u.eval(x);
            loss += q * r * r;
            2.0 * q * r
        })
        .collect();
    (loss, g)
}

/// Trapezoid-weighted squared error `sum_j q_j (y(x_j) - u(x_j))^2`.
pub fn loss_l2<M: PiecewiseLinear + ?Sized>(m: &M, u: &TargetFunction, grid: &QuadratureGrid) -> f64 {
    let xs = grid.points();
    m.eval_sorted(xs)
        .iter()
        .zip(xs)
        .zip(grid.weights())
        .map(|((y, &x), q)| {
            let r = y - u.eval(x);
            q * r * r
        })
        .sum()
}

/// Midpoint of a cell, nudged off any declared singular point of `u''`.
fn safe_midpoint(a: f64, b: f64, u: &TargetFunction, gap_floor: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let floor = gap_floor.max(f64::MIN_POSITIVE);
    if u.near_singularity(mid, floor) {
        mid + floor
    } else {
        mid
    }
}

fn cell_monitor(u: &TargetFunction, x: f64, epsilon_sq: f64) -> (f64, f64) {
    let d2 = u.d2(x);
    let base = epsilon_sq + d2 * d2;
    let m = base.powf(0.2);
    let dm = if base > 0.0 { 0.4 * m / base * d2 * u.d3(x) } else { 0.0 };
    (m, dm)
}

/// Per-cell densities `rho_i = h_i (eps^2 + u''(mid_i)^2)^(1/5)`.
pub fn rho_cells(kv: &KnotVector, u: &TargetFunction, epsilon_sq: f64) -> Vec<f64> {
    kv.as_slice()
        .windows(2)
        .map(|w| {
            let mid = safe_midpoint(w[0], w[1], u, kv.gap_floor());
            (w[1] - w[0]) * cell_monitor(u, mid, epsilon_sq).0
        })
        .collect()
}

/// `sum_i (rho_i - mean(rho))^2`.
pub fn loss_equi(kv: &KnotVector, u: &TargetFunction, epsilon_sq: f64) -> f64 {
    let rho = rho_cells(kv, u, epsilon_sq);
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    rho.iter().map(|r| (r - mean).powi(2)).sum()
}

/// `L_E` and its gradient with respect to the interior knots.
pub fn grad_loss_equi(kv: &KnotVector, u: &TargetFunction, epsilon_sq: f64) -> (f64, Vec<f64>) {
    let k = kv.as_slice();
    let n = k.len();
    let mut rho = Vec::with_capacity(n - 1);
    let mut drho = Vec::with_capacity(n - 1);
    for w in k.windows(2) {
        let h = w[1] - w[0];
        let mid = safe_midpoint(w[0], w[1], u, kv.gap_floor());
        let (m, dm) = cell_monitor(u, mid, epsilon_sq);
        rho.push(h * m);
        // (d rho / d k_left, d rho / d k_right)
        drho.push((-m + 0.5 * h * dm, m + 0.5 * h * dm));
    }
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    let mut loss = 0.0;
    let mut dk = vec![0.0; n];
    for (i, (&r, &(dl, dr))) in rho.iter().zip(&drho).enumerate() {
        let dev = r - mean;
        loss += dev * dev;
        dk[i] += 2.0 * dev * dl;
        dk[i + 1] += 2.0 * dev * dr;
    }
    (loss, dk[1..n - 1].to_vec())
}

/// `L2 + beta * L_E` on the model's knots; `beta = 0` is exactly `L2`.
pub fn loss_comb<M: PiecewiseLinear + ?Sized>(m: &M, u: &TargetFunction, cfg: &LossConfig) -> f64 {
    let l2 = loss_l2(m, u, &cfg.grid);
    if cfg.beta == 0.0 {
        return l2;
    }
    l2 + cfg.beta * loss_equi(m.knot_vector(), u, cfg.epsilon_sq)
}

/// Gradient of `loss_comb` with respect to coefficients and interior knots.
pub fn grad_loss<M: PiecewiseLinear + ?Sized>(m: &M, u: &TargetFunction, cfg: &LossConfig) -> GradReport {
    let (mut loss, g) = residual_weights(m, u, &cfg.grid);
    let (d_weights, mut d_knots) = m.l2_gradient(cfg.grid.points(), &g);
    if cfg.beta != 0.0 {
        let (le, dke) = grad_loss_equi(m.knot_vector(), u, cfg.epsilon_sq);
        loss += cfg.beta * le;
        d_knots.iter_mut().zip(dke).for_each(|(d, e)| *d += cfg.beta * e);
    }
    GradReport {
        d_weights,
        d_knots,
        loss,
    }
}

/// `L_comb` of the interpolant `Pi_1 u` as a function of the knots alone,
/// with its gradient (the weights follow the knots through `w_i = u(k_i)`).
pub fn grad_interpolant_loss(kv: &KnotVector, u: &TargetFunction, cfg: &LossConfig) -> (f64, Vec<f64>) {
    let m = crate::splines::interpolating_fks(kv, u);
    let r = grad_loss(&m, u, cfg);
    let k = kv.as_slice();
    let d_knots = r
        .d_knots
        .iter()
        .enumerate()
        .map(|(j, dk)| dk + r.d_weights[j + 1] * u.d1(k[j + 1]))
        .collect();
    (r.loss, d_knots)
}

/// `(1/120) sum_i h_i^5 u''(mid_i)^2`.
pub fn loss_interp_proxy(kv: &KnotVector, u: &TargetFunction) -> f64 {
    kv.as_slice()
        .windows(2)
        .map(|w| {
            let h = w[1] - w[0];
            let d2 = u.d2(safe_midpoint(w[0], w[1], u, kv.gap_floor()));
            h.powi(5) * d2 * d2
        })
        .sum::<f64>()
        / 120.0
}

/// `(N - 1) max_i rho_i / sum_i rho_i`; equal to 1 exactly when equidistributed.
pub fn equi_quality(kv: &KnotVector, u: &TargetFunction, epsilon_sq: f64) -> f64 {
    let rho = rho_cells(kv, u, epsilon_sq);
    let total: f64 = rho.iter().sum();
    let max = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rho.len() as f64 * max / total
}

/// Least-squares slope of `ln loss` against `ln N`.
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let m = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(n, l)| ((n as f64).ln(), l.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
