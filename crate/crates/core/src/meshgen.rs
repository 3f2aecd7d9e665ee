//! Optimal knots from the equidistribution principle.
//!
//! A mesh `x(xi)` equidistributes the monitor `m(x) = (eps + u''(x)^2)^(1/5)`
//! when `int_0^x m = xi * D` with `D = int_0^1 m`, i.e. when it solves
//!
//! ```text
//! dx/dxi = D / m(x),   x(0) = 0,   x(1) = 1.
//! ```
//!
//! [`optimal_knots_ode`] integrates this with an adaptive Runge–Kutta pair and
//! finds `D` by bisection shooting on the right boundary condition. To cope
//! with monitors that vanish or blow up at an endpoint (such as
//! `u = x^(2/3)` at 0), the first and last `delta = 1e-6` of the interval are
//! covered by the exact solution for a local power law `m ~ |x - x_end|^p`.
//!
//! For `u = x^alpha` the mesh is known in closed form,
//! `x(xi) = xi^(5/(2 alpha + 1))` ([`optimal_knots_xalpha`]).

use crate::error::{Error, Result};
use crate::ode::{Dopri5, Outcome};
use crate::splines::KnotVector;
use crate::targets::TargetFunction;

/// Width of the analytic end patches.
pub const END_PATCH: f64 = 1e-6;
const SHOOT_TOL: f64 = 1e-8;
const MAX_BISECTIONS: usize = 50;

/// `m(x) = (eps + u''(x)^2)^(1/5)`.
#[derive(Clone, Debug)]
pub struct MonitorFunction {
    pub base: TargetFunction,
    pub epsilon: f64,
}

impl MonitorFunction {
    pub const EXPONENT: f64 = 0.2;

    pub fn new(base: TargetFunction, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("monitor epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self { base, epsilon })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d2 = self.base.d2(x);
        (self.epsilon + d2 * d2).powf(Self::EXPONENT)
    }
}

/// Physical coordinates `x(xi)` on a uniform computational grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshMap {
    pub xi_grid: Vec<f64>,
    pub x_values: Vec<f64>,
    pub integral_d: f64,
}

// Local power-law model m(x_end + s) ~ m(delta) (s/delta)^p near an endpoint.
#[derive(Clone, Copy, Debug)]
struct EndPatch {
    p: f64,
    // int of m over the patch
    mass: f64,
}

impl EndPatch {
    fn fit(m_delta: f64, m_2delta: f64) -> Result<Self> {
        if !(m_delta > 0.0 && m_2delta > 0.0) {
            return Err(Error::Integration("monitor vanishes next to an endpoint".into()));
        }
        let p = (m_2delta / m_delta).log2().max(-0.95);
        Ok(Self {
            p,
            mass: m_delta * END_PATCH / (1.0 + p),
        })
    }

    // Distance from the endpoint at computational distance `s` when the patch spans `s_end`.
    fn offset(&self, s: f64, s_end: f64) -> f64 {
        END_PATCH * (s / s_end).max(0.0).powf(1.0 / (1.0 + self.p))
    }
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

struct Shooter<'a> {
    monitor: &'a MonitorFunction,
    left: EndPatch,
    right: EndPatch,
    solver: Dopri5,
}

impl Shooter<'_> {
    fn xi_left(&self, d: f64) -> f64 {
        self.left.mass / d
    }

    fn xi_right(&self, d: f64) -> f64 {
        1.0 - self.right.mass / d
    }

    // Integrates from the left patch to `xi_right`, reporting values at `inner` (ascending).
    fn shoot(&self, d: f64, inner: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (xa, xb) = (self.xi_left(d), self.xi_right(d));
        if !(xa < xb) {
            return Ok((f64::INFINITY, Vec::new()));
        }
        let mut outputs: Vec<f64> = inner.iter().cloned().filter(|&xi| xi > xa && xi < xb).collect();
        outputs.push(xb);
        let m = self.monitor;
        let rhs = |_: f64, x: f64| d / m.eval(x.clamp(END_PATCH, 1.0 - END_PATCH * 0.5));
        match self
            .solver
            .integrate(rhs, xa, END_PATCH, &outputs, |_, x| x >= 1.0)?
        {
            Outcome::Completed(mut ys) => {
                let end = ys.pop().expect("xi_right is always an output");
                Ok((end - (1.0 - END_PATCH), ys))
            }
            Outcome::Stopped { .. } => Ok((f64::INFINITY, Vec::new())),
        }
    }
}

/// Equidistributing mesh map for the monitor, sampled at `n` uniform `xi`.
pub fn mesh_map(monitor: &MonitorFunction, n: usize) -> Result<MeshMap> {
    if n < 2 {
        return Err(Error::TooFewKnots(n));
    }
    let d = END_PATCH;
    let left = EndPatch::fit(monitor.eval(d), monitor.eval(2.0 * d))?;
    let right = EndPatch::fit(monitor.eval(1.0 - d), monitor.eval(1.0 - 2.0 * d))?;
    let shooter = Shooter {
        monitor,
        left,
        right,
        solver: Dopri5::default(),
    };
    let xi: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();

    // Initial guess: the total monitor mass.
    let interior = simpson(|x| monitor.eval(x), d, 1.0 - d, 20_000);
    let d0 = left.mass + interior + right.mass;
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::Integration(format!("monitor integral is not positive and finite: {d0}")));
    }
    // Residual increases with D: a larger constant pushes x(xi) right.
    let (mut lo, mut hi) = (0.9 * d0, 1.1 * d0);
    let mut r_lo = shooter.shoot(lo, &[])?.0;
    let mut r_hi = shooter.shoot(hi, &[])?.0;
    let mut expansions = 0;
    while !(r_lo < 0.0 && r_hi > 0.0) {
        expansions += 1;
        if expansions > 60 {
            return Err(Error::ShootingFailed {
                iters: 0,
                lo,
                hi,
                residual: r_lo.min(r_hi.abs()),
            });
        }
        if r_lo >= 0.0 {
            lo /= 1.5;
            r_lo = shooter.shoot(lo, &[])?.0;
        }
        if r_hi <= 0.0 {
            hi *= 1.5;
            r_hi = shooter.shoot(hi, &[])?.0;
        }
    }
    let mut best = None;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let (r, _) = shooter.shoot(mid, &[])?;
        if r.abs() < SHOOT_TOL {
            best = Some(mid);
            break;
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let Some(dstar) = best else {
        let mid = 0.5 * (lo + hi);
        return Err(Error::ShootingFailed {
            iters: MAX_BISECTIONS,
            lo,
            hi,
            residual: shooter.shoot(mid, &[])?.0,
        });
    };

    let (xa, xb) = (shooter.xi_left(dstar), shooter.xi_right(dstar));
    let (_, inner) = shooter.shoot(dstar, &xi)?;
    let mut inner = inner.into_iter();
    let x_values = xi
        .iter()
        .map(|&s| {
            if s <= 0.0 {
                0.0
            } else if s >= 1.0 {
                1.0
            } else if s <= xa {
                left.offset(s, xa)
            } else if s >= xb {
                1.0 - right.offset(1.0 - s, 1.0 - xb)
            } else {
                inner.next().expect("one output per interior xi")
            }
        })
        .collect();
    Ok(MeshMap {
        xi_grid: xi,
        x_values,
        integral_d: dstar,
    })
}

/// Optimal knots `k_i = x(i / (N - 1))` from the equidistribution ODE.
pub fn optimal_knots_ode(u: &TargetFunction, eps: f64, n: usize) -> Result<KnotVector> {
    let monitor = MonitorFunction::new(u.clone(), eps)?;
    let map = mesh_map(&monitor, n)?;
    KnotVector::new(map.x_values)
}

/// Closed-form optimal mesh for `u = x^alpha`: knots and the constant `D^5`.
pub fn optimal_knots_xalpha(alpha: f64, n: usize) -> Result<(KnotVector, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let q = 5.0 / (2.0 * alpha + 1.0);
    let kv = KnotVector::power(n, q)?;
    let d5 = alpha * alpha * (1.0 - alpha) * (1.0 - alpha) * q.powi(5);
    Ok((kv, d5))
}

/// Predicted log-log slope `-(1 + 2 alpha)` of the uniform-mesh interpolation
/// error for `u = x^alpha`.
pub fn predicted_uniform_rate_xalpha(alpha: f64) -> f64 {
    -(1.0 + 2.0 * alpha)
}
