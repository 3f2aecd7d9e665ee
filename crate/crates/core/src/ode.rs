//! Adaptive Dormand–Prince 5(4) integration of scalar ODEs `y' = f(t, y)`.

use crate::error::{Error, Result};

/// Step-size control settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// Result of an integration that may stop early.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// Solution values at every requested output point.
    Completed(Vec<f64>),
    /// The stop predicate fired at `(t, y)` after the listed outputs.
    Stopped { t: f64, y: f64, outputs: Vec<f64> },
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Dopri5 {
    /// Integrates from `(t0, y0)` through the ascending `outputs`, landing on
    /// each exactly. `stop(t, y)` is checked after every accepted step.
    pub fn integrate<F, S>(&self, f: F, t0: f64, y0: f64, outputs: &[f64], mut stop: S) -> Result<Outcome>
    where
        F: Fn(f64, f64) -> f64,
        S: FnMut(f64, f64) -> bool,
    {
        let mut out = Vec::with_capacity(outputs.len());
        let (mut t, mut y) = (t0, y0);
        let Some(&t_end) = outputs.last() else {
            return Ok(Outcome::Completed(out));
        };
        let mut h = ((t_end - t0).abs() * 1e-3).max(1e-12);
        let mut k1 = f(t, y);
        let mut next = 0;
        while next < outputs.len() && outputs[next] <= t {
            out.push(y);
            next += 1;
        }
        let mut steps = 0;
        while next < outputs.len() {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::Integration(format!("exceeded {} steps at t = {t}", self.max_steps)));
            }
            let target = outputs[next];
            let landing = h >= target - t;
            if landing {
                h = target - t;
            }
            let mut k = [0.0; 7];
            k[0] = k1;
            for s in 1..7 {
                let incr: f64 = (0..s).map(|j| A[s][j] * k[j]).sum();
                k[s] = f(t + C[s] * h, y + h * incr);
            }
            let y_new = y + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
            let err_abs = h * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
            let scale = self.atol + self.rtol * y.abs().max(y_new.abs());
            let err = (err_abs / scale).abs();
            if !err.is_finite() || !y_new.is_finite() {
                h *= 0.2;
                if h < 1e-300 {
                    return Err(Error::Integration(format!("non-finite derivative near t = {t}")));
                }
                continue;
            }
            if err <= 1.0 {
                t = if landing { target } else { t + h };
                y = y_new;
                k1 = k[6];
                while next < outputs.len() && outputs[next] <= t {
                    out.push(y);
                    next += 1;
                }
                if stop(t, y) {
                    return Ok(Outcome::Stopped { t, y, outputs: out });
                }
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        }
        Ok(Outcome::Completed(out))
    }
}
