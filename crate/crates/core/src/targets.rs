//! Scalar target functions on [0, 1] with analytic derivatives.
//!
//! The five builtin targets range from a smooth parabola to a singular
//! power law, a smoothed step and a localised oscillation. User targets can
//! be added to a [`TargetRegistry`]; a missing third derivative falls back to
//! central differences of the second derivative.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A target `u` with `u'`, `u''` (and optionally `u'''`) plus metadata.
#[derive(Clone)]
pub struct TargetFunction {
    id: String,
    eval: ScalarFn,
    d1: ScalarFn,
    d2: ScalarFn,
    d3: Option<ScalarFn>,
    smallest_length_scale: Option<f64>,
    singular_points: Vec<f64>,
    monitor_epsilon: f64,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("id", &self.id)
            .field("smallest_length_scale", &self.smallest_length_scale)
            .field("singular_points", &self.singular_points)
            .field("monitor_epsilon", &self.monitor_epsilon)
            .finish_non_exhaustive()
    }
}

impl TargetFunction {
    pub fn new<F, D1, D2>(id: impl Into<String>, eval: F, d1: D1, d2: D2) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            eval: Arc::new(eval),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
            d3: None,
            smallest_length_scale: None,
            singular_points: Vec::new(),
            monitor_epsilon: 0.0,
        }
    }

    pub fn with_d3<F>(mut self, d3: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.d3 = Some(Arc::new(d3));
        self
    }

    pub fn with_singular_points(mut self, points: Vec<f64>) -> Self {
        self.singular_points = points;
        self
    }

    pub fn with_length_scale(mut self, scale: f64) -> Self {
        self.smallest_length_scale = Some(scale);
        self
    }

    /// Default regulariser used in the monitor `(eps + u''^2)^(1/5)`.
    pub fn with_monitor_epsilon(mut self, eps: f64) -> Self {
        self.monitor_epsilon = eps;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        (self.d1)(x)
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        (self.d2)(x)
    }

    /// Third derivative; central differences of `d2` when no formula was given.
    pub fn d3(&self, x: f64) -> f64 {
        match &self.d3 {
            Some(f) => f(x),
            None => {
                let h = 1e-5 * (1.0 + x.abs());
                (self.d2(x + h) - self.d2(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn has_analytic_d3(&self) -> bool {
        self.d3.is_some()
    }

    pub fn smallest_length_scale(&self) -> Option<f64> {
        self.smallest_length_scale
    }

    pub fn singular_points(&self) -> &[f64] {
        &self.singular_points
    }

    pub fn monitor_epsilon(&self) -> f64 {
        self.monitor_epsilon
    }

    /// True when `x` lies within `tol` of a declared singular point of `u''`.
    pub fn near_singularity(&self, x: f64, tol: f64) -> bool {
        self.singular_points.iter().any(|p| (x - p).abs() < tol)
    }
}

/// `u1(x) = x(1 - x)`.
pub fn u1() -> TargetFunction {
    TargetFunction::new("u1", |x| x * (1.0 - x), |x| 1.0 - 2.0 * x, |_| -2.0).with_d3(|_| 0.0)
}

/// `u2(x) = sin(pi x)`.
pub fn u2() -> TargetFunction {
    TargetFunction::new(
        "u2",
        |x| (PI * x).sin(),
        |x| PI * (PI * x).cos(),
        |x| -PI * PI * (PI * x).sin(),
    )
    .with_d3(|x| -PI * PI * PI * (PI * x).cos())
}

/// `u3(x) = x^(2/3)`, singular second derivative at 0.
pub fn u3() -> TargetFunction {
    TargetFunction::new(
        "u3",
        |x| {
            let c = x.cbrt();
            c * c
        },
        |x| 2.0 / (3.0 * x.cbrt()),
        |x| -2.0 / (9.0 * x * x.cbrt()),
    )
    .with_d3(|x| 8.0 / (27.0 * x * x * x.cbrt()))
    .with_singular_points(vec![0.0])
}

const U4_SLOPE: f64 = 100.0;

// tanh(z) and sech(z)^2 at z = 100 (x - 1/4); sech^2 is formed directly so it
// keeps full relative accuracy far from the step, where 1 - tanh^2 cancels.
fn u4_parts(x: f64) -> (f64, f64) {
    let z = U4_SLOPE * (x - 0.25);
    let sech = 1.0 / z.cosh();
    (z.tanh(), sech * sech)
}

/// `u4(x) = tanh(100 (x - 1/4))`, a smoothed step.
pub fn u4() -> TargetFunction {
    let a = U4_SLOPE;
    TargetFunction::new(
        "u4",
        |x| u4_parts(x).0,
        move |x| a * u4_parts(x).1,
        move |x| {
            let (t, s) = u4_parts(x);
            -2.0 * a * a * t * s
        },
    )
    .with_d3(move |x| {
        let (t, s) = u4_parts(x);
        -2.0 * a * a * a * s * (s - 2.0 * t * t)
    })
    .with_length_scale(1.0 / a)
    .with_monitor_epsilon(1.0)
}

const U5_WIDTH: f64 = 500.0;
const U5_FREQ: f64 = 20.0 * PI;

// Gaussian envelope g and its derivatives for u5.
fn u5_envelope(x: f64) -> [f64; 4] {
    let z = x - 0.75;
    let g = (-U5_WIDTH * z * z).exp();
    let p = -2.0 * U5_WIDTH * z;
    let dp = -2.0 * U5_WIDTH;
    [g, p * g, (dp + p * p) * g, (3.0 * p * dp + p * p * p) * g]
}

fn u5_carrier(x: f64) -> [f64; 4] {
    let w = U5_FREQ;
    let (s, c) = (w * x).sin_cos();
    [s, w * c, -w * w * s, -w * w * w * c]
}

/// `u5(x) = exp(-500 (x - 3/4)^2) sin(20 pi x)`, a localised oscillation.
pub fn u5() -> TargetFunction {
    TargetFunction::new(
        "u5",
        |x| u5_envelope(x)[0] * u5_carrier(x)[0],
        |x| {
            let (g, s) = (u5_envelope(x), u5_carrier(x));
            g[1] * s[0] + g[0] * s[1]
        },
        |x| {
            let (g, s) = (u5_envelope(x), u5_carrier(x));
            g[2] * s[0] + 2.0 * g[1] * s[1] + g[0] * s[2]
        },
    )
    .with_d3(|x| {
        let (g, s) = (u5_envelope(x), u5_carrier(x));
        g[3] * s[0] + 3.0 * g[2] * s[1] + 3.0 * g[1] * s[2] + g[0] * s[3]
    })
    .with_length_scale(1.0 / U5_WIDTH.sqrt())
    .with_monitor_epsilon(1.0)
}

/// The five builtin targets `u1..u5`, in order.
pub fn builtin_targets() -> Vec<TargetFunction> {
    vec![u1(), u2(), u3(), u4(), u5()]
}

/// Lookup table of targets by id, seeded with the builtins.
#[derive(Clone, Debug)]
pub struct TargetRegistry {
    targets: BTreeMap<String, TargetFunction>,
}

impl Default for TargetRegistry {
    fn default() -> Self {
        let targets = builtin_targets()
            .into_iter()
            .map(|t| (t.id().to_string(), t))
            .collect();
        Self { targets }
    }
}

impl TargetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a target under its id.
    pub fn register(&mut self, target: TargetFunction) {
        self.targets.insert(target.id().to_string(), target);
    }

    pub fn get(&self, id: &str) -> Result<TargetFunction> {
        self.targets
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownTarget(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.targets.keys().map(String::as_str)
    }
}

/// Looks up a builtin target by id.
pub fn builtin(id: &str) -> Result<TargetFunction> {
    TargetRegistry::default().get(id)
}
