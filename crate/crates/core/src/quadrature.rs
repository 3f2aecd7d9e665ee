//! Quadrature grids on [0, 1] with composite-trapezoid weights.

use rand::Rng;

use crate::error::{Error, Result};

/// How the quadrature points were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureMode {
    /// `s` equispaced points including both endpoints.
    FixedUniform,
    /// Both endpoints plus `s - 2` sorted uniform random interior points.
    ResampledUniformRandom,
}

/// Sorted quadrature points with trapezoid weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    mode: QuadratureMode,
}

impl QuadratureGrid {
    pub fn fixed_uniform(s: usize) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidParameter(format!("quadrature needs s >= 2, got {s}")));
        }
        let step = 1.0 / (s - 1) as f64;
        let mut points: Vec<f64> = (0..s).map(|i| i as f64 * step).collect();
        points[s - 1] = 1.0;
        Ok(Self::from_sorted(points, QuadratureMode::FixedUniform))
    }

    pub fn resampled<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidParameter(format!("quadrature needs s >= 2, got {s}")));
        }
        let mut points = Vec::with_capacity(s);
        points.push(0.0);
        let mut interior: Vec<f64> = (0..s - 2).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect();
        interior.sort_by(f64::total_cmp);
        interior.dedup();
        points.extend(interior);
        points.push(1.0);
        Ok(Self::from_sorted(points, QuadratureMode::ResampledUniformRandom))
    }

    /// Builds a grid from arbitrary strictly increasing points.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter("quadrature needs at least 2 points".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("quadrature points must increase strictly".into()));
        }
        Ok(Self::from_sorted(points, QuadratureMode::FixedUniform))
    }

    fn from_sorted(points: Vec<f64>, mode: QuadratureMode) -> Self {
        let s = points.len();
        let mut weights = vec![0.0; s];
        for i in 0..s - 1 {
            let h = 0.5 * (points[i + 1] - points[i]);
            weights[i] += h;
            weights[i + 1] += h;
        }
        Self { points, weights, mode }
    }

    /// Draws fresh interior points for a resampled grid; fixed grids are unchanged.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.mode == QuadratureMode::ResampledUniformRandom {
            *self = Self::resampled(self.points.len(), rng).expect("size already validated");
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> QuadratureMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sum_j q_j f(x_j)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &q)| q * f(x)).sum()
    }
}
