//! Shallow ReLU networks in breakpoint form and the exact maps to and from
//! free knot splines.
//!
//! The canonical network on knots `0 = k_0 < k_1 < .. < k_{N-1} = 1` is
//!
//! ```text
//! y(x) = L * relu(k_1 - x) / k_1 + sum_{i=0}^{N-2} c_i * relu(x - k_i)
//! ```
//!
//! Every unit has unit slope, so the scalings `c_i` are exactly the jumps in
//! slope at the knots. The spline weights `w` and the scalings `c` are related
//! by a tridiagonal matrix `T` whose rows sum to (nearly) zero; `T` is badly
//! conditioned, which is why training `c` directly is slow and why converting
//! to `w` acts as a preconditioner. The inverse map costs one Thomas solve.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::TridiagMatrix;
use crate::losses::PiecewiseLinear;
use crate::splines::{FksModel, KnotVector};

/// A raw one-hidden-layer network `sum_i c_i relu(a_i x + b_i) + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawShallowNet {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c_out: Vec<f64>,
    pub bias_out: f64,
}

impl RawShallowNet {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c_out: Vec<f64>, bias_out: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidParameter("network width must be >= 1".into()));
        }
        for v in [&b, &c_out] {
            if v.len() != a.len() {
                return Err(Error::LengthMismatch {
                    expected: a.len(),
                    found: v.len(),
                });
            }
        }
        Ok(Self { a, b, c_out, bias_out })
    }

    /// Default dense-layer initialisation: input weights and biases uniform in
    /// `(-1, 1)`, output layer uniform in `(-1/sqrt(W), 1/sqrt(W))`. With
    /// `constrained`, every breakpoint is drawn uniformly in `[0, 1]` instead.
    pub fn random<R: Rng + ?Sized>(width: usize, constrained: bool, rng: &mut R) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidParameter("network width must be >= 1".into()));
        }
        let bound = 1.0 / (width as f64).sqrt();
        let mut a = Vec::with_capacity(width);
        let mut b = Vec::with_capacity(width);
        for _ in 0..width {
            let ai: f64 = rng.gen_range(-1.0..1.0);
            a.push(ai);
            if constrained {
                let k: f64 = rng.gen_range(0.0..1.0);
                b.push(-ai * k);
            } else {
                b.push(rng.gen_range(-1.0..1.0));
            }
        }
        let c_out = (0..width).map(|_| rng.gen_range(-bound..bound)).collect();
        let bias_out = rng.gen_range(-bound..bound);
        Self::new(a, b, c_out, bias_out)
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .zip(&self.c_out)
            .map(|((a, b), c)| c * (a * x + b).max(0.0))
            .sum::<f64>()
            + self.bias_out
    }
}

/// Breakpoints `-b_i / a_i` of each unit with `a_i != 0`, flagged when in `[0, 1]`.
pub fn breakpoints_of(raw: &RawShallowNet) -> Vec<(f64, bool)> {
    raw.a
        .iter()
        .zip(&raw.b)
        .filter(|(a, _)| **a != 0.0)
        .map(|(a, b)| {
            let k = -b / a;
            (k, (0.0..=1.0).contains(&k))
        })
        .collect()
}

/// Canonical shallow ReLU network with ordered breakpoints on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ReluModel {
    knots: KnotVector,
    scalings: Vec<f64>,
    left_coef: f64,
}

impl ReluModel {
    pub fn new(knots: KnotVector, scalings: Vec<f64>, left_coef: f64) -> Result<Self> {
        if scalings.len() + 1 != knots.len() {
            return Err(Error::LengthMismatch {
                expected: knots.len() - 1,
                found: scalings.len(),
            });
        }
        Ok(Self {
            knots,
            scalings,
            left_coef,
        })
    }

    /// Converts a raw network into canonical form, exactly on [0, 1].
    ///
    /// Breakpoints strictly inside (0, 1) become knots (merging any closer
    /// than the gap floor); units whose breakpoints fall outside only add an
    /// affine part, which the endpoint values absorb.
    pub fn from_raw(raw: &RawShallowNet) -> Result<Self> {
        let floor = crate::splines::DEFAULT_GAP_FLOOR;
        let mut inside: Vec<f64> = breakpoints_of(raw)
            .into_iter()
            .filter(|&(k, _)| k > floor && k < 1.0 - floor)
            .map(|(k, _)| k)
            .collect();
        inside.sort_by(f64::total_cmp);
        let mut knots = vec![0.0];
        for k in inside {
            if k - knots[knots.len() - 1] >= floor {
                knots.push(k);
            }
        }
        knots.push(1.0);
        let kv = KnotVector::new(knots)?;
        let w = kv.as_slice().iter().map(|&k| raw.eval(k)).collect();
        Ok(fks_to_relu(&FksModel::new(kv, w)?))
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn scalings(&self) -> &[f64] {
        &self.scalings
    }

    pub fn left_coef(&self) -> f64 {
        self.left_coef
    }

    pub fn into_parts(self) -> (KnotVector, Vec<f64>, f64) {
        (self.knots, self.scalings, self.left_coef)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.knots.as_slice();
        let k1 = k[1];
        let mut y = self.left_coef * (k1 - x).max(0.0) / k1;
        for (ki, ci) in k.iter().zip(&self.scalings) {
            y += ci * (x - ki).max(0.0);
        }
        y
    }
}

/// `L relu(k_1 - x)/k_1 + sum_i c_i relu(x - k_i)`.
pub fn relu_eval(m: &ReluModel, x: f64) -> f64 {
    m.eval(x)
}

impl PiecewiseLinear for ReluModel {
    fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    // Running sums of c_i and c_i k_i over the active units give O(s + N).
    fn eval_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let k = self.knots.as_slice();
        let k1 = k[1];
        let c = &self.scalings;
        let (mut slope, mut offset, mut next) = (0.0, 0.0, 0);
        xs.iter()
            .map(|&x| {
                while next < c.len() && k[next] < x {
                    slope += c[next];
                    offset += c[next] * k[next];
                    next += 1;
                }
                let left = if x < k1 { self.left_coef * (k1 - x) / k1 } else { 0.0 };
                left + slope * x - offset
            })
            .collect()
    }

    fn l2_gradient(&self, xs: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.knots.as_slice();
        let n = k.len();
        let k1 = k[1];
        let c = &self.scalings;
        let mut d_left = 0.0;
        let mut d_k1_left = 0.0;
        for (&x, &gj) in xs.iter().zip(g) {
            if x >= k1 {
                break;
            }
            d_left += gj * (k1 - x) / k1;
            d_k1_left += gj * self.left_coef * x / (k1 * k1);
        }
        // Suffix sums of g and g x over points strictly right of each knot.
        let mut dc = vec![0.0; n - 1];
        let mut dk = vec![0.0; n];
        let (mut sg, mut sgx) = (0.0, 0.0);
        let mut j = xs.len();
        for i in (0..n - 1).rev() {
            while j > 0 && xs[j - 1] > k[i] {
                j -= 1;
                sg += g[j];
                sgx += g[j] * xs[j];
            }
            dc[i] = sgx - k[i] * sg;
            dk[i] = -c[i] * sg;
        }
        dk[1] += d_k1_left;
        let mut d_weights = Vec::with_capacity(n);
        d_weights.push(d_left);
        d_weights.extend(dc);
        (d_weights, dk[1..n - 1].to_vec())
    }
}

/// The `(N-2) x (N-2)` matrix `T` mapping interior weights to scalings:
/// diagonal `-beta_i`, sub-diagonal `alpha_i`, super-diagonal `gamma_i`.
pub fn t_matrix(kv: &KnotVector) -> Result<TridiagMatrix> {
    let k = kv.as_slice();
    let n = k.len();
    if n < 3 {
        return Err(Error::TooFewKnots(n));
    }
    let inv_h: Vec<f64> = k.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
    // Row i (1-based knot index): alpha_i = 1/h_{i-1}, gamma_i = 1/h_i.
    let diag = (1..n - 1).map(|i| -(inv_h[i - 1] + inv_h[i])).collect();
    let upper = (1..n - 2).map(|i| inv_h[i]).collect();
    let lower = (2..n - 1).map(|i| inv_h[i - 1]).collect();
    TridiagMatrix::new(lower, diag, upper)
}

// Scalings c_0..c_{N-2} for weights w (w_0 only feeds the left-edge term).
fn scalings_from_weights(k: &[f64], w: &[f64]) -> Vec<f64> {
    let n = k.len();
    let slopes: Vec<f64> = (0..n - 1).map(|i| (w[i + 1] - w[i]) / (k[i + 1] - k[i])).collect();
    let mut c = Vec::with_capacity(n - 1);
    let first = w[1] / k[1];
    c.push(first);
    if n > 2 {
        c.push(slopes[1] - first);
    }
    for i in 2..n - 1 {
        c.push(slopes[i] - slopes[i - 1]);
    }
    c
}

/// Exact conversion of a spline to canonical ReLU form.
pub fn fks_to_relu(m: &FksModel) -> ReluModel {
    let k = m.knots().as_slice();
    let w = m.weights();
    ReluModel {
        knots: m.knots().clone(),
        scalings: scalings_from_weights(k, w),
        left_coef: w[0],
    }
}

// Solves the linear map c(w_1..w_{N-1}) = c for w_1..w_{N-1}: the interior
// block is T w* = c_{1..} - gamma w_{N-1} e, affine in w_{N-1}, which is then
// fixed by the first equation c_0 = w_1 / k_1.
fn solve_weights(kv: &KnotVector, t: Option<&TridiagMatrix>, c: &[f64]) -> Result<Vec<f64>> {
    let k = kv.as_slice();
    let n = k.len();
    let alpha1 = 1.0 / k[1];
    let Some(t) = t else {
        return Ok(vec![c[0] / alpha1]);
    };
    let m = n - 2;
    let gamma_last = 1.0 / (k[n - 1] - k[n - 2]);
    let p = t.solve(&c[1..])?;
    let mut e = vec![0.0; m];
    e[m - 1] = gamma_last;
    let q = t.solve(&e)?;
    if q[0] == 0.0 || !q[0].is_finite() {
        return Err(Error::SingularMatrix);
    }
    let w_last = (p[0] - c[0] / alpha1) / q[0];
    let mut w: Vec<f64> = p.iter().zip(&q).map(|(pi, qi)| pi - w_last * qi).collect();
    w.push(w_last);
    Ok(w)
}

/// Exact inverse of [`fks_to_relu`], via Thomas solves with `T`.
pub fn relu_to_fks(m: &ReluModel) -> Result<FksModel> {
    let kv = m.knots();
    let k = kv.as_slice();
    let n = k.len();
    let t = if n >= 3 { Some(t_matrix(kv)?) } else { None };
    let c = m.scalings();
    let mut tail = solve_weights(kv, t.as_ref(), c)?;
    // One step of iterative refinement on the full map.
    let mut full = Vec::with_capacity(n);
    full.push(0.0);
    full.extend_from_slice(&tail);
    let residual: Vec<f64> = c
        .iter()
        .zip(scalings_from_weights(k, &full))
        .map(|(a, b)| a - b)
        .collect();
    let correction = solve_weights(kv, t.as_ref(), &residual)?;
    tail.iter_mut().zip(correction).for_each(|(w, d)| *w += d);
    if tail.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let mut w = Vec::with_capacity(n);
    w.push(m.left_coef());
    w.extend(tail);
    FksModel::new(kv.clone(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{grad_loss, loss_comb, LossConfig, QuadratureGrid};
    use crate::splines::interpolating_fks;
    use crate::targets::{u1, u3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
    }

    fn random_weights(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn breakpoint_examples() {
        let raw = RawShallowNet::new(vec![1.0, 2.0, 0.0], vec![-0.3, -3.0, 1.0], vec![1.0; 3], 0.0).unwrap();
        let bp = breakpoints_of(&raw);
        assert_eq!(bp.len(), 2);
        assert!((bp[0].0 - 0.3).abs() < 1e-15 && bp[0].1);
        assert_eq!(bp[1], (1.5, false));
    }

    #[test]
    fn evaluation_examples() {
        let kv = KnotVector::uniform(5).unwrap();
        let zero = ReluModel::new(kv.clone(), vec![0.0; 4], 0.0).unwrap();
        assert_eq!(relu_eval(&zero, 0.3), 0.0);
        let id = ReluModel::new(kv, vec![1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        for x in [0.0, 0.2, 0.77, 1.0] {
            assert_eq!(relu_eval(&id, x), x);
        }
    }

    #[test]
    fn u1_scalings_are_second_differences() {
        let n = 21;
        let r = fks_to_relu(&interpolating_fks(&KnotVector::uniform(n).unwrap(), &u1()));
        let h = 1.0 / (n - 1) as f64;
        for c in &r.scalings()[1..] {
            assert!((c + 2.0 * h).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_u3_scalings_are_unbalanced() {
        let r = fks_to_relu(&interpolating_fks(&KnotVector::power(64, 15.0 / 7.0).unwrap(), &u3()));
        let c = r.scalings();
        assert!(c[0] > 0.0 && c[1] < 0.0);
        assert!(c[0].abs() > 100.0 * c[40].abs());
    }

    #[test]
    fn zero_maps_to_zero() {
        let kv = KnotVector::power(9, 1.5).unwrap();
        let r = fks_to_relu(&FksModel::new(kv.clone(), vec![0.0; 9]).unwrap());
        assert!(r.scalings().iter().all(|&c| c == 0.0));
        let back = relu_to_fks(&ReluModel::new(kv, vec![0.0; 8], 0.0).unwrap()).unwrap();
        assert!(back.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn roundtrip_uniform_and_graded() {
        let n = 128;
        let w = random_weights(n, 1);
        let m = FksModel::new(KnotVector::uniform(n).unwrap(), w.clone()).unwrap();
        let back = relu_to_fks(&fks_to_relu(&m)).unwrap();
        assert!(max_rel(back.weights(), &w) < 1e-12);
        let w = random_weights(64, 2);
        let m = FksModel::new(KnotVector::power(64, 2.0).unwrap(), w.clone()).unwrap();
        let back = relu_to_fks(&fks_to_relu(&m)).unwrap();
        assert!(max_rel(back.weights(), &w) < 1e-10);
    }

    #[test]
    fn small_models_roundtrip() {
        for n in [2usize, 3, 4] {
            let w = random_weights(n, n as u64);
            let m = FksModel::new(KnotVector::power(n, 1.3).unwrap(), w.clone()).unwrap();
            let back = relu_to_fks(&fks_to_relu(&m)).unwrap();
            assert!(max_rel(back.weights(), &w) < 1e-14, "n={n}");
        }
    }

    #[test]
    fn t_rows_sum_to_zero_except_at_the_ends() {
        let kv = KnotVector::power(30, 1.7).unwrap();
        let t = t_matrix(&kv).unwrap();
        let r = t.matvec(&vec![1.0; 28]);
        for v in &r[1..27] {
            assert!(v.abs() < 1e-12 * t.diag.iter().fold(0.0f64, |m, d| m.max(d.abs())));
        }
        assert!(r[0].abs() > 1.0 && r[27].abs() > 1.0);
        // T applied to the interior weights reproduces c_1.. up to the w_{N-1} term.
        let w = random_weights(30, 9);
        let c = fks_to_relu(&FksModel::new(kv.clone(), w.clone()).unwrap()).scalings().to_vec();
        let mut tw = t.matvec(&w[1..29]);
        let k = kv.as_slice();
        tw[27] += w[29] / (k[29] - k[28]);
        assert!(max_rel(&tw, &c[1..]) < 1e-12);
    }

    #[test]
    fn raw_networks_are_ingested_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for constrained in [true, false] {
            let raw = RawShallowNet::random(16, constrained, &mut rng).unwrap();
            let m = ReluModel::from_raw(&raw).unwrap();
            if constrained {
                assert_eq!(m.knots().len(), 18);
            }
            for j in 0..=1000 {
                let x = j as f64 / 1000.0;
                assert!((m.eval(x) - raw.eval(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = LossConfig::default().with_beta(0.5);
        let u = u3();
        let kv = KnotVector::new(vec![0.0, 0.10013, 0.3102, 0.55037, 0.8004, 1.0]).unwrap();
        let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = ReluModel::new(kv.clone(), c.clone(), 0.4).unwrap();
        let g = grad_loss(&m, &u, &cfg);
        let h = 1e-6;
        let f = |k: &[f64], c: &[f64], l: f64| {
            loss_comb(&ReluModel::new(KnotVector::new(k.to_vec()).unwrap(), c.to_vec(), l).unwrap(), &u, &cfg)
        };
        let k = kv.as_slice();
        let fd = (f(k, &c, 0.4 + h) - f(k, &c, 0.4 - h)) / (2.0 * h);
        assert!((fd - g.d_weights[0]).abs() < 1e-5 * fd.abs().max(1e-3));
        for i in 0..5 {
            let (mut cp, mut cm) = (c.clone(), c.clone());
            cp[i] += h;
            cm[i] -= h;
            let fd = (f(k, &cp, 0.4) - f(k, &cm, 0.4)) / (2.0 * h);
            assert!((fd - g.d_weights[i + 1]).abs() < 1e-5 * fd.abs().max(1e-3), "c{i}");
        }
        for j in 1..5 {
            let (mut kp, mut km) = (k.to_vec(), k.to_vec());
            kp[j] += h;
            km[j] -= h;
            let fd = (f(&kp, &c, 0.4) - f(&km, &c, 0.4)) / (2.0 * h);
            assert!((fd - g.d_knots[j - 1]).abs() < 1e-5 * fd.abs().max(1e-3), "k{j}: {fd} {}", g.d_knots[j - 1]);
        }
    }

    #[test]
    fn sorted_evaluation_matches_pointwise() {
        let w = random_weights(12, 4);
        let r = fks_to_relu(&FksModel::new(KnotVector::power(12, 1.8).unwrap(), w).unwrap());
        let grid = QuadratureGrid::fixed_uniform(777).unwrap();
        for (x, y) in grid.points().iter().zip(r.eval_sorted(grid.points())) {
            assert!((r.eval(*x) - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn relu_and_fks_agree(
            n in 2usize..80,
            gaps in proptest::collection::vec(0.2f64..1.0, 80),
            w in proptest::collection::vec(-1.0f64..1.0, 80),
        ) {
            let total: f64 = gaps[..n - 1].iter().sum();
            let mut k = vec![0.0];
            let mut acc = 0.0;
            for g in &gaps[..n - 2] {
                acc += g / total;
                k.push(acc);
            }
            k.push(1.0);
            let m = FksModel::new(KnotVector::new(k).unwrap(), w[..n].to_vec()).unwrap();
            let r = fks_to_relu(&m);
            prop_assert_eq!(r.knots().as_slice(), m.knots().as_slice());
            for j in 0..=1000 {
                let x = j as f64 / 1000.0;
                let err = (relu_eval(&r, x) - m.eval(x)).abs();
                prop_assert!(err < 1e-12, "x={} err={:e}", x, err);
            }
            let back = relu_to_fks(&r).unwrap();
            prop_assert!(max_rel(back.weights(), &w[..n]) < 1e-12);
        }

        #[test]
        fn scalings_are_linear_in_weights(
            a in proptest::collection::vec(-2.0f64..2.0, 20),
            b in proptest::collection::vec(-2.0f64..2.0, 20),
        ) {
            let kv = KnotVector::power(20, 1.5).unwrap();
            let ca = fks_to_relu(&FksModel::new(kv.clone(), a.clone()).unwrap()).scalings().to_vec();
            let cb = fks_to_relu(&FksModel::new(kv.clone(), b.clone()).unwrap()).scalings().to_vec();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let cs = fks_to_relu(&FksModel::new(kv, sum).unwrap()).scalings().to_vec();
            let scale = ca.iter().chain(&cb).fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..cs.len() {
                prop_assert!((cs[i] - ca[i] - cb[i]).abs() < 1e-13 * scale);
            }
        }
    }
}
