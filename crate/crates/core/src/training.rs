//! Adam and the training pipelines built on it.
//!
//! Every pipeline works on a flat parameter vector laid out as
//! `[coefficients (N) | interior knots (N - 2)]`. For a spline the
//! coefficients are the nodal weights; for a ReLU network they are
//! `[left_coef, c_0, .., c_{N-2}]`. Interior knot `j` is paired with the
//! coefficient that moves with it when the projector re-sorts the knots.
//!
//! Pipelines:
//! * [`train_standard`] — joint Adam on `L2` over all parameters.
//! * [`train_combined`] — joint Adam on `L2 + beta L_E`.
//! * [`train_two_level`] — knots by Adam on `L_comb` of the interpolant
//!   with a large `beta`, then weights on the frozen mesh.
//! * [`train_relu_preconditioned`] — the two-level route for a ReLU network,
//!   optimising the spline weights in place of the scalings.
//! * [`train_relu_two_level`] — the same knots, but Adam directly on the
//!   scalings; the unpreconditioned comparison.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{grad_interpolant_loss, grad_loss, loss_comb, loss_l2, LossConfig};
use crate::quadrature::{QuadratureGrid, QuadratureMode};
use crate::relu::{fks_to_relu, relu_to_fks, ReluModel};
use crate::splines::{interpolating_fks, least_squares_on_grid, FksModel, KnotVector};
use crate::targets::TargetFunction;

/// Weight of the equidistribution term in combined training.
pub const COMBINED_BETA: f64 = 0.1;
/// Weight of the equidistribution term in the knot stage of two-level training.
pub const TWO_LEVEL_BETA: f64 = 10.0;
/// Largest quadrature grid used by the direct weight solve.
pub const MAX_SOLVE_POINTS: usize = 1 << 22;

/// Adam hyper-parameters and bookkeeping options.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Record loss and parameters every `log_every` iterations.
    pub log_every: usize,
    /// Return the best iterate seen rather than the last one.
    pub keep_best: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 50_000,
            seed: 0,
            log_every: 100,
            keep_best: true,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return bad(format!("beta1 must lie in (0, 1), got {}", self.beta1));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad(format!("beta2 must lie in (0, 1), got {}", self.beta2));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        Ok(())
    }

    pub fn with_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }
}

/// Keeps a block of interior knots ordered inside (0, 1) with a minimum gap.
///
/// The knots sit at `params[knot_offset..knot_offset + count]`; knot `j` is
/// paired with `params[pair_offset + j]` when a pair offset is given, and the
/// pair is permuted together so the represented function is unchanged by a
/// re-sort.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnotProjector {
    pub knot_offset: usize,
    pub count: usize,
    pub pair_offset: Option<usize>,
    pub gap_floor: f64,
}

impl KnotProjector {
    /// Applies the projection; returns whether anything moved.
    pub fn project(&self, params: &mut [f64]) -> bool {
        if self.count == 0 {
            return false;
        }
        let ks = self.knot_offset..self.knot_offset + self.count;
        // A little headroom so that `(a + floor) - a >= floor` survives rounding.
        let floor = self.gap_floor * (1.0 + 1e-6) + 4.0 * f64::EPSILON;
        let mut changed = false;
        if params[ks.clone()].windows(2).any(|w| !(w[0] <= w[1])) {
            let mut order: Vec<usize> = (0..self.count).collect();
            order.sort_by(|&a, &b| params[self.knot_offset + a].total_cmp(&params[self.knot_offset + b]));
            let knots: Vec<f64> = order.iter().map(|&j| params[self.knot_offset + j]).collect();
            params[ks.clone()].copy_from_slice(&knots);
            if let Some(p) = self.pair_offset {
                let paired: Vec<f64> = order.iter().map(|&j| params[p + j]).collect();
                params[p..p + self.count].copy_from_slice(&paired);
            }
            changed = true;
        }
        let k = &mut params[ks];
        let mut prev = 0.0;
        for v in k.iter_mut() {
            if !(*v >= prev + floor) {
                *v = prev + floor;
                changed = true;
            }
            prev = *v;
        }
        let mut next = 1.0;
        for v in k.iter_mut().rev() {
            if !(*v <= next - floor) {
                *v = next - floor;
                changed = true;
            }
            next = *v;
        }
        changed
    }
}

/// Output of [`adam_minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamOutcome {
    /// Returned parameters (best or last iterate, per `keep_best`).
    pub params: Vec<f64>,
    /// `(iteration, loss)` every `log_every` iterations, closed by the loss
    /// of `params` at iteration `max_iters`.
    pub loss_history: Vec<(usize, f64)>,
    /// Parameter snapshots at the same iterations as `loss_history`.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    /// Number of steps after which the projector had to intervene.
    pub projections: usize,
}

/// Minimises `loss_and_grad` with Adam.
///
/// `loss_and_grad(params, iter)` returns the loss and its gradient; the
/// iteration index lets a caller resample a stochastic grid reproducibly.
/// The optional projector runs after every step.
pub fn adam_minimize<F>(
    init: Vec<f64>,
    mut loss_and_grad: F,
    cfg: &AdamConfig,
    projector: Option<&KnotProjector>,
) -> Result<AdamOutcome>
where
    F: FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut p = init;
    if let Some(proj) = projector {
        proj.project(&mut p);
    }
    let n = p.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut best = (f64::INFINITY, p.clone());
    let mut loss_history = Vec::with_capacity(cfg.max_iters / cfg.log_every + 2);
    let mut snapshots = Vec::with_capacity(loss_history.capacity());
    let mut projections = 0;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for iter in 0..cfg.max_iters {
        let (loss, grad) = loss_and_grad(&p, iter)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { iter });
        }
        if grad.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: grad.len(),
            });
        }
        if loss < best.0 {
            best.0 = loss;
            best.1.copy_from_slice(&p);
        }
        if iter % cfg.log_every == 0 {
            loss_history.push((iter, loss));
            snapshots.push((iter, p.clone()));
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = m[i] / (1.0 - b1t);
            let vhat = v[i] / (1.0 - b2t);
            p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
        }
        if let Some(proj) = projector {
            if proj.project(&mut p) {
                projections += 1;
                log::debug!("iteration {iter}: knot projection applied");
            }
        }
    }
    let (final_loss, _) = loss_and_grad(&p, cfg.max_iters)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite { iter: cfg.max_iters });
    }
    let params = if cfg.keep_best && best.0 < final_loss { best.1 } else { p };
    let (loss, _) = loss_and_grad(&params, cfg.max_iters)?;
    loss_history.push((cfg.max_iters, loss));
    snapshots.push((cfg.max_iters, params.clone()));
    if projections > 0 {
        log::info!("knot projector intervened after {projections} of {} steps", cfg.max_iters);
    }
    Ok(AdamOutcome {
        params,
        loss_history,
        snapshots,
        projections,
    })
}

/// A trained model in either representation.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Fks(FksModel),
    Relu(ReluModel),
}

impl Model {
    pub fn knots(&self) -> &KnotVector {
        match self {
            Model::Fks(m) => m.knots(),
            Model::Relu(m) => m.knots(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Model::Fks(m) => m.eval(x),
            Model::Relu(m) => m.eval(x),
        }
    }

    pub fn loss_l2(&self, u: &TargetFunction, grid: &QuadratureGrid) -> f64 {
        match self {
            Model::Fks(m) => loss_l2(m, u, grid),
            Model::Relu(m) => loss_l2(m, u, grid),
        }
    }

    pub fn loss_comb(&self, u: &TargetFunction, cfg: &LossConfig) -> f64 {
        match self {
            Model::Fks(m) => loss_comb(m, u, cfg),
            Model::Relu(m) => loss_comb(m, u, cfg),
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut p = match self {
            Model::Fks(m) => m.weights().to_vec(),
            Model::Relu(m) => std::iter::once(m.left_coef()).chain(m.scalings().iter().copied()).collect(),
        };
        let k = self.knots().as_slice();
        p.extend_from_slice(&k[1..k.len() - 1]);
        p
    }

    fn with_params(&self, p: &[f64]) -> Result<Model> {
        let n = self.knots().len();
        let kv = knots_from_interior(&p[n..], self.knots().gap_floor())?;
        Ok(match self {
            Model::Fks(_) => Model::Fks(FksModel::new(kv, p[..n].to_vec())?),
            Model::Relu(_) => Model::Relu(ReluModel::new(kv, p[1..n].to_vec(), p[0])?),
        })
    }

    fn projector(&self) -> KnotProjector {
        let n = self.knots().len();
        let pair_offset = match self {
            Model::Fks(_) => 1,
            Model::Relu(_) => 2,
        };
        KnotProjector {
            knot_offset: n,
            count: n - 2,
            pair_offset: Some(pair_offset),
            gap_floor: self.knots().gap_floor(),
        }
    }

    fn grad(&self, u: &TargetFunction, cfg: &LossConfig) -> (f64, Vec<f64>) {
        let r = match self {
            Model::Fks(m) => grad_loss(m, u, cfg),
            Model::Relu(m) => grad_loss(m, u, cfg),
        };
        let mut g = r.d_weights;
        g.extend(r.d_knots);
        (r.loss, g)
    }
}

impl From<FksModel> for Model {
    fn from(m: FksModel) -> Self {
        Model::Fks(m)
    }
}

impl From<ReluModel> for Model {
    fn from(m: ReluModel) -> Self {
        Model::Relu(m)
    }
}

fn knots_from_interior(interior: &[f64], gap_floor: f64) -> Result<KnotVector> {
    let mut k = Vec::with_capacity(interior.len() + 2);
    k.push(0.0);
    k.extend_from_slice(interior);
    k.push(1.0);
    KnotVector::with_gap_floor(k, gap_floor)
}

/// Which pipeline produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pipeline {
    Standard,
    TwoLevel,
    Combined,
    Preconditioned,
    ReluTwoLevel,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Standard => "standard",
            Pipeline::TwoLevel => "two_level",
            Pipeline::Combined => "combined",
            Pipeline::Preconditioned => "preconditioned",
            Pipeline::ReluTwoLevel => "relu_two_level",
        })
    }
}

/// Record of a training run.
///
/// Equality ignores `wall_time`, so two runs with the same seed compare
/// equal exactly when everything they computed is bit-identical.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// `(iteration, loss)`; the last entry is the pipeline's loss of `final_model`.
    pub loss_history: Vec<(usize, f64)>,
    /// `(iteration, k_0..k_{N-1})` at the logged iterations.
    pub knot_trajectory: Vec<(usize, Vec<f64>)>,
    pub final_model: Model,
    /// Seconds.
    pub wall_time: f64,
    pub pipeline: Pipeline,
    /// Steps after which the knot projector intervened.
    pub projections: usize,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.loss_history == other.loss_history
            && self.knot_trajectory == other.knot_trajectory
            && self.final_model == other.final_model
            && self.pipeline == other.pipeline
            && self.projections == other.projections
    }
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().map_or(f64::NAN, |&(_, l)| l)
    }

    /// Best loss recorded anywhere in the history.
    pub fn best_loss(&self) -> f64 {
        self.loss_history.iter().map(|&(_, l)| l).fold(f64::INFINITY, f64::min)
    }
}

fn full_knots(interior: &[f64]) -> Vec<f64> {
    let mut k = Vec::with_capacity(interior.len() + 2);
    k.push(0.0);
    k.extend_from_slice(interior);
    k.push(1.0);
    k
}

/// Loss configuration whose grid is resampled every iteration when the
/// configured grid is in resampled mode (seeded from the Adam seed).
struct GridSource {
    current: LossConfig,
    initial: LossConfig,
    rng: Option<ChaCha8Rng>,
    last_iter: Option<usize>,
}

impl GridSource {
    fn new(cfg: &LossConfig, seed: u64) -> Self {
        let rng = match cfg.grid.mode() {
            QuadratureMode::FixedUniform => None,
            QuadratureMode::ResampledUniformRandom => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Self {
            current: cfg.clone(),
            initial: cfg.clone(),
            rng,
            last_iter: None,
        }
    }

    /// Configuration for iteration `iter`; `iter >= max_iters` (the final
    /// evaluation) always sees the initial grid.
    fn at(&mut self, iter: usize, max_iters: usize) -> &LossConfig {
        let Some(rng) = self.rng.as_mut() else {
            return &self.current;
        };
        if iter >= max_iters {
            return &self.initial;
        }
        if self.last_iter.is_some_and(|last| last != iter) {
            self.current.grid.resample(rng);
        }
        self.last_iter = Some(iter);
        &self.current
    }
}

/// Joint Adam on `L_comb` (with `cfg.beta`) over all parameters of `model`.
fn train_joint(
    model: &Model,
    u: &TargetFunction,
    cfg: &LossConfig,
    adam: &AdamConfig,
    pipeline: Pipeline,
) -> Result<TrainReport> {
    let start = Instant::now();
    let n = model.knots().len();
    let proj = model.projector();
    let mut grids = GridSource::new(cfg, adam.seed);
    let out = adam_minimize(
        model.params(),
        |p, iter| {
            let m = model.with_params(p)?;
            Ok(m.grad(u, grids.at(iter, adam.max_iters)))
        },
        adam,
        Some(&proj),
    )?;
    let final_model = model.with_params(&out.params)?;
    let knot_trajectory = out.snapshots.iter().map(|(i, p)| (*i, full_knots(&p[n..]))).collect();
    Ok(TrainReport {
        loss_history: out.loss_history,
        knot_trajectory,
        final_model,
        wall_time: start.elapsed().as_secs_f64(),
        pipeline,
        projections: out.projections,
    })
}

/// Minimises `L2` over all free parameters jointly (the baseline).
pub fn train_standard(model: &Model, u: &TargetFunction, cfg: &LossConfig, adam: &AdamConfig) -> Result<TrainReport> {
    let cfg = cfg.clone().with_beta(0.0);
    train_joint(model, u, &cfg, adam, Pipeline::Standard)
}

/// Joint Adam on `L2 + cfg.beta * L_E` from the interpolant on the model's
/// knots. Use [`COMBINED_BETA`] for the recommended weighting; with
/// `beta = 0` this is exactly [`train_standard`] from that start.
pub fn train_combined(model: &FksModel, u: &TargetFunction, cfg: &LossConfig, adam: &AdamConfig) -> Result<TrainReport> {
    let init = Model::Fks(interpolating_fks(model.knots(), u));
    train_joint(&init, u, cfg, adam, Pipeline::Combined)
}

/// How the weights are obtained once the knots are frozen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StageTwo {
    /// Tridiagonal least-squares solve on a grid fine enough for the mesh.
    #[default]
    DirectSolve,
    /// Adam on `L2` over the weights.
    Adam,
}

/// Options of the two-level pipelines.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelConfig {
    /// `beta` of the knot stage.
    pub beta: f64,
    /// Share of the Adam budget spent on the knot stage.
    pub stage1_fraction: f64,
    pub stage_two: StageTwo,
    /// The direct solve uses at least this many grid points per smallest cell.
    pub points_per_min_gap: f64,
}

impl Default for TwoLevelConfig {
    fn default() -> Self {
        Self {
            beta: TWO_LEVEL_BETA,
            stage1_fraction: 0.5,
            stage_two: StageTwo::DirectSolve,
            points_per_min_gap: 8.0,
        }
    }
}

impl TwoLevelConfig {
    fn budgets(&self, adam: &AdamConfig) -> Result<(usize, usize)> {
        if !(self.stage1_fraction > 0.0 && self.stage1_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stage1_fraction must lie in (0, 1), got {}",
                self.stage1_fraction
            )));
        }
        let first = ((adam.max_iters as f64 * self.stage1_fraction).round() as usize).clamp(1, adam.max_iters);
        Ok((first, (adam.max_iters - first).max(1)))
    }
}

/// Knot stage: Adam on `L_comb` of the interpolant over the interior knots.
///
/// Returns the stage's outcome with knot-only snapshots.
pub fn train_knots(
    init: &KnotVector,
    u: &TargetFunction,
    cfg: &LossConfig,
    beta: f64,
    adam: &AdamConfig,
) -> Result<(KnotVector, AdamOutcome)> {
    let n = init.len();
    let floor = init.gap_floor();
    let c = cfg.clone().with_beta(beta);
    let mut grids = GridSource::new(&c, adam.seed);
    let proj = KnotProjector {
        knot_offset: 0,
        count: n - 2,
        pair_offset: None,
        gap_floor: floor,
    };
    let k = init.as_slice();
    let out = adam_minimize(
        k[1..n - 1].to_vec(),
        |p, iter| {
            let kv = knots_from_interior(p, floor)?;
            Ok(grad_interpolant_loss(&kv, u, grids.at(iter, adam.max_iters)))
        },
        adam,
        Some(&proj),
    )?;
    Ok((knots_from_interior(&out.params, floor)?, out))
}

/// Direct weight solve on a uniform grid with at least
/// `points_per_min_gap` points in the smallest cell.
pub fn solve_weights(kv: &KnotVector, u: &TargetFunction, cfg: &LossConfig, opts: &TwoLevelConfig) -> Result<FksModel> {
    let needed = (opts.points_per_min_gap / kv.min_gap()).ceil();
    let s = if needed.is_finite() { (needed as usize).max(cfg.grid.len()) } else { MAX_SOLVE_POINTS };
    let s = s.min(MAX_SOLVE_POINTS);
    let grid = if s == cfg.grid.len() && cfg.grid.mode() == QuadratureMode::FixedUniform {
        cfg.grid.clone()
    } else {
        QuadratureGrid::fixed_uniform(s)?
    };
    least_squares_on_grid(kv, u, &grid)
}

/// Adam on `L2` over the coefficients of `model` with the knots frozen.
fn train_coefficients(
    model: &Model,
    u: &TargetFunction,
    cfg: &LossConfig,
    adam: &AdamConfig,
) -> Result<(Model, AdamOutcome)> {
    let n = model.knots().len();
    let full = model.params();
    let knots = full[n..].to_vec();
    let cfg = cfg.clone().with_beta(0.0);
    let mut grids = GridSource::new(&cfg, adam.seed);
    let assemble = |coefs: &[f64]| -> Result<Model> {
        let mut p = coefs.to_vec();
        p.extend_from_slice(&knots);
        model.with_params(&p)
    };
    let out = adam_minimize(
        full[..n].to_vec(),
        |p, iter| {
            let m = assemble(p)?;
            let (loss, mut g) = m.grad(u, grids.at(iter, adam.max_iters));
            g.truncate(n);
            Ok((loss, g))
        },
        adam,
        None,
    )?;
    Ok((assemble(&out.params)?, out))
}

fn knot_rows(out: &AdamOutcome) -> Vec<(usize, Vec<f64>)> {
    out.snapshots.iter().map(|(i, p)| (*i, full_knots(p))).collect()
}

/// Two-level training of a spline.
///
/// Stage (i) moves the knots of `model` (normally uniform) by Adam on
/// `L_comb` of the interpolant with `opts.beta`; stage (ii) freezes them and
/// finds the weights. The history holds the stage (i) losses followed by the
/// stage (ii) `L2` values, offset by the stage (i) budget; its last entry is
/// `L2` of the final model on `cfg.grid`.
pub fn train_two_level(
    model: &FksModel,
    u: &TargetFunction,
    cfg: &LossConfig,
    adam: &AdamConfig,
    opts: &TwoLevelConfig,
) -> Result<TrainReport> {
    let start = Instant::now();
    let (b1, b2) = opts.budgets(adam)?;
    let (kv, stage1) = train_knots(model.knots(), u, cfg, opts.beta, &adam.clone().with_iters(b1))?;
    let mut loss_history = stage1.loss_history.clone();
    let mut knot_trajectory = knot_rows(&stage1);
    let mut projections = stage1.projections;
    let final_model = match opts.stage_two {
        StageTwo::DirectSolve => solve_weights(&kv, u, cfg, opts)?,
        StageTwo::Adam => {
            let init = Model::Fks(interpolating_fks(&kv, u));
            let (m, out) = train_coefficients(&init, u, cfg, &adam.clone().with_iters(b2))?;
            loss_history.extend(out.loss_history.iter().map(|&(i, l)| (b1 + i, l)));
            projections += out.projections;
            match m {
                Model::Fks(m) => m,
                Model::Relu(_) => unreachable!("spline stage two returns a spline"),
            }
        }
    };
    let last = adam.max_iters.max(b1 + 1);
    replace_last(&mut loss_history, last, loss_l2(&final_model, u, &cfg.grid));
    knot_trajectory.push((last, kv.as_slice().to_vec()));
    Ok(TrainReport {
        loss_history,
        knot_trajectory,
        final_model: Model::Fks(final_model),
        wall_time: start.elapsed().as_secs_f64(),
        pipeline: Pipeline::TwoLevel,
        projections,
    })
}

// Closes a concatenated history with the final model's loss.
fn replace_last(history: &mut Vec<(usize, f64)>, iter: usize, loss: f64) {
    if history.last().is_some_and(|&(i, _)| i == iter) {
        history.pop();
    }
    history.push((iter, loss));
}

/// Preconditioned two-level training of a ReLU network.
///
/// 1. Knots by the equidistribution stage, scalings held fixed.
/// 2. Scalings to spline weights on the new knots (Thomas solve).
/// 3. Weights by stage (ii) of `opts`, starting from the converted weights.
/// 4. Weights back to scalings.
pub fn train_relu_preconditioned(
    model: &ReluModel,
    u: &TargetFunction,
    cfg: &LossConfig,
    adam: &AdamConfig,
    opts: &TwoLevelConfig,
) -> Result<TrainReport> {
    relu_two_level(model, u, cfg, adam, opts, true)
}

/// The unpreconditioned counterpart of [`train_relu_preconditioned`]: the
/// same knot stage, then Adam directly on `[left_coef, c]`.
pub fn train_relu_two_level(
    model: &ReluModel,
    u: &TargetFunction,
    cfg: &LossConfig,
    adam: &AdamConfig,
    opts: &TwoLevelConfig,
) -> Result<TrainReport> {
    relu_two_level(model, u, cfg, adam, opts, false)
}

fn relu_two_level(
    model: &ReluModel,
    u: &TargetFunction,
    cfg: &LossConfig,
    adam: &AdamConfig,
    opts: &TwoLevelConfig,
    precondition: bool,
) -> Result<TrainReport> {
    let start = Instant::now();
    let (b1, b2) = opts.budgets(adam)?;
    let (kv, stage1) = train_knots(model.knots(), u, cfg, opts.beta, &adam.clone().with_iters(b1))?;
    let moved = ReluModel::new(kv.clone(), model.scalings().to_vec(), model.left_coef())?;
    let mut loss_history = stage1.loss_history.clone();
    let mut knot_trajectory = knot_rows(&stage1);
    let mut projections = stage1.projections;
    let stage2_adam = adam.clone().with_iters(b2);
    let (final_model, pipeline) = if precondition {
        let fks = match opts.stage_two {
            StageTwo::DirectSolve => solve_weights(&kv, u, cfg, opts)?,
            StageTwo::Adam => {
                let init = Model::Fks(relu_to_fks(&moved)?);
                let (m, out) = train_coefficients(&init, u, cfg, &stage2_adam)?;
                loss_history.extend(out.loss_history.iter().map(|&(i, l)| (b1 + i, l)));
                projections += out.projections;
                match m {
                    Model::Fks(m) => m,
                    Model::Relu(_) => unreachable!("spline stage two returns a spline"),
                }
            }
        };
        (fks_to_relu(&fks), Pipeline::Preconditioned)
    } else {
        let (m, out) = train_coefficients(&Model::Relu(moved), u, cfg, &stage2_adam)?;
        loss_history.extend(out.loss_history.iter().map(|&(i, l)| (b1 + i, l)));
        projections += out.projections;
        match m {
            Model::Relu(m) => (m, Pipeline::ReluTwoLevel),
            Model::Fks(_) => unreachable!("network stage two returns a network"),
        }
    };
    let last = adam.max_iters.max(b1 + 1);
    replace_last(&mut loss_history, last, loss_l2(&final_model, u, &cfg.grid));
    knot_trajectory.push((last, kv.as_slice().to_vec()));
    Ok(TrainReport {
        loss_history,
        knot_trajectory,
        final_model: Model::Relu(final_model),
        wall_time: start.elapsed().as_secs_f64(),
        pipeline,
        projections,
    })
}
