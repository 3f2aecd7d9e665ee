//! The `run`, `sweep`, `table1`, `cond` and `mesh` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fks::conditioning::{numeric_report, ConditioningReport, MAX_DENSE_N};
use fks::io::{
    convergence_rows, create, write_conditioning, write_convergence, write_knot_trajectory, write_knots,
    write_loss_history, write_model, ConvergenceRow,
};
use fks::meshgen::optimal_knots_ode;
use fks::relu::{fks_to_relu, RawShallowNet};
use fks::splines::{interpolating_fks, least_squares_on_grid, KnotVector};
use fks::targets::{u3, TargetFunction};
use fks::training::{
    train_combined, train_relu_preconditioned, train_relu_two_level, train_standard, train_two_level, Model,
    TrainReport,
};
use fks::ReluModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Init, PipelineKind, Representation};
use crate::CliError;

/// Result of one (target, pipeline, N) combination.
pub struct Outcome {
    pub n: usize,
    pub loss: f64,
    pub model: Model,
    /// Present for pipelines that train.
    pub report: Option<TrainReport>,
    pub wall_time: f64,
}

fn uniform(n: usize) -> Result<KnotVector, CliError> {
    Ok(KnotVector::uniform(n)?)
}

fn initial_network(cfg: &ExperimentConfig, n: usize) -> Result<ReluModel, CliError> {
    let u = &cfg.target;
    Ok(match cfg.init {
        Init::Uniform => fks_to_relu(&interpolating_fks(&uniform(n)?, u)),
        Init::Random | Init::RandomConstrained => {
            // n - 2 units give about n breakpoints including the end points.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.adam.seed);
            let raw = RawShallowNet::random(n.saturating_sub(2).max(1), cfg.init == Init::RandomConstrained, &mut rng)?;
            ReluModel::from_raw(&raw)?
        }
    })
}

/// Runs the configured pipeline at a single N.
pub fn execute(cfg: &ExperimentConfig, n: usize) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let u = &cfg.target;
    let grid = &cfg.loss.grid;
    let fixed = |model: Model| -> Result<Outcome, CliError> {
        Ok(Outcome {
            n,
            loss: model.loss_l2(u, grid),
            model: to_representation(model, cfg.representation),
            report: None,
            wall_time: start.elapsed().as_secs_f64(),
        })
    };
    let report = match cfg.pipeline {
        PipelineKind::InterpolantUniform => return fixed(Model::Fks(interpolating_fks(&uniform(n)?, u))),
        PipelineKind::InterpolantOptimal => {
            let kv = optimal_knots_ode(u, cfg.loss.epsilon_sq, n)?;
            return fixed(Model::Fks(interpolating_fks(&kv, u)));
        }
        PipelineKind::LeastSquaresUniform => {
            return fixed(Model::Fks(least_squares_on_grid(&uniform(n)?, u, grid)?));
        }
        PipelineKind::Standard => {
            let model = match cfg.representation {
                Representation::Fks => Model::Fks(interpolating_fks(&uniform(n)?, u)),
                Representation::Relu => Model::Relu(initial_network(cfg, n)?),
            };
            train_standard(&model, u, &cfg.loss, &cfg.adam)?
        }
        PipelineKind::Combined => train_combined(&interpolating_fks(&uniform(n)?, u), u, &cfg.loss, &cfg.adam)?,
        PipelineKind::TwoLevel => match cfg.representation {
            Representation::Fks => {
                train_two_level(&interpolating_fks(&uniform(n)?, u), u, &cfg.loss, &cfg.adam, &cfg.two_level)?
            }
            Representation::Relu => {
                train_relu_two_level(&initial_network(cfg, n)?, u, &cfg.loss, &cfg.adam, &cfg.two_level)?
            }
        },
        PipelineKind::Preconditioned => {
            train_relu_preconditioned(&initial_network(cfg, n)?, u, &cfg.loss, &cfg.adam, &cfg.two_level)?
        }
    };
    Ok(Outcome {
        n,
        loss: report.final_model.loss_l2(u, grid),
        model: report.final_model.clone(),
        wall_time: report.wall_time,
        report: Some(report),
    })
}

fn to_representation(model: Model, repr: Representation) -> Model {
    match (model, repr) {
        (Model::Fks(m), Representation::Relu) if m.knots().len() >= 3 => Model::Relu(fks_to_relu(&m)),
        (m, _) => m,
    }
}

fn stem(cfg: &ExperimentConfig, n: usize) -> String {
    format!("{}_{}_{}_N{n}", cfg.target.id(), cfg.pipeline, cfg.representation)
}

fn write_to(path: &Path, f: impl FnOnce(&mut dyn Write) -> fks::Result<()>) -> Result<PathBuf, CliError> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(fks::Error::from)?;
    Ok(path.to_path_buf())
}

/// Writes the model and, for trained runs, the loss and knot histories.
pub fn persist(cfg: &ExperimentConfig, out: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output_dir;
    let base = stem(cfg, out.n);
    let mut written = vec![write_to(&dir.join(format!("{base}_model.csv")), |w| write_model(&out.model, w))?];
    if let Some(r) = &out.report {
        written.push(write_to(&dir.join(format!("{base}_loss.csv")), |w| write_loss_history(r, w))?);
        written.push(write_to(&dir.join(format!("{base}_knots.csv")), |w| write_knot_trajectory(r, w))?);
    }
    Ok(written)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let &[n] = cfg.n_list.as_slice() else {
        return Err(CliError::Config(format!("run takes a single N, got {:?}; use sweep", cfg.n_list)));
    };
    log::debug!("{cfg:?}");
    let out = execute(cfg, n)?;
    for path in persist(cfg, &out)? {
        log::info!("wrote {}", path.display());
    }
    println!(
        "target={} pipeline={} representation={} N={n} loss={:.6e} time={:.2}s",
        cfg.target.id(),
        cfg.pipeline,
        cfg.representation,
        out.loss,
        out.wall_time
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>, CliError> {
    if cfg.n_list.len() < 3 {
        return Err(CliError::Config(format!("sweep needs at least 3 values of N, got {:?}", cfg.n_list)));
    }
    let mut ns = cfg.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    // Results come back in N order whatever order the workers finish in.
    let outcomes: Vec<Result<Outcome, CliError>> = pool(cfg.jobs)?.install(|| ns.par_iter().map(|&n| execute(cfg, n)).collect());
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    for o in &outcomes {
        log::info!("N={} loss={:e} time={:.2}s", o.n, o.loss, o.wall_time);
    }
    let rows = convergence_rows(&outcomes.iter().map(|o| (o.n, o.loss)).collect::<Vec<_>>());
    let path = cfg
        .output_dir
        .join(format!("{}_{}_{}_sweep.csv", cfg.target.id(), cfg.pipeline, cfg.representation));
    write_to(&path, |w| write_convergence(&rows, w))?;
    for r in &rows {
        println!("N={} loss={:.6e}", r.n, r.loss);
    }
    if let Some(slope) = rows.last().and_then(|r| r.slope) {
        println!("fitted slope={slope:.4}");
    }
    Ok(rows)
}

/// Rows of the spline comparison for `x^(2/3)`, with reference values.
pub const TABLE1_ROWS: [(&str, &str, [f64; 3]); 7] = [
    ("a", "interpolant on a uniform mesh", [2.18e-5, 3.99e-6, 7.47e-7]),
    ("b", "best least squares on a uniform mesh", [3.41e-6, 1.64e-6, 5.24e-7]),
    ("c", "interpolant on an optimal mesh", [3.45e-7, 1.90e-8, 1.13e-9]),
    ("d", "spline training from (a)", [8.91e-7, 1.39e-7, 8.08e-8]),
    ("e", "spline training from (c)", [5.42e-8, 3.17e-9, 1.56e-10]),
    ("f", "two-level spline training", [7.48e-8, 3.00e-9, 5.52e-10]),
    ("g", "combined spline training", [1.10e-7, 5.54e-9, 5.95e-10]),
];
pub const TABLE1_NS: [usize; 3] = [16, 32, 64];

fn table1_cell(cfg: &ExperimentConfig, u: &TargetFunction, row: &str, n: usize) -> Result<f64, CliError> {
    let grid = &cfg.loss.grid;
    let optimal = || KnotVector::power(n, 15.0 / 7.0);
    let model = match row {
        "a" => Model::Fks(interpolating_fks(&uniform(n)?, u)),
        "b" => Model::Fks(least_squares_on_grid(&uniform(n)?, u, grid)?),
        "c" => Model::Fks(interpolating_fks(&optimal()?, u)),
        "d" => train_standard(&Model::Fks(interpolating_fks(&uniform(n)?, u)), u, &cfg.loss, &cfg.adam)?.final_model,
        "e" => train_standard(&Model::Fks(interpolating_fks(&optimal()?, u)), u, &cfg.loss, &cfg.adam)?.final_model,
        "f" => train_two_level(&interpolating_fks(&uniform(n)?, u), u, &cfg.loss, &cfg.adam, &cfg.two_level)?.final_model,
        "g" => {
            let loss = cfg.loss.clone().with_beta(fks::training::COMBINED_BETA);
            train_combined(&interpolating_fks(&uniform(n)?, u), u, &loss, &cfg.adam)?.final_model
        }
        other => unreachable!("unknown row {other}"),
    };
    Ok(model.loss_l2(u, grid))
}

/// Reproduces the seven-row comparison for `u3`; returns `(row, N, reference, measured)`.
pub fn cmd_table1(cfg: &ExperimentConfig) -> Result<Vec<(String, usize, f64, f64)>, CliError> {
    let u = u3();
    let mut cfg = cfg.clone();
    cfg.loss.epsilon_sq = u.monitor_epsilon();
    cfg.loss.beta = 0.0;
    let cells: Vec<(usize, usize)> = (0..TABLE1_ROWS.len()).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
    let measured: Vec<Result<f64, CliError>> = pool(cfg.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(r, c)| table1_cell(&cfg, &u, TABLE1_ROWS[r].0, TABLE1_NS[c]))
            .collect()
    });
    let mut rows = Vec::with_capacity(cells.len());
    for (&(r, c), m) in cells.iter().zip(measured) {
        rows.push((TABLE1_ROWS[r].0.to_string(), TABLE1_NS[c], TABLE1_ROWS[r].2[c], m?));
    }
    let path = cfg.output_dir.join("table1.csv");
    write_to(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["row", "approximant", "N", "reference", "measured"])?;
        for (row, n, reference, measured) in &rows {
            let name = TABLE1_ROWS.iter().find(|t| t.0 == row).map_or("", |t| t.1);
            csv.write_record([row.as_str(), name, &n.to_string(), &format!("{reference:e}"), &format!("{measured:e}")])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    for (row, n, reference, measured) in &rows {
        println!("({row}) N={n} reference={reference:.3e} measured={measured:.3e}");
    }
    Ok(rows)
}

/// Conditioning of uniform knots and of the graded `x^(2/3)` mesh per N.
pub fn cmd_cond(cfg: &ExperimentConfig) -> Result<(Vec<ConditioningReport>, Vec<ConditioningReport>), CliError> {
    if let Some(&n) = cfg.n_list.iter().find(|&&n| !(3..=MAX_DENSE_N).contains(&n)) {
        return Err(CliError::Config(format!("cond needs 3 <= N <= {MAX_DENSE_N}, got {n}")));
    }
    let both: Vec<Result<(ConditioningReport, ConditioningReport), CliError>> = pool(cfg.jobs)?.install(|| {
        cfg.n_list
            .par_iter()
            .map(|&n| {
                let uniform = numeric_report(&uniform(n)?)?;
                let graded = numeric_report(&KnotVector::power(n, 15.0 / 7.0)?)?;
                Ok((uniform, graded))
            })
            .collect()
    });
    let (uniform, graded): (Vec<_>, Vec<_>) = both.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
    write_to(&cfg.output_dir.join("cond_uniform.csv"), |w| write_conditioning(&uniform, w))?;
    write_to(&cfg.output_dir.join("cond_graded.csv"), |w| write_conditioning(&graded, w))?;
    for (u, g) in uniform.iter().zip(&graded) {
        println!(
            "N={} kappa_M={:.4} kappa_T={:.4e} kappa_MTinv={:.4e} predicted={:.4e} graded_kappa_MTinv={:.4e}",
            u.n, u.kappa_m, u.kappa_t, u.kappa_mtinv, u.predicted_kappa_mtinv, g.kappa_mtinv
        );
    }
    Ok((uniform, graded))
}

/// Optimal knots from the equidistribution ODE.
pub fn cmd_mesh(cfg: &ExperimentConfig) -> Result<Vec<KnotVector>, CliError> {
    let meshes: Vec<Result<KnotVector, CliError>> = pool(cfg.jobs)?.install(|| {
        cfg.n_list
            .par_iter()
            .map(|&n| Ok(optimal_knots_ode(&cfg.target, cfg.loss.epsilon_sq, n)?))
            .collect()
    });
    let meshes = meshes.into_iter().collect::<Result<Vec<_>, _>>()?;
    for kv in &meshes {
        let path = cfg.output_dir.join(format!("{}_mesh_N{}.csv", cfg.target.id(), kv.len()));
        write_to(&path, |w| write_knots(kv, w))?;
        println!("N={} min_gap={:.4e} path={}", kv.len(), kv.min_gap(), path.display());
    }
    Ok(meshes)
}
