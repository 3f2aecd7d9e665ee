//! Experiment configuration: command-line flags layered over an optional
//! `key = value` file layered over defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use fks::losses::{LossConfig, QuadratureGrid};
use fks::targets::{builtin, TargetFunction};
use fks::training::{AdamConfig, StageTwo, TwoLevelConfig, COMBINED_BETA, TWO_LEVEL_BETA};

use crate::CliError;

/// Keys accepted in a config file; the same names as the long flags.
pub const KEYS: &[&str] = &[
    "target",
    "pipeline",
    "representation",
    "init",
    "stage-two",
    "n",
    "n-list",
    "beta",
    "eps2",
    "iters",
    "lr",
    "seed",
    "quad-points",
    "log-every",
    "jobs",
    "out",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Fks,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineKind {
    Standard,
    TwoLevel,
    Combined,
    Preconditioned,
    InterpolantUniform,
    InterpolantOptimal,
    LeastSquaresUniform,
}

impl PipelineKind {
    pub fn trains(self) -> bool {
        !matches!(
            self,
            PipelineKind::InterpolantUniform | PipelineKind::InterpolantOptimal | PipelineKind::LeastSquaresUniform
        )
    }
}

/// Starting point of the standard network baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Interpolant on uniform knots.
    Uniform,
    /// Random network, breakpoints anywhere.
    Random,
    /// Random network with breakpoints drawn in [0, 1].
    RandomConstrained,
}

macro_rules! keyword_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim().replace('-', "_").as_str() {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown value '{other}' (expected one of: {})",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($ty::$variant => $name,)+
                })
            }
        }
    };
}

keyword_enum!(Representation { "fks" => Fks, "relu" => Relu });
keyword_enum!(PipelineKind {
    "standard" => Standard,
    "two_level" => TwoLevel,
    "combined" => Combined,
    "preconditioned" => Preconditioned,
    "interpolant_uniform" => InterpolantUniform,
    "interpolant_optimal" => InterpolantOptimal,
    "least_squares_uniform" => LeastSquaresUniform,
});
keyword_enum!(Init { "uniform" => Uniform, "random" => Random, "random_constrained" => RandomConstrained });

/// Stage (ii) method as written on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageTwoArg(pub StageTwo);

impl FromStr for StageTwoArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "direct" => Ok(Self(StageTwo::DirectSolve)),
            "adam" => Ok(Self(StageTwo::Adam)),
            other => Err(format!("unknown value '{other}' (expected one of: direct, adam)")),
        }
    }
}

/// Comma-separated list of knot counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NList(pub Vec<usize>);

impl FromStr for NList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad N '{p}': {e}")))
            .collect::<Result<_, _>>()
            .map(NList)
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Flat `key = value` file using the long flag names as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target id (u1..u5).
    #[arg(long)]
    pub target: Option<String>,
    /// standard, two_level, combined, preconditioned, interpolant_uniform,
    /// interpolant_optimal or least_squares_uniform.
    #[arg(long)]
    pub pipeline: Option<PipelineKind>,
    /// fks or relu.
    #[arg(long)]
    pub representation: Option<Representation>,
    /// Start of the standard network baseline: uniform, random or random_constrained.
    #[arg(long)]
    pub init: Option<Init>,
    /// Weight solve after the knot stage: direct or adam.
    #[arg(long = "stage-two")]
    pub stage_two: Option<StageTwoArg>,
    /// Number of knots.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated knot counts.
    #[arg(long = "n-list")]
    pub n_list: Option<NList>,
    /// Weight of the equidistribution loss (the knot-stage weight for two-level runs).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Regulariser epsilon^2 in the cell densities; defaults to the target's monitor value.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Adam iterations (split between the stages of two-level runs).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of fixed uniform quadrature points.
    #[arg(long = "quad-points")]
    pub quad_points: Option<usize>,
    /// Loss logging interval in iterations.
    #[arg(long = "log-every")]
    pub log_every: Option<usize>,
    /// Worker threads for sweeps; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parsed `key = value` file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("config key '{key}': {e}"))))
            .transpose()
    }
}

/// Fully resolved settings of one invocation.
#[derive(Clone)]
pub struct ExperimentConfig {
    pub target: TargetFunction,
    pub representation: Representation,
    pub pipeline: PipelineKind,
    pub init: Init,
    pub n_list: Vec<usize>,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub two_level: TwoLevelConfig,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

impl fmt::Debug for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExperimentConfig")
            .field("target", &self.target.id())
            .field("representation", &self.representation)
            .field("pipeline", &self.pipeline)
            .field("init", &self.init)
            .field("n_list", &self.n_list)
            .field("adam", &self.adam)
            .field("beta", &self.loss.beta)
            .field("epsilon_sq", &self.loss.epsilon_sq)
            .field("quad_points", &self.loss.grid.len())
            .field("two_level", &self.two_level)
            .field("output_dir", &self.output_dir)
            .field("jobs", &self.jobs)
            .finish()
    }
}

/// Defaults that differ between subcommands.
pub struct Defaults {
    pub n_list: Vec<usize>,
}

impl ExperimentConfig {
    pub fn resolve(args: &CommonArgs, defaults: Defaults) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        macro_rules! pick {
            ($field:ident, $key:literal) => {
                match args.$field.clone() {
                    Some(v) => Some(v),
                    None => file.get($key)?,
                }
            };
        }
        let target_id: String = pick!(target, "target").unwrap_or_else(|| "u3".into());
        let target = builtin(&target_id).map_err(|e| CliError::Config(e.to_string()))?;
        let pipeline = pick!(pipeline, "pipeline").unwrap_or(PipelineKind::TwoLevel);
        let representation = pick!(representation, "representation").unwrap_or(Representation::Fks);
        let init = pick!(init, "init").unwrap_or(Init::Uniform);
        let n_list = match (args.n, &args.n_list) {
            (Some(n), _) => vec![n],
            (None, Some(list)) => list.0.clone(),
            (None, None) => match (file.get::<usize>("n")?, file.get::<NList>("n-list")?) {
                (Some(n), _) => vec![n],
                (None, Some(list)) => list.0,
                (None, None) => defaults.n_list,
            },
        };
        if n_list.is_empty() {
            return Err(CliError::Config("the list of N values is empty".into()));
        }
        if let Some(&bad) = n_list.iter().find(|&&n| n < 2) {
            return Err(CliError::Config(format!("every N must be at least 2, got {bad}")));
        }
        let stage_two = pick!(stage_two, "stage-two").map_or(StageTwo::DirectSolve, |s: StageTwoArg| s.0);
        let beta: Option<f64> = pick!(beta, "beta");
        let eps2 = pick!(eps2, "eps2").unwrap_or_else(|| target.monitor_epsilon());
        let quad_points = pick!(quad_points, "quad-points").unwrap_or(fks::losses::DEFAULT_QUAD_POINTS);
        let grid = QuadratureGrid::fixed_uniform(quad_points).map_err(|e| CliError::Config(e.to_string()))?;
        let loss_beta = match pipeline {
            PipelineKind::Combined => beta.unwrap_or(COMBINED_BETA),
            _ => 0.0,
        };
        let loss = LossConfig::new(loss_beta, eps2, grid).map_err(|e| CliError::Config(e.to_string()))?;
        let two_level = TwoLevelConfig {
            beta: match pipeline {
                PipelineKind::TwoLevel | PipelineKind::Preconditioned => beta.unwrap_or(TWO_LEVEL_BETA),
                _ => TWO_LEVEL_BETA,
            },
            stage_two,
            ..TwoLevelConfig::default()
        };
        if two_level.beta.is_nan() || two_level.beta < 0.0 {
            return Err(CliError::Config(format!("beta must be >= 0, got {}", two_level.beta)));
        }
        let defaults_adam = AdamConfig::default();
        let adam = AdamConfig {
            learning_rate: pick!(lr, "lr").unwrap_or(defaults_adam.learning_rate),
            max_iters: pick!(iters, "iters").unwrap_or(defaults_adam.max_iters),
            seed: pick!(seed, "seed").unwrap_or(defaults_adam.seed),
            log_every: pick!(log_every, "log-every").unwrap_or(defaults_adam.log_every),
            ..defaults_adam
        };
        adam.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let jobs = pick!(jobs, "jobs")
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(CliError::Config("jobs must be positive".into()));
        }
        let output_dir = pick!(out, "out").unwrap_or_else(|| PathBuf::from("out"));
        let cfg = Self {
            target,
            representation,
            pipeline,
            init,
            n_list,
            adam,
            loss,
            two_level,
            output_dir,
            jobs,
        };
        cfg.check_combination()?;
        Ok(cfg)
    }

    fn check_combination(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        match (self.pipeline, self.representation) {
            (PipelineKind::Combined, Representation::Relu) => {
                return bad("the combined pipeline trains splines; use --representation fks".into())
            }
            (PipelineKind::Preconditioned, Representation::Fks) => {
                return bad("the preconditioned pipeline trains networks; use --representation relu".into())
            }
            _ => {}
        }
        if self.init != Init::Uniform
            && !(self.pipeline == PipelineKind::Standard && self.representation == Representation::Relu)
        {
            return bad("random initialisation applies to the standard relu pipeline only".into());
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 3) {
            if self.pipeline.trains() && self.representation == Representation::Relu {
                return bad(format!("network pipelines need N >= 3, got {n}"));
            }
        }
        Ok(())
    }
}
