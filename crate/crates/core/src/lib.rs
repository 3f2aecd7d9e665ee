//! Free knot splines and shallow ReLU networks for approximating scalar
//! functions on [0, 1].
//!
//! The crate covers the full pipeline:
//!
//! * [`targets`] — analytic test functions with derivatives;
//! * [`splines`] — knot vectors, hat bases, interpolation and least squares;
//! * [`relu`] — shallow ReLU networks and the exact spline/network maps;
//! * [`conditioning`] — condition numbers of the mass matrix and the map `T`;
//! * [`losses`] — L2, equidistribution and combined losses with gradients;
//! * [`training`] — Adam and the standard, two-level, combined and
//!   preconditioned training pipelines;
//! * [`meshgen`] — optimal knots from the equidistribution ODE;
//! * [`io`] — CSV persistence of models, meshes and training histories.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod error;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod meshgen;
pub mod ode;
pub mod quadrature;
pub mod relu;
pub mod splines;
pub mod targets;
pub mod training;

pub use error::{Error, Result};
pub use losses::{GradReport, LossConfig, QuadratureGrid};
pub use relu::{RawShallowNet, ReluModel};
pub use splines::{FksModel, KnotVector};
pub use targets::{TargetFunction, TargetRegistry};
pub use training::{AdamConfig, Model, Pipeline, TrainReport, TwoLevelConfig};
