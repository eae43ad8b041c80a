//! heatperim: a numerical laboratory for perimeter, total variation, and
//! heat-semigroup functionals on finite metric measure spaces.
//!
//! The crate builds weighted-graph stand-ins for metric measure spaces,
//! equips them with mu-symmetric Markov generators and their heat
//! semigroups, and evaluates the BV-type functionals whose small-scale
//! limits characterize sets of finite perimeter: near-diagonal strip
//! energies, localized and global heat content, heat-regularized total
//! variation, and the curvature inequalities that control them. Limits
//! are estimated from convergence ladders with explicit trusted windows.

#![forbid(unsafe_code)]

pub mod builders;
pub mod bv;
pub mod curvature;
pub mod error;
pub mod functionals;
pub mod generator;
pub mod harness;
pub mod heat;
pub mod ladder;
pub mod smoothing;
pub mod space;

pub use error::{Error, Result};
pub use generator::{build_generator, ConnectivityRule, Generator, KernelShape};
pub use heat::{HeatOperator, Strategy};
pub use ladder::{FunctionalLadder, WindowPolicy};
pub use space::MetricMeasureSpace;
