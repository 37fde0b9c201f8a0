//! Simulator for Byzantine attacks on gradient aggregation in distributed
//! learning.
//!
//! - [`vecmath`]: distances, cosine similarity, coordinate and geometric medians.
//! - [`gar`]: weighted mean, trimmed mean, median, Krum, FABA, cosine-filtered
//!   geometric median, and hierarchical-clustering Krum.
//! - [`attack`]: limited-norm, seesaw and sign-flip adversaries.
//! - [`learner`]: MNIST/synthetic data, a small MLP, SGD and Adam.
//! - [`harness`]: per-round orchestration and experiment grids.
//! - [`cli`]: the `garlab` command and its CSV/JSON outputs.
//! - [`reference`]: brute-force GAR implementations used as oracles.

#![allow(clippy::needless_range_loop)]

pub mod attack;
pub mod cli;
pub mod gar;
pub mod harness;
pub mod learner;
pub mod reference;
pub mod rng;
pub mod vecmath;

pub use attack::{AdversaryView, AttackSpec, SeesawReference};
pub use gar::{AggregationOutcome, GarRule, GarSpec};
pub use harness::{run_experiment, run_grid, DatasetSource, ExperimentConfig, RoundRecord};
pub use vecmath::GradientVector;
