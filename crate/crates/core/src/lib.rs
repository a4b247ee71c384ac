#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Simulator for federated optimization with local random reshuffling,
//! client sampling and heterogeneous local work.

pub mod aggregation;
pub mod algorithms;
pub mod error;
pub mod harness;
pub mod local;
pub mod problems;
pub mod rng;
pub mod sampling;

pub use algorithms::{run, GenConfig, MomentumMode, Preset, RunLog, StepRule, StepSchedule};
pub use error::{FedError, Result};
pub use problems::{Problem, Vector};
pub use sampling::{NormalizerRule, SamplingScheme};
