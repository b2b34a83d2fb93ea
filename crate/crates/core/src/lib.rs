//! Online multi-kernel learning with random features.
//!
//! [`Raker`] mixes one random-feature learner per kernel of a dictionary;
//! [`AdaRaker`] runs a geometric cover of [`Raker`] instances for
//! non-stationary streams. [`baselines`] holds the exact functional
//! gradient learners they are compared against.

pub mod adaraker;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod featuremap;
pub mod learner;
pub mod losses;
pub mod raker;
pub mod rng;

pub use adaraker::{active_intervals, AdaRaker, AdaRakerConfig, Interval, IntervalScheme};
pub use baselines::{Omkl, SupportSet};
pub use data::{StreamRecord, SwitchingSchedule, Task};
pub use error::{Error, Result};
pub use featuremap::{FeatureMap, FeatureVector, KernelFamily, KernelSpec, Variant};
pub use learner::{KernelLearner, OnlineLearner, SingleKernel, Stepsize};
pub use losses::{LossKind, LossSpec};
pub use raker::{dictionary_maps, Raker, RakerConfig, SlotReport};
