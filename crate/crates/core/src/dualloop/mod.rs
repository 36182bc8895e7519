//! Bi-level trainer. Each step splits the regimes into a support and a query
//! group, takes a virtual step on the support loss and descends on the query
//! loss at the adapted parameters. ERM, a first-order rule, an explicit
//! coherence penalty and a finite-difference exact meta-gradient share one
//! interface so they can be compared.

mod model;
mod partition;
mod probe;
mod trainer;

pub use model::{Batch, Gather, LabeledBatch, Mlp, Objective};
pub use partition::{sample_partition, RegimeBatches, RegimePartition, RegimePools, RegimeSet};
pub use probe::{coherence_probe, PairCoherence, ProbeConfig, REGIME_PAIRS};
pub use trainer::{
    coherence, coherence_polar, hvp_fd, inner_adapt, outer_objective, taylor_objective, train, train_observed, train_step,
    update_direction, Coherence, GradientStats, InnerStep, StepRecord, TrainError, TrainFailure, TrainLog,
    TrainMode, TrainerConfig, ZeroGradPolicy,
};
