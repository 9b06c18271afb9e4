//! Pools of trained classifiers and rank correlation between sharpness and
//! generalization.

mod pipeline;
mod record;
mod tau;
mod train;

pub use pipeline::{load_manifest, run_pool, save_manifest, PoolConfig, PoolOutcome, MANIFEST};
pub use record::{
    correlate_pool, measure_pool, CorrelationReport, PoolRecord, ScatterRow, SharpnessValue,
    SubgroupTau, Target,
};
pub use tau::kendall_tau;
pub use train::{lr_schedule, train_model, TrainConfig, TrainedModel};
