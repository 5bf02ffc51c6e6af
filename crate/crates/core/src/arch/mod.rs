//! The separable-convolution sleep-stage classifier.

mod checkpoint;
mod config;
mod cost;
mod model;

pub use checkpoint::{Checkpoint, CheckpointHeader, SaveMetrics, CHECKPOINT_VERSION};
pub use config::{BlockSpec, ModelConfig, REFERENCE_BLOCKS};
pub use cost::{
    op_counts, param_count, reduction_ratio, shape_propagate, BlockCost, BlockShape, CostReport, OpCounts, ShapeReport,
};
pub use model::{init_params, ModelParams, SeparableCnn};
