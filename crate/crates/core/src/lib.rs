//! Sleep-stage scoring from raw polysomnography windows with a compact
//! depthwise-separable convolutional network.

pub mod arch;
pub mod ensemble;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod nncore;
pub mod seed;
pub mod sigdata;
pub mod train;

pub use arch::{Checkpoint, ModelConfig, ModelParams, SeparableCnn};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use sigdata::{ChannelKind, Example, Recording, SleepStage, SplitSpec};
pub use train::{fit, FitHistory, TrainConfig};
