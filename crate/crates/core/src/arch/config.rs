use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigdata::{EPOCH_SAMPLES, NUM_CLASSES, WINDOW_EPOCHS};

/// One separable-convolution block: depthwise conv (kernel `kernel`),
/// pointwise conv to `filters` channels, ReLU, max-pool of `pool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kernel: usize,
    pub filters: usize,
    pub pool: usize,
}

impl BlockSpec {
    pub const fn new(kernel: usize, filters: usize, pool: usize) -> Self {
        BlockSpec { kernel, filters, pool }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub sections: usize,
    pub section_samples: usize,
    pub blocks: Vec<BlockSpec>,
    pub dropout_p: f64,
    pub num_classes: usize,
}

/// Kernels 7 → 3, filters 10 → 20, every block halving the length:
/// 18,750 samples end at 20 × 143 = 2,860 classifier inputs.
pub const REFERENCE_BLOCKS: [BlockSpec; 7] = [
    BlockSpec::new(7, 10, 2),
    BlockSpec::new(7, 12, 2),
    BlockSpec::new(7, 14, 2),
    BlockSpec::new(5, 16, 2),
    BlockSpec::new(5, 18, 2),
    BlockSpec::new(3, 20, 2),
    BlockSpec::new(3, 20, 2),
];

impl ModelConfig {
    pub fn reference(input_channels: usize) -> Self {
        ModelConfig {
            input_channels,
            sections: WINDOW_EPOCHS,
            section_samples: EPOCH_SAMPLES,
            blocks: REFERENCE_BLOCKS.to_vec(),
            dropout_p: 0.5,
            num_classes: NUM_CLASSES,
        }
    }

    pub fn input_length(&self) -> usize {
        self.sections * self.section_samples
    }

    /// Number of raw values in one input window.
    pub fn input_size(&self) -> usize {
        self.input_channels * self.input_length()
    }

    /// Checks field ranges; shape feasibility is checked by
    /// [`shape_propagate`](super::shape_propagate).
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.input_channels) {
            return Err(Error::Config(format!(
                "input_channels {} outside 1..=3",
                self.input_channels
            )));
        }
        if self.input_length() == 0 {
            return Err(Error::Config("input length is zero".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::Config("at least one block is required".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernel == 0 || b.filters == 0 || b.pool == 0 {
                return Err(Error::Config(format!(
                    "block {i}: K, F and M must all be >= 1 (got {b:?})"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        Ok(())
    }
}
