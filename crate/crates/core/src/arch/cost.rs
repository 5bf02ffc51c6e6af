//! Shape propagation and parameter / operation accounting.

use serde::Serialize;

use super::config::{BlockSpec, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockShape {
    /// `(channels, length)` entering the block.
    pub input: (usize, usize),
    /// After the depthwise + pointwise pair.
    pub conv: (usize, usize),
    /// After max-pooling.
    pub pooled: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShapeReport {
    pub input: (usize, usize),
    pub blocks: Vec<BlockShape>,
    pub flatten_size: usize,
}

/// Per block: length `L → L − K + 1 → floor(· / M)`, channels `→ F`.
pub fn shape_propagate(config: &ModelConfig) -> Result<ShapeReport> {
    config.validate()?;
    let input = (config.input_channels, config.input_length());
    let mut shape = input;
    let mut blocks = Vec::with_capacity(config.blocks.len());
    for (i, b) in config.blocks.iter().enumerate() {
        let (ch, len) = shape;
        if len < b.kernel {
            return Err(Error::Config(format!(
                "block {i} (K={}, F={}, M={}): length {len} shorter than the kernel",
                b.kernel, b.filters, b.pool
            )));
        }
        let conv = (b.filters, len + 1 - b.kernel);
        let pooled = (b.filters, conv.1 / b.pool);
        if pooled.1 == 0 {
            return Err(Error::Config(format!(
                "block {i} (K={}, F={}, M={}): pooling leaves no samples",
                b.kernel, b.filters, b.pool
            )));
        }
        blocks.push(BlockShape {
            input: (ch, len),
            conv,
            pooled,
        });
        shape = pooled;
    }
    Ok(ShapeReport {
        input,
        blocks,
        flatten_size: shape.0 * shape.1,
    })
}

/// Operation counts of one convolution layer, standard vs separable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub standard: u128,
    pub separable: u128,
}

/// `standard = Ch·K·(S−K)·F`, `separable = Ch·K·(S−K) + Ch·(S−K)·F`.
pub fn op_counts(channels: usize, kernel: usize, signal_len: usize, filters: usize) -> Result<OpCounts> {
    if channels == 0 || kernel == 0 || filters == 0 {
        return Err(Error::BadArg("channels, kernel and filters must be >= 1".into()));
    }
    if signal_len <= kernel {
        return Err(Error::BadArg(format!(
            "signal length {signal_len} must exceed kernel {kernel}"
        )));
    }
    let (ch, k, s, f) = (channels as u128, kernel as u128, signal_len as u128, filters as u128);
    Ok(OpCounts {
        standard: ch * k * (s - k) * f,
        separable: ch * k * (s - k) + ch * (s - k) * f,
    })
}

/// Separable-to-standard cost ratio, `1/K + 1/F`.
pub fn reduction_ratio(kernel: usize, filters: usize) -> f64 {
    1.0 / kernel as f64 + 1.0 / filters as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCost {
    pub spec: BlockSpec,
    pub input_channels: usize,
    pub input_length: usize,
    /// `Ch · K` (the depthwise stage has no bias).
    pub depthwise_params: usize,
    /// `Ch · F + F`
    pub pointwise_params: usize,
    pub total_params: usize,
    /// `None` when the block input is no longer than its kernel.
    pub ops: Option<OpCounts>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub blocks: Vec<BlockCost>,
    pub flatten_size: usize,
    /// `flatten · classes + classes`
    pub classifier_params: usize,
    pub total_params: usize,
}

pub fn param_count(config: &ModelConfig) -> Result<CostReport> {
    let shapes = shape_propagate(config)?;
    let blocks: Vec<BlockCost> = config
        .blocks
        .iter()
        .zip(&shapes.blocks)
        .map(|(b, s)| {
            let (ch, len) = s.input;
            let depthwise = ch * b.kernel;
            let pointwise = ch * b.filters + b.filters;
            BlockCost {
                spec: *b,
                input_channels: ch,
                input_length: len,
                depthwise_params: depthwise,
                pointwise_params: pointwise,
                total_params: depthwise + pointwise,
                ops: op_counts(ch, b.kernel, len, b.filters).ok(),
                ratio: reduction_ratio(b.kernel, b.filters),
            }
        })
        .collect();
    let classifier = shapes.flatten_size * config.num_classes + config.num_classes;
    let total = blocks.iter().map(|b| b.total_params).sum::<usize>() + classifier;
    Ok(CostReport {
        blocks,
        flatten_size: shapes.flatten_size,
        classifier_params: classifier,
        total_params: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_shapes() {
        for ch in 1..=3 {
            let report = shape_propagate(&ModelConfig::reference(ch)).unwrap();
            assert_eq!(report.flatten_size, 2_860);
            assert_eq!(report.blocks.last().unwrap().pooled, (20, 143));
        }
        let lengths: Vec<usize> = shape_propagate(&ModelConfig::reference(1))
            .unwrap()
            .blocks
            .iter()
            .map(|b| b.pooled.1)
            .collect();
        assert_eq!(lengths, vec![9372, 4683, 2338, 1167, 581, 289, 143]);
        assert_eq!(ModelConfig::reference(3).input_size(), 56_250);
    }

    #[test]
    fn single_block_arithmetic() {
        let cfg = ModelConfig {
            input_channels: 1,
            sections: 1,
            section_samples: 20,
            blocks: vec![BlockSpec::new(7, 4, 2)],
            dropout_p: 0.5,
            num_classes: 5,
        };
        assert_eq!(shape_propagate(&cfg).unwrap().blocks[0].pooled, (4, 7));
    }

    #[test]
    fn infeasible_block_is_named() {
        let cfg = ModelConfig {
            input_channels: 1,
            sections: 1,
            section_samples: 12,
            blocks: vec![BlockSpec::new(3, 2, 2), BlockSpec::new(7, 2, 2)],
            dropout_p: 0.5,
            num_classes: 5,
        };
        match shape_propagate(&cfg) {
            Err(Error::Config(msg)) => assert!(msg.starts_with("block 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parameter_counting_rule() {
        let cfg = ModelConfig {
            input_channels: 1,
            sections: 1,
            section_samples: 10,
            blocks: vec![BlockSpec::new(3, 2, 1)],
            dropout_p: 0.5,
            num_classes: 5,
        };
        let r = param_count(&cfg).unwrap();
        assert_eq!(r.blocks[0].depthwise_params, 3);
        assert_eq!(r.blocks[0].pointwise_params, 4);
        assert_eq!(r.blocks[0].total_params, 7);
        assert_eq!(r.classifier_params, 16 * 5 + 5);
    }

    #[test]
    fn reference_channel_increments() {
        let totals: Vec<usize> = (1..=3)
            .map(|c| param_count(&ModelConfig::reference(c)).unwrap().total_params)
            .collect();
        assert_eq!(totals[1] - totals[0], 17);
        assert_eq!(totals[2] - totals[1], 17);
        assert_eq!(totals[0], 16_410);
    }

    #[test]
    fn op_count_examples() {
        assert_eq!(
            op_counts(1, 2, 4, 1).unwrap(),
            OpCounts {
                standard: 4,
                separable: 6
            }
        );
        assert!((reduction_ratio(1, 1) - 2.0).abs() < 1e-15);
        assert!((reduction_ratio(22, 20) - 0.095_454_545).abs() < 1e-8);
        assert!(op_counts(1, 4, 4, 1).is_err());
        assert!(op_counts(0, 1, 4, 1).is_err());
    }

    proptest! {
        #[test]
        fn ratio_identity_is_exact(ch in 1usize..64, k in 1usize..64, extra in 1usize..5000, f in 1usize..128) {
            let s = k + extra;
            let c = op_counts(ch, k, s, f).unwrap();
            // separable / standard == 1/K + 1/F  <=>  separable·K·F == standard·(F + K)
            prop_assert_eq!(c.separable * (k as u128) * (f as u128), c.standard * ((f + k) as u128));
        }

        #[test]
        fn extra_channel_adds_k1_plus_f1(
            k1 in 1usize..9, f1 in 1usize..16, ch in 1usize..3,
        ) {
            let mut cfg = ModelConfig::reference(ch);
            cfg.blocks[0] = BlockSpec::new(k1, f1, 2);
            let a = param_count(&cfg).unwrap().total_params;
            cfg.input_channels += 1;
            let b = param_count(&cfg).unwrap().total_params;
            prop_assert_eq!(b - a, k1 + f1);
        }
    }
}
