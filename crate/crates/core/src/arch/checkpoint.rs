//! Checkpoint files: one line of JSON, a newline, then every parameter as
//! a little-endian `f32` in [`ModelParams`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{ModelParams, SeparableCnn};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::sigdata::ChannelKind;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveMetrics {
    pub best_iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub channels: Vec<ChannelKind>,
    pub seed: u64,
    pub param_count: usize,
    pub metrics_at_save: Option<SaveMetrics>,
    /// Inputs were scaled per recording to zero mean, unit variance.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zscore: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f32>,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        channels: Vec<ChannelKind>,
        seed: u64,
        params: ModelParams<f32>,
        metrics_at_save: Option<SaveMetrics>,
    ) -> Result<Self> {
        if channels.len() != config.input_channels {
            return Err(Error::Config(format!(
                "{} channels listed for a model with {} inputs",
                channels.len(),
                config.input_channels
            )));
        }
        let model = SeparableCnn::new(config.clone())?;
        if params.len() != model.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters for a model with {}",
                params.len(),
                model.param_count()
            )));
        }
        Ok(Checkpoint {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                param_count: params.len(),
                config,
                channels,
                seed,
                metrics_at_save,
                zscore: false,
            },
            params,
        })
    }

    pub fn model(&self) -> Result<SeparableCnn> {
        SeparableCnn::new(self.header.config.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header).expect("serializable header");
        out.push(b'\n');
        out.reserve(self.params.len() * 4);
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// `file` is only used to label errors.
    pub fn from_bytes(bytes: &[u8], file: &Path) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(file, "header", "no header line"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::format(file, "header", e))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::format(
                file,
                "format_version",
                format!("unsupported version {}", header.format_version),
            ));
        }
        let model = SeparableCnn::new(header.config.clone()).map_err(|e| Error::format(file, "config", e))?;
        if header.param_count != model.param_count() {
            return Err(Error::format(
                file,
                "param_count",
                format!("{} but the config has {}", header.param_count, model.param_count()),
            ));
        }
        if header.channels.len() != header.config.input_channels {
            return Err(Error::format(
                file,
                "channels",
                "count differs from config.input_channels",
            ));
        }
        let blob = &bytes[nl + 1..];
        if blob.len() != header.param_count * 4 {
            return Err(Error::format(
                file,
                "parameters",
                format!("{} bytes, expected {}", blob.len(), header.param_count * 4),
            ));
        }
        let values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Checkpoint {
            header,
            params: ModelParams::from_vec(values),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fsutil::read(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::init_params;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::reference(2);
        let mut params = init_params(&cfg, 4).unwrap();
        params.values_mut()[0] = f32::MIN_POSITIVE / 2.0;
        params.values_mut()[1] = -0.0;
        Checkpoint::new(
            cfg,
            vec![ChannelKind::EegC4A1, ChannelKind::Emg],
            4,
            params,
            Some(SaveMetrics {
                best_iteration: 3,
                train_loss: 0.5,
                val_loss: 0.625,
            }),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.header, ck.header);
        let a: Vec<u32> = ck.params.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.params.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    }

    #[test]
    fn blob_layout() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - nl - 1, 4 * ck.params.len());
        let first = f32::from_le_bytes(bytes[nl + 1..nl + 5].try_into().unwrap());
        assert_eq!(first.to_bits(), ck.params.values()[0].to_bits());
    }

    #[test]
    fn truncated_blob_is_a_format_error() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 3);
        let err = Checkpoint::from_bytes(&bytes, Path::new("x.ckpt")).unwrap_err();
        assert!(
            matches!(err, Error::Format { ref field, .. } if field == "parameters"),
            "{err}"
        );
        assert!(matches!(
            Checkpoint::from_bytes(b"{}", Path::new("x.ckpt")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn mismatched_params_rejected() {
        let cfg = ModelConfig::reference(1);
        let err = Checkpoint::new(
            cfg,
            vec![ChannelKind::Emg],
            0,
            ModelParams::from_vec(vec![0.0; 3]),
            None,
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
