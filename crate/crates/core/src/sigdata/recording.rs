use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Tensor2;
use crate::sigdata::stage::SleepStage;

/// Sampling rate of every stored signal, in Hz.
pub const SAMPLE_RATE_HZ: u32 = 125;
/// Samples in one 30 s scoring epoch at 125 Hz.
pub const EPOCH_SAMPLES: usize = 3750;
/// Epochs of context on each side of the scored epoch.
pub const CONTEXT_EPOCHS: usize = 2;
/// Epochs per network input window.
pub const WINDOW_EPOCHS: usize = 2 * CONTEXT_EPOCHS + 1;
/// Samples per channel in one network input window.
pub const WINDOW_SAMPLES: usize = WINDOW_EPOCHS * EPOCH_SAMPLES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    /// EEG derivation C3-A2.
    #[serde(rename = "C3A2")]
    EegC3A2,
    /// EEG derivation C4-A1.
    #[serde(rename = "C4A1")]
    EegC4A1,
    /// Chin electromyogram.
    #[serde(rename = "EMG")]
    Emg,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::EegC3A2, ChannelKind::EegC4A1, ChannelKind::Emg];

    pub fn token(self) -> &'static str {
        match self {
            ChannelKind::EegC3A2 => "C3A2",
            ChannelKind::EegC4A1 => "C4A1",
            ChannelKind::Emg => "EMG",
        }
    }

    pub fn is_eeg(self) -> bool {
        !matches!(self, ChannelKind::Emg)
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "C3A2" => Ok(ChannelKind::EegC3A2),
            "C4A1" => Ok(ChannelKind::EegC4A1),
            "EMG" => Ok(ChannelKind::Emg),
            other => Err(Error::BadArg(format!("unknown channel `{other}`"))),
        }
    }
}

/// Parses a signal selection.
///
/// Accepts either a comma-separated channel list (`C4A1,EMG`) or one of the
/// model names `C3A2`, `C4A1`, `EMG`, `EEGs`, `C3A2_EMG`, `C4A1_EMG`,
/// `EEG_EMG`. The result is in canonical order (C3A2, C4A1, EMG).
pub fn parse_signals(spec: &str) -> Result<Vec<ChannelKind>> {
    let mut kinds: Vec<ChannelKind> = match spec.trim() {
        "EEGs" => vec![ChannelKind::EegC3A2, ChannelKind::EegC4A1],
        "C3A2_EMG" => vec![ChannelKind::EegC3A2, ChannelKind::Emg],
        "C4A1_EMG" => vec![ChannelKind::EegC4A1, ChannelKind::Emg],
        "EEG_EMG" => ChannelKind::ALL.to_vec(),
        list => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?,
    };
    if kinds.is_empty() {
        return Err(Error::BadArg("empty signal selection".into()));
    }
    kinds.sort();
    let before = kinds.len();
    kinds.dedup();
    if kinds.len() != before {
        return Err(Error::BadArg(format!("repeated channel in `{spec}`")));
    }
    Ok(kinds)
}

/// Model name for a channel set, inverse of [`parse_signals`].
pub fn signals_name(kinds: &[ChannelKind]) -> String {
    let mut sorted = kinds.to_vec();
    sorted.sort();
    match sorted.as_slice() {
        [ChannelKind::EegC3A2, ChannelKind::EegC4A1] => "EEGs".into(),
        [ChannelKind::EegC3A2, ChannelKind::EegC4A1, ChannelKind::Emg] => "EEG_EMG".into(),
        other => other.iter().map(|k| k.token()).collect::<Vec<_>>().join("_"),
    }
}

/// One patient's night: synchronous channels at 125 Hz plus one label per
/// 30 s epoch (`None` marks an excluded epoch).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    patient_id: String,
    channels: BTreeMap<ChannelKind, Vec<f32>>,
    hypnogram: Vec<Option<SleepStage>>,
}

impl Recording {
    /// Validates the channel/hypnogram invariants. A trailing partial epoch
    /// is allowed and ignored.
    pub fn new(
        patient_id: impl Into<String>,
        channels: BTreeMap<ChannelKind, Vec<f32>>,
        hypnogram: Vec<Option<SleepStage>>,
    ) -> Result<Self> {
        let patient_id = patient_id.into();
        let mut lengths = channels.values().map(Vec::len);
        let samples = lengths
            .next()
            .ok_or_else(|| Error::BadArg(format!("recording `{patient_id}` has no channels")))?;
        if lengths.any(|l| l != samples) {
            return Err(Error::Shape(format!(
                "recording `{patient_id}`: channels differ in length"
            )));
        }
        let epochs = samples / EPOCH_SAMPLES;
        if hypnogram.len() != epochs {
            return Err(Error::Shape(format!(
                "recording `{patient_id}`: {} labels for {epochs} epochs",
                hypnogram.len()
            )));
        }
        Ok(Recording {
            patient_id,
            channels,
            hypnogram,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE_HZ
    }

    pub fn samples(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn epoch_count(&self) -> usize {
        self.hypnogram.len()
    }

    pub fn hypnogram(&self) -> &[Option<SleepStage>] {
        &self.hypnogram
    }

    pub fn channels(&self) -> &BTreeMap<ChannelKind, Vec<f32>> {
        &self.channels
    }

    pub fn channel(&self, kind: ChannelKind) -> Option<&[f32]> {
        self.channels.get(&kind).map(Vec::as_slice)
    }

    pub fn has_channels(&self, kinds: &[ChannelKind]) -> bool {
        kinds.iter().all(|k| self.channels.contains_key(k))
    }

    pub fn require_channels(&self, kinds: &[ChannelKind]) -> Result<()> {
        match kinds.iter().find(|k| !self.channels.contains_key(k)) {
            Some(&kind) => Err(Error::MissingChannel {
                kind,
                context: format!("recording `{}`", self.patient_id),
            }),
            None => Ok(()),
        }
    }

    /// Indices of epochs that carry a scoring target.
    pub fn scored_epochs(&self) -> impl Iterator<Item = usize> + '_ {
        self.hypnogram.iter().enumerate().filter_map(|(i, l)| l.map(|_| i))
    }

    /// Returns a copy with every channel scaled to zero mean, unit variance.
    pub fn z_scored(&self) -> Recording {
        let channels = self
            .channels
            .iter()
            .map(|(&kind, x)| {
                let n = x.len().max(1) as f64;
                let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
                let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                (kind, x.iter().map(|&v| ((v as f64 - mean) / sd) as f32).collect())
            })
            .collect();
        Recording {
            patient_id: self.patient_id.clone(),
            channels,
            hypnogram: self.hypnogram.clone(),
        }
    }
}

/// One training pattern: the five-epoch window centred on `epoch_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub window: Tensor2<f32>,
    pub target: SleepStage,
    pub patient_id: String,
    pub epoch_index: usize,
}

/// Fills `out` (shape `kinds.len() x WINDOW_SAMPLES`) with the context
/// window around `epoch_index`, zero-filling sections past either end.
///
/// Does not look at the label, so it also serves inference on excluded
/// epochs.
pub fn fill_window(rec: &Recording, epoch_index: usize, kinds: &[ChannelKind], out: &mut [f32]) -> Result<()> {
    let epochs = rec.epoch_count();
    if epoch_index >= epochs {
        return Err(Error::BadIndex {
            index: epoch_index,
            len: epochs,
        });
    }
    if out.len() != kinds.len() * WINDOW_SAMPLES {
        return Err(Error::Shape(format!(
            "window buffer holds {} values, need {}",
            out.len(),
            kinds.len() * WINDOW_SAMPLES
        )));
    }
    rec.require_channels(kinds)?;
    for (row, kind) in out.chunks_exact_mut(WINDOW_SAMPLES).zip(kinds) {
        let signal = &rec.channels[kind];
        for (section, dst) in row.chunks_exact_mut(EPOCH_SAMPLES).enumerate() {
            let source = (epoch_index + section).checked_sub(CONTEXT_EPOCHS);
            match source {
                Some(e) if e < epochs => {
                    dst.copy_from_slice(&signal[e * EPOCH_SAMPLES..(e + 1) * EPOCH_SAMPLES]);
                }
                _ => dst.fill(0.0),
            }
        }
    }
    Ok(())
}

pub fn window_tensor(rec: &Recording, epoch_index: usize, kinds: &[ChannelKind]) -> Result<Tensor2<f32>> {
    let mut data = vec![0.0f32; kinds.len() * WINDOW_SAMPLES];
    fill_window(rec, epoch_index, kinds, &mut data)?;
    Tensor2::from_vec(kinds.len(), WINDOW_SAMPLES, data)
}

pub fn make_example(rec: &Recording, epoch_index: usize, kinds: &[ChannelKind]) -> Result<Example> {
    if kinds.is_empty() || kinds.len() > ChannelKind::ALL.len() {
        return Err(Error::BadArg(format!("{} channels requested", kinds.len())));
    }
    let label = *rec.hypnogram.get(epoch_index).ok_or(Error::BadIndex {
        index: epoch_index,
        len: rec.epoch_count(),
    })?;
    rec.require_channels(kinds)?;
    let target = label.ok_or(Error::ExcludedEpoch { epoch: epoch_index })?;
    Ok(Example {
        window: window_tensor(rec, epoch_index, kinds)?,
        target,
        patient_id: rec.patient_id.clone(),
        epoch_index,
    })
}

/// Every example a recording yields, in epoch order.
pub fn examples(rec: &Recording, kinds: &[ChannelKind]) -> Result<Vec<Example>> {
    rec.scored_epochs().map(|e| make_example(rec, e, kinds)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_recording(epochs: usize) -> Recording {
        let n = epochs * EPOCH_SAMPLES;
        let mut channels = BTreeMap::new();
        channels.insert(ChannelKind::EegC3A2, (0..n).map(|i| i as f32).collect());
        channels.insert(ChannelKind::EegC4A1, (0..n).map(|i| -(i as f32)).collect());
        channels.insert(ChannelKind::Emg, (0..n).map(|i| (i % 7) as f32 + 1.0).collect());
        let mut hyp = vec![Some(SleepStage::N2); epochs];
        hyp[3] = None;
        Recording::new("p1", channels, hyp).unwrap()
    }

    #[test]
    fn interior_window_is_raw_signal() {
        let rec = ramp_recording(20);
        let kinds = ChannelKind::ALL;
        let ex = make_example(&rec, 10, &kinds).unwrap();
        assert_eq!(ex.window.len(), 56_250);
        assert_eq!(ex.window.shape(), (3, WINDOW_SAMPLES));
        let start = 8 * EPOCH_SAMPLES;
        for (row, kind) in kinds.iter().enumerate() {
            let signal = rec.channel(*kind).unwrap();
            assert_eq!(ex.window.row(row), &signal[start..start + WINDOW_SAMPLES]);
        }
    }

    #[test]
    fn edges_are_zero_filled() {
        let rec = ramp_recording(20);
        let kinds = [ChannelKind::Emg, ChannelKind::EegC4A1];
        let first = make_example(&rec, 0, &kinds).unwrap();
        for c in 0..2 {
            let row = first.window.row(c);
            assert!(row[..2 * EPOCH_SAMPLES].iter().all(|&v| v == 0.0));
            assert!(row[2 * EPOCH_SAMPLES..].iter().all(|&v| v != 0.0 || c == 1));
        }
        // channel order follows the request
        assert_eq!(first.window.get(0, 2 * EPOCH_SAMPLES), 1.0);

        let last = make_example(&rec, 19, &kinds).unwrap();
        for c in 0..2 {
            assert!(last.window.row(c)[3 * EPOCH_SAMPLES..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn window_errors() {
        let rec = ramp_recording(5);
        let mut channels = rec.channels().clone();
        channels.remove(&ChannelKind::Emg);
        let no_emg = Recording::new("p2", channels, rec.hypnogram().to_vec()).unwrap();
        assert!(matches!(
            make_example(&no_emg, 1, &[ChannelKind::Emg]),
            Err(Error::MissingChannel {
                kind: ChannelKind::Emg,
                ..
            })
        ));
        assert!(matches!(
            make_example(&rec, 3, &[ChannelKind::Emg]),
            Err(Error::ExcludedEpoch { epoch: 3 })
        ));
        assert!(matches!(
            make_example(&rec, 5, &[ChannelKind::Emg]),
            Err(Error::BadIndex { index: 5, len: 5 })
        ));
    }

    #[test]
    fn one_example_per_scored_epoch() {
        let rec = ramp_recording(8);
        let all = examples(&rec, &[ChannelKind::EegC3A2]).unwrap();
        assert_eq!(all.len(), 7);
        assert!(all.iter().all(|e| e.epoch_index != 3));
    }

    #[test]
    fn partial_trailing_epoch_is_ignored() {
        let mut channels = BTreeMap::new();
        channels.insert(ChannelKind::Emg, vec![0.5; 2 * EPOCH_SAMPLES + 100]);
        let rec = Recording::new("p", channels.clone(), vec![Some(SleepStage::Awake); 2]).unwrap();
        assert_eq!(rec.epoch_count(), 2);
        assert!(Recording::new("p", channels, vec![Some(SleepStage::Awake); 3]).is_err());
    }

    #[test]
    fn signal_names() {
        assert_eq!(
            parse_signals("EMG,C4A1").unwrap(),
            vec![ChannelKind::EegC4A1, ChannelKind::Emg]
        );
        assert_eq!(parse_signals("EEG_EMG").unwrap().len(), 3);
        assert_eq!(signals_name(&parse_signals("C4A1_EMG").unwrap()), "C4A1_EMG");
        assert_eq!(signals_name(&parse_signals("C3A2,C4A1").unwrap()), "EEGs");
        assert!(parse_signals("C4A1,C4A1").is_err());
        assert!(parse_signals("EOG").is_err());
    }
}
