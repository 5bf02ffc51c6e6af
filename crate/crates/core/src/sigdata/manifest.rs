//! On-disk dataset layout.
//!
//! ```text
//! dir/
//!   manifest.json          patient list, sample rate, channel kinds, file names
//!   <patient>_<kind>.f32   raw little-endian f32 samples, one file per channel
//!   <patient>.hyp          one token per line: W, N1, N2, N3, R or X (excluded)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::sigdata::recording::{ChannelKind, Recording, EPOCH_SAMPLES, SAMPLE_RATE_HZ};
use crate::sigdata::stage::{hypnogram_token, parse_hypnogram_token};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub sample_rate: u32,
    pub epoch_samples: usize,
    pub channel_kinds: Vec<ChannelKind>,
    pub patients: Vec<PatientEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientEntry {
    pub id: String,
    pub epochs: usize,
    pub samples: usize,
    pub channels: BTreeMap<ChannelKind, String>,
    pub hypnogram: String,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::BadArg(format!("patient id `{id}` is not usable as a file name")))
    }
}

pub fn manifest_write(recordings: &[Recording], dir: &Path) -> Result<Manifest> {
    let mut kinds: Vec<ChannelKind> = recordings.iter().flat_map(|r| r.channels().keys().copied()).collect();
    kinds.sort();
    kinds.dedup();

    let mut patients = Vec::with_capacity(recordings.len());
    for rec in recordings {
        let id = rec.patient_id();
        check_id(id)?;
        let mut channels = BTreeMap::new();
        for (&kind, signal) in rec.channels() {
            let name = format!("{id}_{kind}.f32");
            let bytes: Vec<u8> = signal.iter().flat_map(|v| v.to_le_bytes()).collect();
            fsutil::write_atomic(&dir.join(&name), &bytes)?;
            channels.insert(kind, name);
        }
        let hyp_name = format!("{id}.hyp");
        let mut text = String::with_capacity(rec.epoch_count() * 3);
        for &label in rec.hypnogram() {
            text.push_str(hypnogram_token(label));
            text.push('\n');
        }
        fsutil::write_atomic(&dir.join(&hyp_name), text.as_bytes())?;
        patients.push(PatientEntry {
            id: id.to_string(),
            epochs: rec.epoch_count(),
            samples: rec.samples(),
            channels,
            hypnogram: hyp_name,
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        sample_rate: SAMPLE_RATE_HZ,
        epoch_samples: EPOCH_SAMPLES,
        channel_kinds: kinds,
        patients,
    };
    fsutil::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = fsutil::read_json(&path)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::format(
            &path,
            "format_version",
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    if manifest.sample_rate != SAMPLE_RATE_HZ {
        return Err(Error::format(
            &path,
            "sample_rate",
            format!("expected {SAMPLE_RATE_HZ}, found {}", manifest.sample_rate),
        ));
    }
    if manifest.epoch_samples != EPOCH_SAMPLES {
        return Err(Error::format(
            &path,
            "epoch_samples",
            format!("expected {EPOCH_SAMPLES}, found {}", manifest.epoch_samples),
        ));
    }
    for (i, p) in manifest.patients.iter().enumerate() {
        check_id(&p.id).map_err(|e| Error::format(&path, format!("patients[{i}].id"), e))?;
        if p.channels.is_empty() {
            return Err(Error::format(
                &path,
                format!("patients[{i}].channels"),
                "no channels listed",
            ));
        }
    }
    Ok(manifest)
}

fn read_signal(path: &Path) -> Result<Vec<f32>> {
    let bytes = fsutil::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            path,
            "samples",
            format!("{} bytes is not a whole number of f32 samples", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn read_hypnogram(path: &Path) -> Result<Vec<Option<crate::sigdata::SleepStage>>> {
    let bytes = fsutil::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::format(path, "encoding", e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_hypnogram_token(l.trim()).map_err(|e| Error::format(path, format!("line {}", i + 1), e)))
        .collect()
}

/// Reads one patient; `entry` comes from a parsed manifest.
pub fn read_patient(dir: &Path, entry: &PatientEntry) -> Result<Recording> {
    let mut channels = BTreeMap::new();
    let mut first: Option<(PathBuf, usize)> = None;
    for (&kind, name) in &entry.channels {
        let path = dir.join(name);
        let signal = read_signal(&path)?;
        match &first {
            None => first = Some((path.clone(), signal.len())),
            Some((p0, n0)) if *n0 != signal.len() => {
                return Err(Error::Integrity {
                    file: path,
                    detail: format!("{} samples but {} has {n0}", signal.len(), p0.display()),
                })
            }
            _ => {}
        }
        if signal.len() != entry.samples {
            return Err(Error::Integrity {
                file: path,
                detail: format!("{} samples, manifest says {}", signal.len(), entry.samples),
            });
        }
        channels.insert(kind, signal);
    }
    let hyp_path = dir.join(&entry.hypnogram);
    let hypnogram = read_hypnogram(&hyp_path)?;
    let epochs = entry.samples / EPOCH_SAMPLES;
    if hypnogram.len() != epochs {
        return Err(Error::Integrity {
            file: hyp_path,
            detail: format!("{} labels but the signals hold {epochs} epochs", hypnogram.len()),
        });
    }
    if entry.epochs != epochs {
        return Err(Error::Integrity {
            file: dir.join(MANIFEST_FILE),
            detail: format!(
                "patient `{}`: epochs {} but signals hold {epochs}",
                entry.id, entry.epochs
            ),
        });
    }
    Recording::new(entry.id.clone(), channels, hypnogram)
}

pub fn manifest_read(dir: &Path) -> Result<Vec<Recording>> {
    let manifest = read_manifest(dir)?;
    manifest.patients.iter().map(|p| read_patient(dir, p)).collect()
}

/// Reads only the listed patients, in the listed order.
pub fn manifest_read_subset(dir: &Path, ids: &[String]) -> Result<Vec<Recording>> {
    let manifest = read_manifest(dir)?;
    ids.iter()
        .map(|id| {
            let entry = manifest
                .patients
                .iter()
                .find(|p| &p.id == id)
                .ok_or_else(|| Error::NoData(format!("patient `{id}` not in {}", dir.display())))?;
            read_patient(dir, entry)
        })
        .collect()
}
