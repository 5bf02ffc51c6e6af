//! Sleep-stage label sets and the R&K to AASM conversion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Stage labels as scored under the Rechtschaffen & Kales rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageRk {
    Awake,
    S1,
    S2,
    S3,
    S4,
    Rem,
    Unknown,
}

impl StageRk {
    pub const ALL: [StageRk; 7] = [
        StageRk::Awake,
        StageRk::S1,
        StageRk::S2,
        StageRk::S3,
        StageRk::S4,
        StageRk::Rem,
        StageRk::Unknown,
    ];
}

/// The five AASM scoring classes.
///
/// The discriminant is the class index used by the network output and by
/// every confusion matrix: Awake = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SleepStage {
    Awake = 0,
    N1 = 1,
    N2 = 2,
    N3 = 3,
    Rem = 4,
}

pub const NUM_CLASSES: usize = 5;

impl SleepStage {
    pub const ALL: [SleepStage; NUM_CLASSES] = [
        SleepStage::Awake,
        SleepStage::N1,
        SleepStage::N2,
        SleepStage::N3,
        SleepStage::Rem,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<SleepStage> {
        Self::ALL.get(index).copied()
    }

    /// Display name, as used in report headers.
    pub fn name(self) -> &'static str {
        match self {
            SleepStage::Awake => "Awake",
            SleepStage::N1 => "N1",
            SleepStage::N2 => "N2",
            SleepStage::N3 => "N3",
            SleepStage::Rem => "REM",
        }
    }

    /// One-token form used in hypnogram files.
    pub fn token(self) -> &'static str {
        match self {
            SleepStage::Awake => "W",
            SleepStage::N1 => "N1",
            SleepStage::N2 => "N2",
            SleepStage::N3 => "N3",
            SleepStage::Rem => "R",
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Token for an epoch that carries no scoring target.
pub const EXCLUDED_TOKEN: &str = "X";

/// Parses one hypnogram token. `Ok(None)` is an excluded epoch.
pub fn parse_hypnogram_token(token: &str) -> Result<Option<SleepStage>, String> {
    match token {
        "W" => Ok(Some(SleepStage::Awake)),
        "N1" => Ok(Some(SleepStage::N1)),
        "N2" => Ok(Some(SleepStage::N2)),
        "N3" => Ok(Some(SleepStage::N3)),
        "R" => Ok(Some(SleepStage::Rem)),
        EXCLUDED_TOKEN => Ok(None),
        other => Err(format!("unknown stage token `{other}`")),
    }
}

pub fn hypnogram_token(label: Option<SleepStage>) -> &'static str {
    label.map_or(EXCLUDED_TOKEN, SleepStage::token)
}

/// Converts an R&K label to its AASM class. `None` means the epoch is
/// excluded (R&K "Unknown" has no AASM counterpart).
pub fn map_rk_to_aasm(label: StageRk) -> Option<SleepStage> {
    match label {
        StageRk::Awake => Some(SleepStage::Awake),
        StageRk::S1 => Some(SleepStage::N1),
        StageRk::S2 => Some(SleepStage::N2),
        StageRk::S3 | StageRk::S4 => Some(SleepStage::N3),
        StageRk::Rem => Some(SleepStage::Rem),
        StageRk::Unknown => None,
    }
}

impl FromStr for StageRk {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "W" | "Awake" => Ok(StageRk::Awake),
            "S1" => Ok(StageRk::S1),
            "S2" => Ok(StageRk::S2),
            "S3" => Ok(StageRk::S3),
            "S4" => Ok(StageRk::S4),
            "R" | "REM" => Ok(StageRk::Rem),
            "?" | "Unknown" => Ok(StageRk::Unknown),
            other => Err(format!("unknown R&K label `{other}`")),
        }
    }
}
