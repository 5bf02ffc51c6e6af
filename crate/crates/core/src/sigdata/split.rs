use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Patient-level hold-out split. Serialized as `{seed, train, val, test}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "val" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::BadArg(format!("unknown split part `{other}`"))),
        }
    }
}

impl SplitSpec {
    pub fn part(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    /// Checks that the three lists are pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicatePatient(id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Part sizes for `n` patients: train and val rounded half-up, the
/// remainder goes to test.
pub fn split_sizes(n: usize, ratios: SplitRatios) -> (usize, usize, usize) {
    // 1e-9 absorbs representation error so that e.g. 0.7 * 15 rounds to 11.
    let round = |r: f64| ((r * n as f64 + 0.5 + 1e-9).floor() as usize).min(n);
    let train = round(ratios.train);
    let val = round(ratios.val).min(n - train);
    (train, val, n - train - val)
}

/// Shuffles the patient ids with `seed` and cuts them into train/val/test.
///
/// Ids are sorted before shuffling, so the result depends only on the set
/// of ids and the seed.
pub fn split_patients(ids: &[String], ratios: SplitRatios, seed: u64) -> Result<SplitSpec> {
    if ids.is_empty() {
        return Err(Error::NoData("no patients to split".into()));
    }
    let sum = ratios.train + ratios.val + ratios.test;
    if [ratios.train, ratios.val, ratios.test]
        .iter()
        .any(|r| !(0.0..=1.0).contains(r))
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(Error::BadArg(format!("split ratios {ratios:?} must sum to 1")));
    }
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicatePatient(w[0].clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);

    let (n_train, n_val, _) = split_sizes(sorted.len(), ratios);
    let test = sorted.split_off(n_train + n_val);
    let val = sorted.split_off(n_train);
    Ok(SplitSpec {
        seed,
        train: sorted,
        val,
        test,
    })
}
