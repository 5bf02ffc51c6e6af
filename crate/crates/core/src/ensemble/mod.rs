//! Stacking ensembles: member softmax outputs are summed and the
//! largest total wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{Checkpoint, ModelParams, SeparableCnn};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::{argmax, ConfusionMatrix, MetricsReport};
use crate::sigdata::{signals_name, window_tensor, ChannelKind, Recording, NUM_CLASSES};

/// A checkpoint on disk and the signals it consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRef {
    pub checkpoint: PathBuf,
    pub channels: Vec<ChannelKind>,
}

/// Contents of `ensemble.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<MemberRef>,
}

impl EnsembleSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let spec: EnsembleSpec = fsutil::read_json(path)?;
        if spec.members.is_empty() {
            return Err(Error::format(path, "members", "an ensemble needs at least one member"));
        }
        Ok(spec)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }
}

/// A loaded, ready-to-run ensemble member.
#[derive(Debug, Clone)]
pub struct Member {
    pub name: String,
    pub channels: Vec<ChannelKind>,
    pub model: SeparableCnn,
    pub params: ModelParams<f32>,
}

impl Member {
    pub fn from_checkpoint(name: impl Into<String>, checkpoint: Checkpoint) -> Result<Self> {
        let model = checkpoint.model()?;
        Ok(Member {
            name: name.into(),
            channels: checkpoint.header.channels.clone(),
            model,
            params: checkpoint.params,
        })
    }

    /// Loads `r.checkpoint`; the listed channels must match the ones the
    /// checkpoint was trained on.
    pub fn load(r: &MemberRef) -> Result<Self> {
        let ck = Checkpoint::load(&r.checkpoint)?;
        if ck.header.channels != r.channels {
            return Err(Error::Config(format!(
                "{} was trained on {} but the ensemble lists {}",
                r.checkpoint.display(),
                signals_name(&ck.header.channels),
                signals_name(&r.channels)
            )));
        }
        let name = r
            .checkpoint
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| r.checkpoint.display().to_string());
        Self::from_checkpoint(name, ck)
    }

    fn require(&self, rec: &Recording) -> Result<()> {
        match self.channels.iter().find(|k| rec.channel(**k).is_none()) {
            Some(&kind) => Err(Error::MissingChannel {
                kind,
                context: format!("member `{}`, recording `{}`", self.name, rec.patient_id()),
            }),
            None => Ok(()),
        }
    }

    pub fn predict(&self, rec: &Recording, epoch: usize) -> Result<Vec<f64>> {
        self.require(rec)?;
        self.model
            .predict_proba(&self.params, window_tensor(rec, epoch, &self.channels)?)
    }

    /// Probabilities for every epoch of `rec`.
    pub fn predict_recording(&self, rec: &Recording) -> Result<Vec<Vec<f64>>> {
        self.require(rec)?;
        self.model.predict_recording(&self.params, rec, &self.channels)
    }
}

fn add_scores(total: &mut [f64], scores: &[f64]) {
    for (t, s) in total.iter_mut().zip(scores) {
        *t += s;
    }
}

/// Summed member probabilities for one epoch and the winning class
/// (ties go to the lowest class index).
pub fn ensemble_predict(members: &[&Member], rec: &Recording, epoch: usize) -> Result<(usize, Vec<f64>)> {
    if members.is_empty() {
        return Err(Error::BadArg("an ensemble needs at least one member".into()));
    }
    let mut total = vec![0.0f64; NUM_CLASSES];
    for m in members {
        add_scores(&mut total, &m.predict(rec, epoch)?);
    }
    Ok((argmax(&total), total))
}

/// Summed probabilities for every epoch of `rec`.
pub fn ensemble_scores(members: &[&Member], rec: &Recording) -> Result<Vec<Vec<f64>>> {
    if members.is_empty() {
        return Err(Error::BadArg("an ensemble needs at least one member".into()));
    }
    let mut total = vec![vec![0.0f64; NUM_CLASSES]; rec.epoch_count()];
    for m in members {
        for (t, s) in total.iter_mut().zip(m.predict_recording(rec)?) {
            add_scores(t, &s);
        }
    }
    Ok(total)
}

/// Confusion matrix of argmax predictions over the scored epochs.
pub fn score_matrix(scores: &[Vec<Vec<f64>>], recordings: &[Recording]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new();
    for (rec, per_epoch) in recordings.iter().zip(scores) {
        for e in rec.scored_epochs() {
            let truth = rec.hypnogram()[e].expect("scored epoch");
            cm.counts[argmax(&per_epoch[e])][truth.index()] += 1;
        }
    }
    cm
}

/// Every subset of `0..n` with a size in `sizes`, smaller sizes first and
/// lexicographic within a size.
pub fn enumerate_subsets(n: usize, sizes: &BTreeSet<usize>) -> Result<Vec<Vec<usize>>> {
    if let Some(&bad) = sizes.iter().find(|&&s| s == 0 || s > n) {
        return Err(Error::BadArg(format!("ensemble size {bad} outside 1..={n}")));
    }
    let mut out = Vec::new();
    for &k in sizes {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

pub fn enumerate_ensembles(models: &[MemberRef], sizes: &BTreeSet<usize>) -> Result<Vec<EnsembleSpec>> {
    Ok(enumerate_subsets(models.len(), sizes)?
        .into_iter()
        .map(|idx| EnsembleSpec {
            members: idx.into_iter().map(|i| models[i].clone()).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    /// Positions in the member pool.
    pub indices: Vec<usize>,
    pub members: Vec<String>,
    pub report: MetricsReport,
    pub params_total: usize,
}

/// Scores each ensemble (given as indices into `pool`) on `test` and
/// ranks by macro-F₁, best first; equal scores keep the input order.
/// Each member is run once per recording however many ensembles use it.
pub fn compare(pool: &[Member], ensembles: &[Vec<usize>], test: &[Recording]) -> Result<Vec<ComparisonRow>> {
    if test.iter().all(|r| r.scored_epochs().next().is_none()) {
        return Err(Error::NoData("test set has no scored epochs".into()));
    }
    let used: BTreeSet<usize> = ensembles.iter().flatten().copied().collect();
    if let Some(&bad) = used.iter().find(|&&i| i >= pool.len()) {
        return Err(Error::BadIndex {
            index: bad,
            len: pool.len(),
        });
    }
    let mut cache: BTreeMap<usize, Vec<Vec<Vec<f64>>>> = BTreeMap::new();
    for &i in &used {
        let per_rec = test
            .iter()
            .map(|r| pool[i].predict_recording(r))
            .collect::<Result<Vec<_>>>()?;
        cache.insert(i, per_rec);
    }
    let mut rows = Vec::with_capacity(ensembles.len());
    for members in ensembles {
        if members.is_empty() {
            return Err(Error::BadArg("an ensemble needs at least one member".into()));
        }
        let totals: Vec<Vec<Vec<f64>>> = test
            .iter()
            .enumerate()
            .map(|(r, rec)| {
                let mut t = vec![vec![0.0f64; NUM_CLASSES]; rec.epoch_count()];
                for m in members {
                    for (acc, s) in t.iter_mut().zip(&cache[m][r]) {
                        add_scores(acc, s);
                    }
                }
                t
            })
            .collect();
        rows.push(ComparisonRow {
            indices: members.clone(),
            members: members.iter().map(|&m| pool[m].name.clone()).collect(),
            report: MetricsReport::from_matrix(&score_matrix(&totals, test))?,
            params_total: members.iter().map(|&m| pool[m].params.len()).sum(),
        });
    }
    rows.sort_by(|a, b| b.report.f1_macro.total_cmp(&a.report.f1_macro));
    Ok(rows)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("members,accuracy,kappa,f1_macro,params_total\n");
    for r in rows {
        let kappa = r.report.kappa.map(|k| k.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{}",
            r.members.join("+"),
            r.report.accuracy,
            kappa,
            r.report.f1_macro,
            r.params_total
        )
        .unwrap();
    }
    s
}
