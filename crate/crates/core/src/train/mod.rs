//! Mini-batch Adam training with patient-mixing batches and early
//! stopping on validation loss.

mod adam;
mod batches;
mod stopping;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use batches::{make_batches, ExampleRef};
pub use stopping::EarlyStopping;

use crate::arch::{init_params, ModelConfig, ModelParams, SeparableCnn};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::nncore::Tensor2;
use crate::seed::mix_seed;
use crate::sigdata::{fill_window, ChannelKind, Recording, WINDOW_SAMPLES};

const INIT_STREAM: u64 = 10;
const DROPOUT_STREAM: u64 = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Full passes over the training set.
    pub max_iterations: usize,
    pub batch_size: usize,
    /// Iterations without a validation improvement before stopping.
    pub patience: usize,
    pub patients_per_batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            max_iterations: 100,
            batch_size: 32,
            patience: 10,
            patients_per_batch: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_iterations == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("iterations, batch size and patience must be >= 1".into()));
        }
        if !(1..=8).contains(&self.patients_per_batch) {
            return Err(Error::Config(format!(
                "patients per batch {} outside 1..=8",
                self.patients_per_batch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean training-mode loss over the pass.
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitHistory {
    pub records: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub stop_reason: StopReason,
}

impl FitHistory {
    pub fn best(&self) -> &IterationRecord {
        &self.records[self.best_iteration - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,train_loss,val_loss,seconds\n");
        for r in &self.records {
            writeln!(s, "{},{},{},{:.3}", r.iteration, r.train_loss, r.val_loss, r.seconds).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the iteration with the lowest validation loss.
    pub params: ModelParams<f32>,
    pub history: FitHistory,
}

fn check_inputs(model: &SeparableCnn, kinds: &[ChannelKind], sets: &[&[Recording]]) -> Result<()> {
    let cfg = model.config();
    if kinds.len() != cfg.input_channels {
        return Err(Error::Config(format!(
            "{} signals given for a model with {} input channels",
            kinds.len(),
            cfg.input_channels
        )));
    }
    if cfg.input_length() != WINDOW_SAMPLES {
        return Err(Error::Config(format!(
            "model input length {} differs from the {WINDOW_SAMPLES}-sample window",
            cfg.input_length()
        )));
    }
    for rec in sets.iter().flat_map(|s| s.iter()) {
        rec.require_channels(kinds)?;
    }
    Ok(())
}

fn window(rec: &Recording, epoch: usize, kinds: &[ChannelKind]) -> Result<Tensor2<f32>> {
    let mut data = vec![0.0f32; kinds.len() * WINDOW_SAMPLES];
    fill_window(rec, epoch, kinds, &mut data)?;
    Tensor2::from_vec(kinds.len(), WINDOW_SAMPLES, data)
}

/// Eval-mode mean cross-entropy over every scored epoch of `recordings`.
/// Per-example losses are summed in a fixed order, so the result does not
/// depend on the thread count.
pub fn evaluate_loss(
    model: &SeparableCnn,
    params: &ModelParams<f32>,
    recordings: &[Recording],
    kinds: &[ChannelKind],
) -> Result<f64> {
    check_inputs(model, kinds, &[recordings])?;
    let refs: Vec<(usize, usize, usize)> = recordings
        .iter()
        .enumerate()
        .flat_map(|(p, r)| {
            r.scored_epochs()
                .map(move |e| (p, e, r.hypnogram()[e].unwrap().index()))
        })
        .collect();
    if refs.is_empty() {
        return Err(Error::NoData("no scored epochs to evaluate".into()));
    }
    let losses = refs
        .par_iter()
        .map(|&(p, e, target)| model.loss(params, window(&recordings[p], e, kinds)?, target))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains a freshly initialised model. `on_iteration` sees every record
/// as soon as it is complete.
pub fn fit(
    config: &ModelConfig,
    kinds: &[ChannelKind],
    tcfg: &TrainConfig,
    train: &[Recording],
    val: &[Recording],
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<FitOutcome> {
    tcfg.validate()?;
    let model = SeparableCnn::new(config.clone())?;
    check_inputs(&model, kinds, &[train, val])?;
    let train_ids: BTreeSet<&str> = train.iter().map(Recording::patient_id).collect();
    if let Some(r) = val.iter().find(|r| train_ids.contains(r.patient_id())) {
        return Err(Error::DuplicatePatient(r.patient_id().to_string()));
    }

    let mut params = init_params(config, mix_seed(tcfg.seed, &[INIT_STREAM]))?;
    let mut best = params.clone();
    let mut adam = AdamState::new(params.len());
    let mut stopping = EarlyStopping::new(tcfg.patience);
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    let mut grad_sum = vec![0.0f64; params.len()];

    for iteration in 1..=tcfg.max_iterations {
        let started = Instant::now();
        let it = iteration as u64;
        let batches = make_batches(train, tcfg.patients_per_batch, tcfg.batch_size, tcfg.seed, it)?;
        let mut loss_total = 0.0;
        let mut seen = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let current = &params;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(pos, ex)| {
                    let rec = &train[ex.patient];
                    let target = rec.hypnogram()[ex.epoch].expect("batches hold scored epochs").index();
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix_seed(tcfg.seed, &[DROPOUT_STREAM, it, b as u64, pos as u64]));
                    model.loss_and_grad(current, window(rec, ex.epoch, kinds)?, target, &mut rng)
                })
                .collect::<Result<Vec<(f64, Vec<f32>)>>>()?;
            grad_sum.fill(0.0);
            for (loss, grads) in &results {
                loss_total += loss;
                for (s, &g) in grad_sum.iter_mut().zip(grads) {
                    *s += g as f64;
                }
            }
            seen += results.len();
            let scale = 1.0 / results.len() as f64;
            grad_sum.iter_mut().for_each(|g| *g *= scale);
            adam_step(params.values_mut(), &grad_sum, &mut adam, tcfg.learning_rate).map_err(|e| match e {
                Error::NonFiniteGradient { path } => {
                    let index = path
                        .trim_start_matches("param[")
                        .trim_end_matches(']')
                        .parse()
                        .unwrap_or(0);
                    Error::NonFiniteGradient {
                        path: format!("iteration {iteration} batch {b}: {}", model.param_path(index)),
                    }
                }
                other => other,
            })?;
        }
        let val_loss = evaluate_loss(&model, &params, val, kinds)?;
        let record = IterationRecord {
            iteration,
            train_loss: loss_total / seen as f64,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_iteration(&record);
        records.push(record);
        let stop = stopping.update(iteration, val_loss);
        if stopping.improved_at(iteration) {
            best.clone_from(&params);
        }
        if stop {
            stop_reason = StopReason::Patience;
            break;
        }
    }
    Ok(FitOutcome {
        params: best,
        history: FitHistory {
            records,
            best_iteration: stopping.best_iteration(),
            stop_reason,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigdata::{synth_dataset, SleepStage, SynthSpec};

    #[test]
    fn config_defaults_and_validation() {
        let t = TrainConfig::default();
        assert_eq!(
            (t.learning_rate, t.max_iterations, t.batch_size, t.patience),
            (1e-4, 100, 32, 10)
        );
        t.validate().unwrap();
        for bad in [
            TrainConfig {
                patients_per_batch: 0,
                ..t.clone()
            },
            TrainConfig {
                patients_per_batch: 9,
                ..t.clone()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..t.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..t.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    fn single_channel_data(patients: usize, epochs: usize, seed: u64) -> Vec<Recording> {
        synth_dataset(&SynthSpec::new(patients, epochs, seed)).unwrap()
    }

    #[test]
    fn zero_model_loss_is_ln5() {
        let cfg = ModelConfig::reference(1);
        let model = SeparableCnn::new(cfg).unwrap();
        let zero = ModelParams::from_vec(vec![0.0f32; model.param_count()]);
        let recs = single_channel_data(1, 4, 0);
        let kinds = [ChannelKind::EegC4A1];
        let l = evaluate_loss(&model, &zero, &recs, &kinds).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-6);
        assert!(matches!(
            evaluate_loss(&model, &zero, &[], &kinds),
            Err(Error::NoData(_))
        ));
    }

    #[test]
    fn single_example_loss_is_negative_log_probability() {
        let cfg = ModelConfig::reference(1);
        let model = SeparableCnn::new(cfg.clone()).unwrap();
        let params = init_params(&cfg, 3).unwrap();
        let kinds = [ChannelKind::Emg];
        let rec = single_channel_data(1, 3, 5).remove(0);
        let hyp = vec![None, Some(SleepStage::N2), None];
        let rec = Recording::new(rec.patient_id().to_string(), rec.channels().clone(), hyp).unwrap();
        let l = evaluate_loss(&model, &params, std::slice::from_ref(&rec), &kinds).unwrap();
        let z = model
            .logits(
                &params,
                window(&rec, 1, &kinds).unwrap(),
                crate::nncore::Mode::Eval,
                None,
            )
            .unwrap();
        let z: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        let top = z.iter().cloned().fold(f64::MIN, f64::max);
        let log_p2 = z[2] - top - z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        assert!((l + log_p2).abs() < 1e-9 * l.abs().max(1.0), "{l} {log_p2}");
        assert_eq!(
            l,
            evaluate_loss(&model, &params, std::slice::from_ref(&rec), &kinds).unwrap()
        );
    }

    #[test]
    fn overlapping_patients_are_rejected() {
        let recs = single_channel_data(3, 4, 1);
        let cfg = ModelConfig::reference(1);
        let err = fit(
            &cfg,
            &[ChannelKind::EegC3A2],
            &TrainConfig::default(),
            &recs[..2],
            &recs[1..],
            |_| {},
        );
        assert!(matches!(err, Err(Error::DuplicatePatient(_))));
    }

    /// Awake vs deep sleep only, two patients each way.
    fn two_class_data() -> Vec<Recording> {
        let mut spec = SynthSpec::new(4, 12, 21);
        spec.transition = [[0.0; 5]; 5];
        spec.transition[0][0] = 0.5;
        spec.transition[0][3] = 0.5;
        spec.transition[3][0] = 0.5;
        spec.transition[3][3] = 0.5;
        for row in 1..5 {
            if row != 3 {
                spec.transition[row][0] = 1.0;
            }
        }
        synth_dataset(&spec).unwrap()
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let recs = two_class_data();
        let cfg = ModelConfig::reference(1);
        let kinds = [ChannelKind::EegC4A1];
        let tcfg = TrainConfig {
            learning_rate: 1e-3,
            max_iterations: 4,
            batch_size: 8,
            patience: 10,
            patients_per_batch: 2,
            seed: 5,
        };
        let mut seen = Vec::new();
        let a = fit(&cfg, &kinds, &tcfg, &recs[..3], &recs[3..], |r| seen.push(r.iteration)).unwrap();
        assert_eq!(seen, vec![1, 2, 3, 4]);
        let h = &a.history;
        assert_eq!(h.stop_reason, StopReason::MaxIterations);
        assert!(h.records.last().unwrap().train_loss < h.records[0].train_loss, "{h:?}");
        let best = h.best().val_loss;
        assert!(h.records.iter().all(|r| best <= r.val_loss));
        let model = SeparableCnn::new(cfg.clone()).unwrap();
        assert_eq!(evaluate_loss(&model, &a.params, &recs[3..], &kinds).unwrap(), best);

        let b = fit(&cfg, &kinds, &tcfg, &recs[..3], &recs[3..], |_| {}).unwrap();
        let bits = |p: &ModelParams<f32>| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
        let losses = |h: &FitHistory| h.records.iter().map(|r| (r.train_loss, r.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&a.history), losses(&b.history));
        assert!(a
            .history
            .to_csv()
            .starts_with("iteration,train_loss,val_loss,seconds\n1,"));
    }
}
