use std::collections::BTreeSet;

use somnoscore::arch::{BlockSpec, Checkpoint, ModelConfig, SaveMetrics};
use somnoscore::ensemble::{compare, enumerate_subsets, Member};
use somnoscore::sigdata::{
    manifest_read, manifest_read_subset, manifest_write, parse_signals, split_patients, synth_dataset, SplitRatios,
    SynthSpec, WINDOW_SAMPLES,
};
use somnoscore::train::{fit, TrainConfig};
use somnoscore::ErrorKind;

// One 5 x 3750 window shrinks to 8 x 145 after three blocks.
fn small(channels: usize) -> ModelConfig {
    ModelConfig {
        blocks: vec![
            BlockSpec::new(7, 4, 4),
            BlockSpec::new(5, 6, 8),
            BlockSpec::new(3, 8, 4),
        ],
        ..ModelConfig::reference(channels)
    }
}

#[test]
fn dataset_round_trip_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = SynthSpec::new(3, 7, 12);
    spec.excluded_prob = 0.2;
    let recs = synth_dataset(&spec).unwrap();
    manifest_write(&recs, tmp.path()).unwrap();
    assert_eq!(manifest_read(tmp.path()).unwrap(), recs);
    let subset = manifest_read_subset(tmp.path(), &[recs[2].patient_id().to_string()]).unwrap();
    assert_eq!(subset, vec![recs[2].clone()]);
}

#[test]
fn train_save_load_and_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let recs = synth_dataset(&SynthSpec::new(6, 16, 4)).unwrap();
    let ids: Vec<String> = recs.iter().map(|r| r.patient_id().to_string()).collect();
    let split = split_patients(
        &ids,
        SplitRatios {
            train: 0.5,
            val: 0.2,
            test: 0.3,
        },
        4,
    )
    .unwrap();
    let part = |ids: &[String]| {
        recs.iter()
            .filter(|r| ids.contains(&r.patient_id().to_string()))
            .cloned()
            .collect::<Vec<_>>()
    };
    let (train, val, test) = (part(&split.train), part(&split.val), part(&split.test));
    assert_eq!((train.len(), val.len(), test.len()), (3, 1, 2));

    let tcfg = TrainConfig {
        learning_rate: 1e-3,
        max_iterations: 3,
        batch_size: 8,
        patients_per_batch: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut members = Vec::new();
    for (i, signals) in ["EMG", "C4A1,EMG"].into_iter().enumerate() {
        let kinds = parse_signals(signals).unwrap();
        let config = small(kinds.len());
        assert_eq!(config.input_length(), WINDOW_SAMPLES);
        let mut seen = 0;
        let out = fit(&config, &kinds, &tcfg, &train, &val, |_| seen += 1).unwrap();
        assert_eq!(seen, out.history.records.len());
        let best = out.history.best();
        let ck = Checkpoint::new(
            config,
            kinds,
            tcfg.seed,
            out.params,
            Some(SaveMetrics {
                best_iteration: best.iteration,
                train_loss: best.train_loss,
                val_loss: best.val_loss,
            }),
        )
        .unwrap();
        let path = tmp.path().join(format!("m{i}.ckpt"));
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.params, ck.params);
        members.push(Member::from_checkpoint(format!("m{i}"), loaded).unwrap());
    }

    let subsets = enumerate_subsets(2, &BTreeSet::from([1, 2])).unwrap();
    let rows = compare(&members, &subsets, &test).unwrap();
    assert_eq!(rows.len(), 3);
    let scored: u64 = test.iter().map(|r| r.scored_epochs().count() as u64).sum();
    assert!(rows.iter().all(|r| r.report.total == scored));
    assert!(rows.windows(2).all(|w| w[0].report.f1_macro >= w[1].report.f1_macro));
    let pair = rows.iter().find(|r| r.indices == vec![0, 1]).unwrap();
    assert_eq!(
        pair.params_total,
        members.iter().map(|m| m.model.param_count()).sum::<usize>()
    );
}

#[test]
fn training_rejects_missing_channels() {
    let recs = synth_dataset(&SynthSpec::new(2, 5, 1)).unwrap();
    let emg_only: Vec<_> = recs
        .iter()
        .map(|r| {
            let channels = r
                .channels()
                .iter()
                .filter(|(k, _)| !k.is_eeg())
                .map(|(k, v)| (*k, v.clone()))
                .collect();
            somnoscore::Recording::new(r.patient_id(), channels, r.hypnogram().to_vec()).unwrap()
        })
        .collect();
    let kinds = parse_signals("C4A1,EMG").unwrap();
    let tcfg = TrainConfig {
        patients_per_batch: 1,
        max_iterations: 1,
        ..TrainConfig::default()
    };
    let err = fit(&small(2), &kinds, &tcfg, &emg_only[..1], &emg_only[1..], |_| {}).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("C4A1"), "{err}");
}
