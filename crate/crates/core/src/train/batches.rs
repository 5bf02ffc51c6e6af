use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::mix_seed;
use crate::sigdata::Recording;

const PATIENT_ORDER: u64 = 1;
const EPOCH_ORDER: u64 = 2;

/// A scored epoch of one recording, by position in the training slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExampleRef {
    pub patient: usize,
    pub epoch: usize,
}

/// Batch plan for one pass over `recordings`.
///
/// Patients are shuffled per `(seed, iteration)`. `patients_per_batch`
/// streams are open at once, each yielding one patient's scored epochs
/// in shuffled order; examples are drawn round-robin across the open
/// streams and a finished stream is replaced by the next unopened
/// patient. The sequence is cut into batches of `batch_size`; the last
/// batch may be short.
pub fn make_batches(
    recordings: &[Recording],
    patients_per_batch: usize,
    batch_size: usize,
    seed: u64,
    iteration: u64,
) -> Result<Vec<Vec<ExampleRef>>> {
    if recordings.is_empty() {
        return Err(Error::NoData("training set has no recordings".into()));
    }
    if patients_per_batch == 0 || batch_size == 0 {
        return Err(Error::BadArg("patients per batch and batch size must be >= 1".into()));
    }
    if patients_per_batch > recordings.len() {
        return Err(Error::BadArg(format!(
            "{patients_per_batch} patients per batch but only {} training patients",
            recordings.len()
        )));
    }
    let mut order: Vec<usize> = (0..recordings.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(
        seed,
        &[PATIENT_ORDER, iteration],
    )));

    let stream = |patient: usize| -> std::vec::IntoIter<ExampleRef> {
        let mut epochs: Vec<usize> = recordings[patient].scored_epochs().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[EPOCH_ORDER, iteration, patient as u64]));
        epochs.shuffle(&mut rng);
        epochs
            .into_iter()
            .map(|epoch| ExampleRef { patient, epoch })
            .collect::<Vec<_>>()
            .into_iter()
    };

    let mut pending = order.into_iter();
    let mut open: Vec<std::vec::IntoIter<ExampleRef>> = pending.by_ref().take(patients_per_batch).map(stream).collect();
    let mut sequence = Vec::new();
    let mut slot = 0;
    while !open.is_empty() {
        if slot >= open.len() {
            slot = 0;
        }
        match open[slot].next() {
            Some(ex) => {
                sequence.push(ex);
                slot += 1;
            }
            None => match pending.next() {
                Some(p) => open[slot] = stream(p),
                None => {
                    open.remove(slot);
                }
            },
        }
    }
    if sequence.is_empty() {
        return Err(Error::NoData("training set has no scored epochs".into()));
    }
    Ok(sequence.chunks(batch_size).map(<[ExampleRef]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigdata::{synth_dataset, ChannelKind, SleepStage, SynthSpec, EPOCH_SAMPLES};
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;
    use std::collections::BTreeMap;

    fn data(patients: usize, epochs: usize, excluded: f64) -> Vec<Recording> {
        let mut spec = SynthSpec::new(patients, epochs, 3);
        spec.excluded_prob = excluded;
        synth_dataset(&spec).unwrap()
    }

    #[test]
    fn single_stream_batches_are_single_patient() {
        let recs = data(3, 70, 0.0);
        let batches = make_batches(&recs, 1, 32, 9, 1).unwrap();
        let mut seen = Vec::new();
        for b in &batches {
            let first = b[0].patient;
            if b.iter().all(|e| e.patient == first) {
                continue;
            }
            // a batch may only straddle a patient boundary
            let switch = b.iter().position(|e| e.patient != first).unwrap();
            assert!(b[switch..].iter().all(|e| e.patient == b[switch].patient));
        }
        for b in batches.iter().flatten() {
            if seen.last() != Some(&b.patient) {
                assert!(!seen.contains(&b.patient), "patient reopened");
                seen.push(b.patient);
            }
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn four_streams_give_eight_each() {
        let recs = data(4, 64, 0.0);
        let batches = make_batches(&recs, 4, 32, 1, 5).unwrap();
        assert_eq!(batches.len(), 8);
        for b in &batches {
            let mut per: BTreeMap<usize, usize> = BTreeMap::new();
            for e in b {
                *per.entry(e.patient).or_default() += 1;
            }
            assert_eq!(per.len(), 4);
            assert!(per.values().all(|&n| n == 8));
        }
    }

    #[test]
    fn one_pass_is_a_permutation() {
        let recs = data(5, 37, 0.1);
        let mut expected: Vec<ExampleRef> = recs
            .iter()
            .enumerate()
            .flat_map(|(p, r)| r.scored_epochs().map(move |epoch| ExampleRef { patient: p, epoch }))
            .collect();
        expected.sort();
        for p in 1..=5 {
            for it in 1..3 {
                let batches = make_batches(&recs, p, 32, 77, it).unwrap();
                assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == 32));
                let mut got: Vec<ExampleRef> = batches.into_iter().flatten().collect();
                got.sort();
                assert_eq!(got, expected, "P={p}");
            }
        }
    }

    #[test]
    fn plans_depend_on_seed_and_iteration_only() {
        let recs = data(4, 20, 0.0);
        let a = make_batches(&recs, 2, 8, 1, 1).unwrap();
        assert_eq!(a, make_batches(&recs, 2, 8, 1, 1).unwrap());
        assert_ne!(a, make_batches(&recs, 2, 8, 1, 2).unwrap());
        assert_ne!(a, make_batches(&recs, 2, 8, 2, 1).unwrap());
    }

    #[test]
    fn bad_requests() {
        assert!(matches!(make_batches(&[], 1, 32, 0, 1), Err(Error::NoData(_))));
        let recs = data(2, 5, 0.0);
        assert!(matches!(make_batches(&recs, 3, 32, 0, 1), Err(Error::BadArg(_))));
        assert!(matches!(make_batches(&recs, 0, 32, 0, 1), Err(Error::BadArg(_))));
    }

    fn labelled(hypnograms: &[Vec<Option<SleepStage>>]) -> Vec<Recording> {
        hypnograms
            .iter()
            .enumerate()
            .map(|(i, hyp)| {
                let channels = BTreeMap::from([(ChannelKind::Emg, vec![0.0f32; hyp.len() * EPOCH_SAMPLES])]);
                Recording::new(format!("p{i}"), channels, hyp.clone()).unwrap()
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn every_scored_epoch_once_per_pass(
            hyps in prop::collection::vec(
                prop::collection::vec(prop::option::weighted(0.8, (0usize..5).prop_map(|i| SleepStage::ALL[i])), 1..30),
                1..7,
            ),
            p in 1usize..8,
            batch in 1usize..40,
            seed in any::<u64>(),
            iteration in 1u64..100,
        ) {
            let recs = labelled(&hyps);
            let p = p.min(recs.len());
            let mut expected: Vec<ExampleRef> = recs
                .iter()
                .enumerate()
                .flat_map(|(patient, r)| r.scored_epochs().map(move |epoch| ExampleRef { patient, epoch }))
                .collect();
            match make_batches(&recs, p, batch, seed, iteration) {
                Err(Error::NoData(_)) => prop_assert!(expected.is_empty()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
                Ok(batches) => {
                    prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
                    prop_assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == batch));
                    let mut got: Vec<ExampleRef> = batches.into_iter().flatten().collect();
                    got.sort();
                    expected.sort();
                    prop_assert_eq!(got, expected);
                }
            }
        }
    }
}
