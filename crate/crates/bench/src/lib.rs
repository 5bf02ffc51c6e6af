//! Fixtures shared by the somnoscore benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somnoscore::arch::{init_params, ModelConfig, ModelParams, SeparableCnn};
use somnoscore::nncore::Tensor2;
use somnoscore::sigdata::{parse_signals, synth_dataset, window_tensor, SynthSpec};

/// Uniform values in `[-1, 1)`.
pub fn random_tensor(channels: usize, length: usize, seed: u64) -> Tensor2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels * length).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor2::from_vec(channels, length, data).expect("shape matches data")
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Reference model for `signals`, freshly initialised, plus one synthetic window.
pub fn reference_fixture(signals: &str) -> (SeparableCnn, ModelParams<f32>, Tensor2<f32>) {
    let kinds = parse_signals(signals).expect("valid signal list");
    let config = ModelConfig::reference(kinds.len());
    let params = init_params(&config, 1).expect("valid config");
    let model = SeparableCnn::new(config).expect("valid config");
    let rec = &synth_dataset(&SynthSpec::new(1, 8, 1)).expect("valid spec")[0];
    let window = window_tensor(rec, 4, &kinds).expect("channels present");
    (model, params, window)
}
