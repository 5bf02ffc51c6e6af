//! Synthetic polysomnograms for desk-scale experiments.
//!
//! A hypnogram is drawn from a first-order Markov chain over the five AASM
//! stages; each epoch of each channel is then filled with band-limited
//! Gaussian noise following that stage's spectral recipe, plus a white
//! noise floor. The default recipe is loosely physiological but tuned so
//! the classes are learnable.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::mix_seed;
use crate::sigdata::recording::{ChannelKind, Recording, EPOCH_SAMPLES, SAMPLE_RATE_HZ};
use crate::sigdata::stage::{SleepStage, NUM_CLASSES};

/// A band of activity: Gaussian noise restricted to
/// `center_hz ± bandwidth_hz / 2`, scaled to `amplitude` µV RMS.
///
/// With `bursts > 0` the band is only present inside that many Hann-shaped
/// bursts of `burst_seconds` each (spindle-like events).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandComponent {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub bursts: u32,
    #[serde(default = "default_burst_seconds")]
    pub burst_seconds: f64,
}

fn default_burst_seconds() -> f64 {
    1.0
}

impl BandComponent {
    pub fn band(low_hz: f64, high_hz: f64, amplitude: f64) -> Self {
        BandComponent {
            center_hz: (low_hz + high_hz) / 2.0,
            bandwidth_hz: high_hz - low_hz,
            amplitude,
            bursts: 0,
            burst_seconds: default_burst_seconds(),
        }
    }

    pub fn with_bursts(mut self, bursts: u32, seconds: f64) -> Self {
        self.bursts = bursts;
        self.burst_seconds = seconds;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecipe {
    pub components: Vec<BandComponent>,
}

impl StageRecipe {
    fn of(components: Vec<BandComponent>) -> Self {
        StageRecipe { components }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_patients: usize,
    pub epochs_per_patient: usize,
    /// Row-stochastic stage transition matrix, indexed by class index.
    pub transition: [[f64; NUM_CLASSES]; NUM_CLASSES],
    /// Per channel, one recipe per stage in class-index order.
    pub recipes: BTreeMap<ChannelKind, Vec<StageRecipe>>,
    /// White-noise RMS added to every sample, µV.
    pub noise_floor: f64,
    /// Probability that an epoch's label is withheld (stored as excluded).
    #[serde(default)]
    pub excluded_prob: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(num_patients: usize, epochs_per_patient: usize, seed: u64) -> Self {
        SynthSpec {
            num_patients,
            epochs_per_patient,
            transition: DEFAULT_TRANSITION,
            recipes: default_recipes(),
            noise_floor: 0.1,
            excluded_prob: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_patients == 0 {
            return Err(Error::BadSpec("num_patients must be at least 1".into()));
        }
        if self.epochs_per_patient == 0 {
            return Err(Error::BadSpec("epochs_per_patient must be at least 1".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::BadSpec(format!("transition row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::BadSpec(format!("transition row {i} sums to {sum}")));
            }
        }
        if self.recipes.is_empty() {
            return Err(Error::BadSpec("no channels configured".into()));
        }
        let nyquist = SAMPLE_RATE_HZ as f64 / 2.0;
        for (kind, recipes) in &self.recipes {
            if recipes.len() != NUM_CLASSES {
                return Err(Error::BadSpec(format!(
                    "{kind}: {} stage recipes, expected {NUM_CLASSES}",
                    recipes.len()
                )));
            }
            for (stage, recipe) in SleepStage::ALL.iter().zip(recipes) {
                for c in &recipe.components {
                    let (lo, hi) = (c.center_hz - c.bandwidth_hz / 2.0, c.center_hz + c.bandwidth_hz / 2.0);
                    if c.amplitude.is_nan() || c.amplitude <= 0.0 {
                        return Err(Error::BadSpec(format!("{kind}/{stage}: amplitude must be > 0")));
                    }
                    if c.bandwidth_hz.is_nan() || c.bandwidth_hz <= 0.0 || lo < 0.0 || hi > nyquist {
                        return Err(Error::BadSpec(format!(
                            "{kind}/{stage}: band {lo}..{hi} Hz outside 0..{nyquist} Hz"
                        )));
                    }
                    if c.bursts > 0 && !(c.burst_seconds > 0.0 && c.burst_seconds <= 30.0) {
                        return Err(Error::BadSpec(format!("{kind}/{stage}: bad burst length")));
                    }
                }
            }
        }
        if self.noise_floor.is_nan() || self.noise_floor < 0.0 {
            return Err(Error::BadSpec("noise_floor must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.excluded_prob) {
            return Err(Error::BadSpec("excluded_prob must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Sticky stage chain with a roughly 18/13/32/24/14 % stationary mix.
pub const DEFAULT_TRANSITION: [[f64; NUM_CLASSES]; NUM_CLASSES] = [
    [0.86, 0.08, 0.03, 0.01, 0.02],
    [0.06, 0.70, 0.18, 0.01, 0.05],
    [0.02, 0.05, 0.82, 0.08, 0.03],
    [0.02, 0.01, 0.09, 0.88, 0.00],
    [0.04, 0.05, 0.05, 0.00, 0.86],
];

/// Amplitudes sit at a few µV RMS so an untrained network starts with
/// near-uniform outputs.
fn eeg_recipes() -> Vec<StageRecipe> {
    vec![
        // Awake: alpha
        StageRecipe::of(vec![BandComponent::band(8.0, 13.0, 1.0)]),
        // N1: theta
        StageRecipe::of(vec![BandComponent::band(4.0, 8.0, 1.0)]),
        // N2: theta with sigma bursts
        StageRecipe::of(vec![
            BandComponent::band(4.0, 8.0, 1.0),
            BandComponent::band(12.0, 14.0, 2.0).with_bursts(3, 1.5),
        ]),
        // N3: high-amplitude delta
        StageRecipe::of(vec![BandComponent::band(0.5, 4.0, 3.0)]),
        // REM: low-amplitude mixed frequency
        StageRecipe::of(vec![BandComponent::band(4.0, 10.0, 0.5)]),
    ]
}

fn emg_recipes() -> Vec<StageRecipe> {
    // Chin tone falls with sleep depth and vanishes in REM. N2 and N3 share a
    // level on purpose: EMG alone cannot tell them apart.
    let tone = |amp| StageRecipe::of(vec![BandComponent::band(15.0, 55.0, amp)]);
    vec![tone(1.0), tone(0.4), tone(0.2), tone(0.2), tone(0.05)]
}

pub fn default_recipes() -> BTreeMap<ChannelKind, Vec<StageRecipe>> {
    let mut recipes = BTreeMap::new();
    recipes.insert(ChannelKind::EegC3A2, eeg_recipes());
    recipes.insert(ChannelKind::EegC4A1, eeg_recipes());
    recipes.insert(ChannelKind::Emg, emg_recipes());
    recipes
}

/// Stage sequence drawn from the chain; nights start awake.
fn sample_stages(
    transition: &[[f64; NUM_CLASSES]; NUM_CLASSES],
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<SleepStage> {
    let mut stages = Vec::with_capacity(epochs);
    let mut current = SleepStage::Awake;
    for _ in 0..epochs {
        stages.push(current);
        let u: f64 = rng.gen();
        let row = &transition[current.index()];
        let mut acc = 0.0;
        let mut next = NUM_CLASSES - 1;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        current = SleepStage::ALL[next];
    }
    stages
}

struct BandSynth {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl BandSynth {
    fn new() -> Self {
        let mut planner = FftPlanner::new();
        BandSynth {
            forward: planner.plan_fft_forward(EPOCH_SAMPLES),
            inverse: planner.plan_fft_inverse(EPOCH_SAMPLES),
            buf: vec![Complex::default(); EPOCH_SAMPLES],
        }
    }

    /// Unit-RMS Gaussian noise restricted to `[lo, hi]` Hz, added into `out`
    /// after scaling by `gain` (per-sample envelope times amplitude).
    fn add_band(&mut self, lo: f64, hi: f64, rng: &mut ChaCha8Rng, out: &mut [f64], gain: impl Fn(usize) -> f64) {
        let n = EPOCH_SAMPLES;
        for z in self.buf.iter_mut() {
            *z = Complex::new(rng.sample(StandardNormal), 0.0);
        }
        self.forward.process(&mut self.buf);
        let df = SAMPLE_RATE_HZ as f64 / n as f64;
        for (k, z) in self.buf.iter_mut().enumerate() {
            let f = k.min(n - k) as f64 * df;
            if k == 0 || f < lo || f > hi {
                *z = Complex::default();
            }
        }
        self.inverse.process(&mut self.buf);
        let energy: f64 = self.buf.iter().map(|z| z.re * z.re).sum();
        let rms = (energy / n as f64).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 0.0 };
        for (i, (o, z)) in out.iter_mut().zip(&self.buf).enumerate() {
            *o += z.re * scale * gain(i);
        }
    }
}

fn burst_envelope(count: u32, seconds: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = EPOCH_SAMPLES;
    let len = ((seconds * SAMPLE_RATE_HZ as f64).round() as usize).clamp(2, n);
    let mut env = vec![0.0; n];
    for _ in 0..count {
        let start = rng.gen_range(0..=n - len);
        for j in 0..len {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * j as f64 / (len - 1) as f64).cos();
            env[start + j] = f64::max(env[start + j], w);
        }
    }
    env
}

fn synth_epoch(recipe: &StageRecipe, noise_floor: f64, synth: &mut BandSynth, rng: &mut ChaCha8Rng, out: &mut [f32]) {
    let mut acc = vec![0.0f64; EPOCH_SAMPLES];
    for c in &recipe.components {
        let (lo, hi) = (c.center_hz - c.bandwidth_hz / 2.0, c.center_hz + c.bandwidth_hz / 2.0);
        if c.bursts == 0 {
            synth.add_band(lo, hi, rng, &mut acc, |_| c.amplitude);
        } else {
            let env = burst_envelope(c.bursts, c.burst_seconds, rng);
            synth.add_band(lo, hi, rng, &mut acc, |i| c.amplitude * env[i]);
        }
    }
    for (o, a) in out.iter_mut().zip(&acc) {
        let floor: f64 = rng.sample(StandardNormal);
        *o = (a + noise_floor * floor) as f32;
    }
}

/// Generates `spec.num_patients` recordings with ids `synth0000`, `synth0001`, ...
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<Recording>> {
    spec.validate()?;
    let mut synth = BandSynth::new();
    (0..spec.num_patients)
        .map(|p| synth_patient(spec, p, &mut synth))
        .collect()
}

fn synth_patient(spec: &SynthSpec, patient: usize, synth: &mut BandSynth) -> Result<Recording> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &[patient as u64]));
    let stages = sample_stages(&spec.transition, spec.epochs_per_patient, &mut rng);
    let hypnogram = stages
        .iter()
        .map(|&s| {
            let withheld = spec.excluded_prob > 0.0 && rng.gen::<f64>() < spec.excluded_prob;
            (!withheld).then_some(s)
        })
        .collect();
    let mut channels = BTreeMap::new();
    for (&kind, recipes) in &spec.recipes {
        let mut signal = vec![0.0f32; spec.epochs_per_patient * EPOCH_SAMPLES];
        for (stage, out) in stages.iter().zip(signal.chunks_exact_mut(EPOCH_SAMPLES)) {
            synth_epoch(&recipes[stage.index()], spec.noise_floor, synth, &mut rng, out);
        }
        channels.insert(kind, signal);
    }
    Recording::new(format!("synth{patient:04}"), channels, hypnogram)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_contract() {
        let recs = synth_dataset(&SynthSpec::new(2, 20, 1)).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert_eq!(r.epoch_count(), 20);
            assert_eq!(r.samples(), 20 * EPOCH_SAMPLES);
            assert_eq!(r.channels().len(), 3);
        }
        assert_ne!(recs[0].patient_id(), recs[1].patient_id());
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::new(2, 6, 99);
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(&SynthSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_transition_rejected() {
        let mut spec = SynthSpec::new(1, 4, 0);
        spec.transition[2][2] += 0.01;
        assert!(matches!(synth_dataset(&spec), Err(Error::BadSpec(_))));
        let mut spec = SynthSpec::new(1, 4, 0);
        spec.recipes.get_mut(&ChannelKind::Emg).unwrap()[0].components[0].amplitude = 0.0;
        assert!(matches!(synth_dataset(&spec), Err(Error::BadSpec(_))));
        assert!(matches!(
            synth_dataset(&SynthSpec::new(0, 4, 0)),
            Err(Error::BadSpec(_))
        ));
    }

    #[test]
    fn amplitude_is_rms() {
        let mut synth = BandSynth::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let recipe = StageRecipe::of(vec![BandComponent::band(8.0, 13.0, 20.0)]);
        let mut out = vec![0.0f32; EPOCH_SAMPLES];
        synth_epoch(&recipe, 0.0, &mut synth, &mut rng, &mut out);
        let rms = (out.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / EPOCH_SAMPLES as f64).sqrt();
        assert!((rms - 20.0).abs() < 1e-3, "rms {rms}");
    }

    #[test]
    fn excluded_labels_are_sampled() {
        let mut spec = SynthSpec::new(1, 400, 4);
        spec.excluded_prob = 0.1;
        let rec = &synth_dataset(&spec).unwrap()[0];
        let excluded = rec.hypnogram().iter().filter(|l| l.is_none()).count();
        assert!((10..80).contains(&excluded), "{excluded}");
    }

    /// Plain periodogram power in `[lo, hi]` Hz by direct DFT.
    fn band_power(x: &[f32], lo: f64, hi: f64) -> f64 {
        let n = x.len();
        let df = SAMPLE_RATE_HZ as f64 / n as f64;
        let mut power = 0.0;
        let first = (lo / df).ceil() as usize;
        let last = (hi / df).floor() as usize;
        for k in first..=last {
            let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = w * t as f64;
                re += v as f64 * a.cos();
                im -= v as f64 * a.sin();
            }
            power += (re * re + im * im) / n as f64;
        }
        power
    }

    #[test]
    fn deep_sleep_has_more_delta_power_than_wake() {
        let mut spec = SynthSpec::new(30, 60, 12);
        spec.excluded_prob = 0.0;
        let recs = synth_dataset(&spec).unwrap();
        let mut collected: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for rec in &recs {
            let eeg = rec.channel(ChannelKind::EegC3A2).unwrap();
            for (e, label) in rec.hypnogram().iter().enumerate() {
                let slot = match label {
                    Some(SleepStage::Awake) => 0,
                    Some(SleepStage::N3) => 1,
                    _ => continue,
                };
                if collected[slot].len() < 100 {
                    collected[slot].push(band_power(&eeg[e * EPOCH_SAMPLES..(e + 1) * EPOCH_SAMPLES], 0.5, 4.0));
                }
            }
        }
        assert!(
            collected.iter().all(|c| c.len() == 100),
            "{} / {}",
            collected[0].len(),
            collected[1].len()
        );
        let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&collected[1]) > 10.0 * mean(&collected[0]));
    }
}
