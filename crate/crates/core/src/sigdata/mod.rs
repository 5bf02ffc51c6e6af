//! Recordings, stage labels, epoch windowing, patient splits, synthetic
//! data and the on-disk dataset format.

mod manifest;
mod recording;
mod split;
mod stage;
pub mod synth;

pub use manifest::{
    manifest_read, manifest_read_subset, manifest_write, read_manifest, read_patient, Manifest, PatientEntry,
    MANIFEST_FILE,
};
pub use recording::{
    examples, fill_window, make_example, parse_signals, signals_name, window_tensor, ChannelKind, Example, Recording,
    CONTEXT_EPOCHS, EPOCH_SAMPLES, SAMPLE_RATE_HZ, WINDOW_EPOCHS, WINDOW_SAMPLES,
};
pub use split::{split_patients, split_sizes, SplitPart, SplitRatios, SplitSpec};
pub use stage::{
    hypnogram_token, map_rk_to_aasm, parse_hypnogram_token, SleepStage, StageRk, EXCLUDED_TOKEN, NUM_CLASSES,
};
pub use synth::{synth_dataset, BandComponent, StageRecipe, SynthSpec};
