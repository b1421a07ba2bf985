//! Synthetic stand-ins for the six radar classes and their conversion to
//! 3-channel time-frequency maps.

mod dataset;
mod stft;
mod waveform;

pub use dataset::{
    build_dataset, example_seed, read_dataset, read_split, regenerate, split_counts, write_dataset, write_pgm, Dataset, DatasetConfig,
    IndexEntry, Split, SPLIT_RATIO,
};
pub use stft::{stft, stft_tfmap, validate_tf_example, MAGNITUDE_RANGE_DB, PSD_RANGE_DB, TF_SHAPE};
pub use waveform::{default_class_specs, synthesize, IqRecord, RadarClass, WaveformSpec, DEFAULT_SAMPLE_RATE};

/// STFT length; also the number of frequency rows of a map.
pub const WINDOW: usize = 128;
/// Number of non-overlapping frames, i.e. time columns of a map.
pub const FRAMES: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid waveform spec: {0}")]
    InvalidSpec(String),
    #[error("record too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid time-frequency example: {0}")]
    InvalidExample(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensorcore::TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
