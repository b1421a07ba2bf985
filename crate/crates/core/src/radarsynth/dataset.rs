use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_class_specs, stft_tfmap, synthesize, RadarClass, SynthError, WaveformSpec, DEFAULT_SAMPLE_RATE, FRAMES, WINDOW};
use crate::tensorcore::{io, Example, FeatureMap};

/// Train/validation/test proportions (4080 : 1800 : 2400).
pub const SPLIT_RATIO: [usize; 3] = [4080, 1800, 2400];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// One base spec per class, in label order.
    pub class_specs: Vec<WaveformSpec>,
    pub per_class: usize,
    /// SNRs cycled through within each class.
    pub snr_set: Vec<f64>,
    pub seed: u64,
    pub sample_rate: f64,
    /// Relative jitter applied to pulse width, repetition rate and chirp width.
    pub jitter: f64,
    /// Center frequency offsets are drawn uniformly from ±this value.
    pub max_center_offset_hz: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            class_specs: default_class_specs(20.0),
            per_class: 200,
            snr_set: vec![20.0],
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            jitter: 0.1,
            max_center_offset_hz: 1.5e6,
        }
    }
}

/// One row of a split's `index.csv`: enough to regenerate the example exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub label: usize,
    pub class: RadarClass,
    pub seed: u64,
    pub snr_db: f64,
    pub pulse_width_s: f64,
    pub pulses_per_burst: usize,
    pub chirp_width_hz: f64,
    pub pulse_repetition_rate_hz: f64,
    pub center_freq_offset_hz: f64,
}

impl IndexEntry {
    pub fn spec(&self) -> WaveformSpec {
        WaveformSpec {
            class: self.class,
            pulse_width_s: self.pulse_width_s,
            pulses_per_burst: self.pulses_per_burst,
            chirp_width_hz: self.chirp_width_hz,
            pulse_repetition_rate_hz: self.pulse_repetition_rate_hz,
            center_freq_offset_hz: self.center_freq_offset_hz,
            snr_db: self.snr_db,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub examples: Vec<Example>,
    pub index: Vec<IndexEntry>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for e in &self.examples {
            h[e.label] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

impl Dataset {
    pub fn splits(&self) -> [(&'static str, &Split); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Per-class `[train, val, test]` counts. Split totals follow [`SPLIT_RATIO`];
/// remainders are dealt to classes cyclically so every split stays balanced to ±1.
pub fn split_counts(per_class: usize, classes: usize) -> Vec<[usize; 3]> {
    let total = per_class * classes;
    let denom: usize = SPLIT_RATIO.iter().sum();
    let train = (total * SPLIT_RATIO[0] + denom / 2) / denom;
    let val = ((total * SPLIT_RATIO[1] + denom / 2) / denom).min(total - train);
    let totals = [train, val, total - train - val];
    let mut counts = vec![[0usize; 3]; classes];
    let mut slot = 0;
    for (s, &t) in totals.iter().enumerate() {
        for c in counts.iter_mut() {
            c[s] = t / classes;
        }
        for _ in 0..t % classes {
            counts[slot % classes][s] += 1;
            slot += 1;
        }
    }
    counts
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of example `index` of class `class` under dataset seed `seed`.
pub fn example_seed(seed: u64, class: usize, index: usize) -> u64 {
    mix(seed ^ mix(((class as u64) << 32) | index as u64))
}

fn jittered(base: &WaveformSpec, cfg: &DatasetConfig, snr_db: f64, seed: u64) -> WaveformSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x5EED));
    let mut scale = || if cfg.jitter > 0.0 { 1.0 + rng.random_range(-cfg.jitter..cfg.jitter) } else { 1.0 };
    let mut spec = base.clone();
    spec.snr_db = snr_db;
    if spec.class != RadarClass::Noise {
        spec.pulse_width_s *= scale();
        spec.pulse_repetition_rate_hz *= scale();
        spec.chirp_width_hz *= scale();
        let max = cfg.max_center_offset_hz;
        spec.center_freq_offset_hz = if max > 0.0 { rng.random_range(-max..max) } else { base.center_freq_offset_hz };
    }
    spec
}

/// Regenerate one example from its index row.
pub fn regenerate(entry: &IndexEntry, sample_rate: f64) -> Result<Example, SynthError> {
    let record = synthesize(&entry.spec(), sample_rate, WINDOW * FRAMES, entry.seed)?;
    stft_tfmap(&record)
}

/// Synthesize a class-balanced dataset and split it train/val/test.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset, SynthError> {
    if cfg.per_class == 0 {
        return Err(SynthError::InvalidSpec("per_class must be at least 1".into()));
    }
    if cfg.class_specs.len() != RadarClass::ALL.len() {
        return Err(SynthError::InvalidSpec(format!("expected 6 class specs, got {}", cfg.class_specs.len())));
    }
    for (label, spec) in cfg.class_specs.iter().enumerate() {
        if spec.class.label() != label {
            return Err(SynthError::InvalidSpec(format!("class spec {label} is {}", spec.class.name())));
        }
    }
    if cfg.snr_set.is_empty() {
        return Err(SynthError::InvalidSpec("snr_set is empty".into()));
    }
    let counts = split_counts(cfg.per_class, cfg.class_specs.len());
    let mut assignments: Vec<(usize, usize, usize)> = Vec::new(); // (split, class, index)
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ 0x5917));
    for (class, c) in counts.iter().enumerate() {
        let mut order: Vec<usize> = (0..cfg.per_class).collect();
        order.shuffle(&mut shuffle_rng);
        let mut it = order.into_iter();
        for (split, &n) in c.iter().enumerate() {
            let mut chosen: Vec<usize> = it.by_ref().take(n).collect();
            chosen.sort_unstable();
            assignments.extend(chosen.into_iter().map(|i| (split, class, i)));
        }
    }
    assignments.sort_unstable();

    let generated: Vec<(usize, Example, IndexEntry)> = assignments
        .par_iter()
        .map(|&(split, class, i)| {
            let seed = example_seed(cfg.seed, class, i);
            let snr = cfg.snr_set[i % cfg.snr_set.len()];
            let spec = jittered(&cfg.class_specs[class], cfg, snr, seed);
            let record = synthesize(&spec, cfg.sample_rate, WINDOW * FRAMES, seed)?;
            let example = stft_tfmap(&record)?;
            let entry = IndexEntry {
                file: String::new(),
                label: class,
                class: spec.class,
                seed,
                snr_db: spec.snr_db,
                pulse_width_s: spec.pulse_width_s,
                pulses_per_burst: spec.pulses_per_burst,
                chirp_width_hz: spec.chirp_width_hz,
                pulse_repetition_rate_hz: spec.pulse_repetition_rate_hz,
                center_freq_offset_hz: spec.center_freq_offset_hz,
            };
            Ok((split, example, entry))
        })
        .collect::<Result<_, SynthError>>()?;

    let mut ds = Dataset::default();
    for (split, example, mut entry) in generated {
        let target = match split {
            0 => &mut ds.train,
            1 => &mut ds.val,
            _ => &mut ds.test,
        };
        entry.file = format!("{:05}.fpten", target.len());
        target.examples.push(example);
        target.index.push(entry);
    }
    Ok(ds)
}

/// Write `dir/{train,val,test}/index.csv` plus one tensor file per example.
/// With `pgm`, channel 0 of each example is also written as an 8-bit graymap.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>, pgm: bool) -> Result<(), SynthError> {
    for (name, split) in ds.splits() {
        let sub = dir.as_ref().join(name);
        std::fs::create_dir_all(&sub)?;
        let mut w = csv::Writer::from_path(sub.join("index.csv"))?;
        for (entry, ex) in split.index.iter().zip(&split.examples) {
            w.serialize(entry)?;
            io::save_tensor(&ex.input, sub.join(&entry.file))?;
            if pgm {
                let pgm_dir = sub.join("pgm");
                std::fs::create_dir_all(&pgm_dir)?;
                write_pgm(&ex.input, 0, pgm_dir.join(entry.file.replace(".fpten", ".pgm")))?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_split(dir: impl AsRef<Path>) -> Result<Split, SynthError> {
    let dir = dir.as_ref();
    let mut r = csv::Reader::from_path(dir.join("index.csv"))?;
    let mut split = Split::default();
    for row in r.deserialize() {
        let entry: IndexEntry = row?;
        let input = io::load_tensor(dir.join(&entry.file))?;
        split.examples.push(Example { input, label: entry.label });
        split.index.push(entry);
    }
    Ok(split)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset, SynthError> {
    let dir = dir.as_ref();
    Ok(Dataset { train: read_split(dir.join("train"))?, val: read_split(dir.join("val"))?, test: read_split(dir.join("test"))? })
}

/// Binary (P5) portable graymap of one channel, values in [0, 1] scaled to 0–255.
pub fn write_pgm(map: &FeatureMap, channel: usize, path: impl AsRef<Path>) -> Result<(), SynthError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", map.width(), map.height())?;
    let bytes: Vec<u8> = map.channel(channel).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}
