use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{IqRecord, SynthError, FRAMES, WINDOW};
use crate::tensorcore::{Example, FeatureMap, Shape};

/// Dynamic range kept below the peak of the log-magnitude channel.
pub const MAGNITUDE_RANGE_DB: f64 = 60.0;
/// Dynamic range kept below the peak of the PSD channel.
pub const PSD_RANGE_DB: f64 = 40.0;

/// Rectangular-window STFT over the first `frames · window` samples with
/// hop = window. Returns `frames` spectra with bins in FFT order (DC first).
pub fn stft(samples: &[Complex64], window: usize, frames: usize) -> Result<Vec<Vec<Complex64>>, SynthError> {
    if samples.len() < window * frames {
        return Err(SynthError::TooShort { needed: window * frames, got: samples.len() });
    }
    let fft = FftPlanner::new().plan_fft_forward(window);
    Ok(samples
        .chunks_exact(window)
        .take(frames)
        .map(|chunk| {
            let mut buf = chunk.to_vec();
            fft.process(&mut buf);
            buf
        })
        .collect())
}

/// Map a record to a 3 × 128 × 128 time-frequency tensor.
///
/// Rows are frequency bins ordered from −fs/2 to +fs/2, columns are frames.
/// Channel 0 is 20·log10|X| floored [`MAGNITUDE_RANGE_DB`] below its peak,
/// channel 1 is the PSD 10·log10(|X|²/(N·fs)) floored [`PSD_RANGE_DB`] below its
/// peak, channel 2 is the raw phase. Each channel is then min-max scaled to
/// [0, 1]; a constant channel (for example from an all-zero record) maps to zeros.
pub fn stft_tfmap(record: &IqRecord) -> Result<Example, SynthError> {
    let spectra = stft(&record.samples, WINDOW, FRAMES)?;
    let plane = WINDOW * FRAMES;
    let mut mag = vec![0.0f64; plane];
    let mut psd = vec![0.0f64; plane];
    let mut phase = vec![0.0f64; plane];
    let peak = spectra.iter().flatten().fold(0.0f64, |m, x| m.max(x.norm()));
    let mag_floor = peak * 10f64.powf(-MAGNITUDE_RANGE_DB / 20.0);
    let psd_norm = WINDOW as f64 * record.sample_rate;
    let psd_floor = peak * peak / psd_norm * 10f64.powf(-PSD_RANGE_DB / 10.0);
    for (t, spectrum) in spectra.iter().enumerate() {
        for (k, x) in spectrum.iter().enumerate() {
            let row = (k + WINDOW / 2) % WINDOW;
            let idx = row * FRAMES + t;
            if peak > 0.0 {
                mag[idx] = 20.0 * x.norm().max(mag_floor).log10();
                psd[idx] = 10.0 * (x.norm_sqr() / psd_norm).max(psd_floor).log10();
            }
            phase[idx] = (x.arg() + PI) / (2.0 * PI);
        }
    }
    let mut data = Vec::with_capacity(3 * plane);
    for channel in [mag, psd, phase] {
        data.extend(min_max(&channel));
    }
    let input = FeatureMap::new(3, WINDOW, FRAMES, data).expect("3 planes of window × frames");
    Ok(Example { input, label: record.spec.class.label() })
}

fn min_max(v: &[f64]) -> impl Iterator<Item = f32> + '_ {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    v.iter().map(move |&x| if span > 0.0 { ((x - lo) / span) as f32 } else { 0.0 })
}

/// Shape every time-frequency example has.
pub const TF_SHAPE: Shape = Shape::new(3, WINDOW, FRAMES);

/// Check the time-frequency tensor contract: 3 × 128 × 128, values in [0, 1], label 0–5.
pub fn validate_tf_example(ex: &Example) -> Result<(), SynthError> {
    if ex.input.shape() != TF_SHAPE {
        return Err(SynthError::InvalidExample(format!("shape {} is not {}", ex.input.shape(), TF_SHAPE)));
    }
    if ex.label >= 6 {
        return Err(SynthError::InvalidExample(format!("label {}", ex.label)));
    }
    if ex.input.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SynthError::InvalidExample("value outside [0, 1]".into()));
    }
    Ok(())
}
