use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{SynthError, FRAMES, WINDOW};

/// The six target classes, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RadarClass {
    P0N1,
    P0N2,
    Q3N1,
    Q3N2,
    Q3N3,
    Noise,
}

impl RadarClass {
    pub const ALL: [RadarClass; 6] = [Self::P0N1, Self::P0N2, Self::Q3N1, Self::Q3N2, Self::Q3N3, Self::Noise];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    pub fn is_chirped(self) -> bool {
        matches!(self, Self::Q3N1 | Self::Q3N2 | Self::Q3N3)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::P0N1 => "P0N#1",
            Self::P0N2 => "P0N#2",
            Self::Q3N1 => "Q3N#1",
            Self::Q3N2 => "Q3N#2",
            Self::Q3N3 => "Q3N#3",
            Self::Noise => "Noise",
        }
    }
}

/// Pulse-train parameters of one synthetic emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub class: RadarClass,
    pub pulse_width_s: f64,
    pub pulses_per_burst: usize,
    /// Linear-FM sweep across one pulse; zero for unmodulated pulses and noise.
    pub chirp_width_hz: f64,
    pub pulse_repetition_rate_hz: f64,
    pub center_freq_offset_hz: f64,
    /// In-pulse signal-to-noise ratio.
    pub snr_db: f64,
}

impl WaveformSpec {
    pub fn duty_cycle(&self) -> f64 {
        self.pulse_width_s * self.pulse_repetition_rate_hz
    }

    pub fn validate(&self, sample_rate: f64) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidSpec(msg));
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return bad(format!("sample rate {sample_rate}"));
        }
        let fields = [self.pulse_width_s, self.chirp_width_hz, self.pulse_repetition_rate_hz, self.center_freq_offset_hz, self.snr_db];
        if fields.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.class.is_chirped() != (self.chirp_width_hz != 0.0) {
            return bad(format!("{} must {}have a chirp width", self.class.name(), if self.class.is_chirped() { "" } else { "not " }));
        }
        if self.center_freq_offset_hz.abs() + self.chirp_width_hz.abs() / 2.0 >= sample_rate / 2.0 {
            return bad("sweep leaves the sampled band".into());
        }
        if self.class == RadarClass::Noise {
            return Ok(());
        }
        if self.pulse_width_s <= 0.0 || self.pulse_repetition_rate_hz <= 0.0 || self.pulses_per_burst == 0 {
            return bad("pulse width, repetition rate and pulses per burst must be positive".into());
        }
        if self.duty_cycle() >= 1.0 {
            return bad(format!("duty cycle {} is not below 1", self.duty_cycle()));
        }
        if (self.pulse_width_s * sample_rate).round() < 1.0 {
            return bad("pulse shorter than one sample".into());
        }
        Ok(())
    }
}

/// Complex baseband samples of one emission plus where its pulses sit.
#[derive(Debug, Clone, PartialEq)]
pub struct IqRecord {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub spec: WaveformSpec,
    /// Sample ranges occupied by pulses (empty for noise).
    pub pulses: Vec<Range<usize>>,
}

/// Generate `num_samples` of unit-power complex AWGN plus the pulse train
/// described by `spec`. The signal amplitude is set against the realized noise
/// power, so the in-pulse SNR equals `spec.snr_db`.
pub fn synthesize(spec: &WaveformSpec, sample_rate: f64, num_samples: usize, seed: u64) -> Result<IqRecord, SynthError> {
    spec.validate(sample_rate)?;
    if num_samples < WINDOW * FRAMES {
        return Err(SynthError::TooShort { needed: WINDOW * FRAMES, got: num_samples });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std dev");
    let mut samples: Vec<Complex64> =
        (0..num_samples).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
    let mut pulses = Vec::new();
    if spec.class != RadarClass::Noise {
        let noise_power = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / num_samples as f64;
        let amplitude = (noise_power * 10f64.powf(spec.snr_db / 10.0)).sqrt();
        let pri = sample_rate / spec.pulse_repetition_rate_hz;
        let width = (spec.pulse_width_s * sample_rate).round() as usize;
        let first = rng.random_range(0.0..pri);
        let phase0 = rng.random_range(0.0..2.0 * PI);
        let dt = 1.0 / sample_rate;
        let f_start = spec.center_freq_offset_hz - spec.chirp_width_hz / 2.0;
        let sweep_rate = spec.chirp_width_hz / spec.pulse_width_s;
        for k in 0..spec.pulses_per_burst {
            let start = (first + k as f64 * pri).round() as usize;
            if start >= num_samples {
                break;
            }
            let end = (start + width).min(num_samples);
            for (n, s) in samples[start..end].iter_mut().enumerate() {
                let t = n as f64 * dt;
                let phase = phase0 + 2.0 * PI * (f_start * t + 0.5 * sweep_rate * t * t);
                *s += Complex64::from_polar(amplitude, phase);
            }
            pulses.push(start..end);
        }
    }
    Ok(IqRecord { samples, sample_rate, spec: spec.clone(), pulses })
}

/// Default class parameters at the default sample rate. Pulse widths and
/// repetition rates are scaled so several pulses land in one 16 384-sample
/// record, keeping the relative ordering of the pulsed and chirped families.
pub fn default_class_specs(snr_db: f64) -> Vec<WaveformSpec> {
    let spec = |class, pw_us: f64, ppb, chirp_mhz: f64, prr_khz: f64| WaveformSpec {
        class,
        pulse_width_s: pw_us * 1e-6,
        pulses_per_burst: ppb,
        chirp_width_hz: chirp_mhz * 1e6,
        pulse_repetition_rate_hz: prr_khz * 1e3,
        center_freq_offset_hz: 0.0,
        snr_db,
    };
    vec![
        spec(RadarClass::P0N1, 6.4, 24, 0.0, 10.0),
        spec(RadarClass::P0N2, 25.6, 8, 0.0, 3.0),
        spec(RadarClass::Q3N1, 51.2, 6, 1.5, 2.0),
        spec(RadarClass::Q3N2, 25.6, 6, 3.0, 2.0),
        spec(RadarClass::Q3N3, 102.4, 3, 0.8, 1.0),
        spec(RadarClass::Noise, 0.0, 0, 0.0, 0.0),
    ]
}

pub const DEFAULT_SAMPLE_RATE: f64 = 10e6;
