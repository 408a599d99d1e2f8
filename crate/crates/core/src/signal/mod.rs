//! Time-domain perturbation and log-Mel feature extraction.
//!
//! * [`tempo_perturb`] stretches duration with WSOLA while keeping pitch.
//! * [`speed_perturb`] resamples so that `y(t) = x(alpha * t)`, moving both
//!   duration and spectral content.
//! * [`mel_fbank`] turns a waveform into a `C x T` log-Mel [`Spectrogram`].

mod mel;
mod speed;
mod wav;
mod window;
mod wsola;

pub use mel::{hz_to_mel, mel_fbank, mel_filterbank, mel_to_hz, MelConfig};
pub use speed::{speed_perturb, speed_perturb_with, ResamplerConfig};
pub use wav::{read_wav, write_wav};
pub use window::{hann, WindowKind};
pub use wsola::{tempo_perturb, WsolaConfig};

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Smallest and largest perturbation factor accepted by the perturbers.
pub const ALPHA_RANGE: (f64, f64) = (0.25, 4.0);

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("perturbation factor {0} outside [0.25, 4.0]")]
    AlphaOutOfRange(f64),
    #[error("waveform of {len} samples is too short (need more than {needed})")]
    WaveTooShort { len: usize, needed: usize },
    #[error("invalid mel configuration: {0}")]
    InvalidMelConfig(String),
    #[error("invalid WSOLA configuration: {0}")]
    InvalidWsolaConfig(String),
    #[error("waveform contains non-finite samples")]
    NonFinite,
    #[error("only mono audio is supported, found {0} channels")]
    NotMono(u16),
    #[error("only 16-bit integer PCM is supported, found {0}")]
    UnsupportedFormat(String),
    #[error("wav i/o: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.samples.iter().all(|s| s.is_finite()) {
            Ok(())
        } else {
            Err(SignalError::NonFinite)
        }
    }

    /// Sine tone of `freq` Hz with peak `amp`.
    pub fn sine(freq: f64, amp: f64, sample_rate: u32, len: usize) -> Self {
        let sr = f64::from(sample_rate);
        let samples =
            (0..len).map(|n| T::of(amp * (2.0 * std::f64::consts::PI * freq * n as f64 / sr).sin())).collect();
        Self { samples, sample_rate }
    }
}

/// `C x T` log-Mel filter-bank matrix (channels by frames).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub values: Matrix<T>,
    pub frame_hop: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn new(values: Matrix<T>, frame_hop: usize, sample_rate: u32) -> Self {
        Self { values, frame_hop, sample_rate }
    }

    /// Wraps a bare matrix with the default 10 ms / 16 kHz provenance.
    pub fn from_matrix(values: Matrix<T>) -> Self {
        Self { values, frame_hop: 160, sample_rate: 16_000 }
    }

    pub fn n_mels(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }

    pub fn with_values(&self, values: Matrix<T>) -> Self {
        Self { values, frame_hop: self.frame_hop, sample_rate: self.sample_rate }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && (ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&alpha) {
        Ok(())
    } else {
        Err(SignalError::AlphaOutOfRange(alpha))
    }
}
