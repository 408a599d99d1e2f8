//! Speaker-dependent data augmentation for dysarthric and elderly speech.
//!
//! Signal-level tempo and speed perturbation, log-Mel features, SVD
//! spectral-basis decomposition, a small tape-based autodiff engine and
//! the two GAN families built on it (a convolutional spectrogram-to-
//! spectrogram model and a spectral-basis model), plus corpus bookkeeping.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

// negated float comparisons are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod gan;
pub mod matrix;
pub mod nn;
pub mod scalar;
pub mod signal;
pub mod subspace;

pub type Matrix32 = matrix::Matrix<f32>;
pub type Matrix64 = matrix::Matrix<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Waveform32 = signal::Waveform<f32>;
pub type Waveform64 = signal::Waveform<f64>;
pub type Spectrogram32 = signal::Spectrogram<f32>;
pub type Spectrogram64 = signal::Spectrogram<f64>;
pub type Svd32 = subspace::SvdTriple<f32>;
pub type Svd64 = subspace::SvdTriple<f64>;
pub type DcganModel32 = gan::DcganModel<f32>;
pub type SbgModel32 = gan::SbgModel<f32>;
