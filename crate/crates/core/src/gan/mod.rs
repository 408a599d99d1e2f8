//! The two adversarial models: a convolutional per-speaker GAN trained on
//! time-aligned control/target spectrogram pairs, and a fully connected
//! GAN that perturbs spectral bases, with an auxiliary speaker-id head.

mod dcgan;
mod losses;
mod report;
mod sbg;

pub use dcgan::{dcgan_generate, speaker_normalize, train_dcgan, DcganConfig, DcganModel};
pub use losses::{dcgan_d_loss, dcgan_g_loss, sbg_d_loss, sbg_g_loss, GeneratorLoss};
pub use report::{GanTrainReport, IterRecord};
pub use sbg::{
    sbg_generate, sbg_perturb_bases, sbg_plus_sg, train_sbg, SbgConfig, SbgDiscriminator, SbgModel, SbgTrainingData,
};

use thiserror::Error;

use crate::nn::NnError;
use crate::signal::SignalError;
use crate::subspace::SubspaceError;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("pair {index}: control has {control} frames, target has {target}")]
    UnalignedPair { index: usize, control: usize, target: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("speaker {0} is not in the model's speaker vocabulary")]
    UnknownSpeaker(String),
    #[error("pairing refers to unknown target speaker {0}")]
    UnknownSpeakerInPairing(String),
    #[error("pairing refers to missing utterance {0}")]
    MissingUtterance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
}

pub type Result<T> = std::result::Result<T, GanError>;

pub(crate) fn meta_parse<V: std::str::FromStr>(
    ck: &crate::nn::Checkpoint<impl crate::scalar::Scalar>,
    key: &str,
) -> Result<V> {
    ck.meta(key)
        .ok_or_else(|| GanError::Checkpoint(format!("missing metadata {key:?}")))?
        .parse()
        .map_err(|_| GanError::Checkpoint(format!("bad metadata {key:?}")))
}
