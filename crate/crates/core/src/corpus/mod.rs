//! Corpus bookkeeping: manifests, phoneme alignments, speaker-dependent
//! factors, speaker-level normalization, control/target pairing and the
//! binary feature archive.

mod align;
mod archive;
mod augment;
mod manifest;
mod pairing;
mod stats;

pub use align::{
    estimate_sd_factor, mean_phone_duration, pair_scale_factor, parse_alignments, PhonemeAlignment, Segment,
    SilenceLabels,
};
pub use archive::{
    decode_archive, read_archive, read_archive_records, write_archive, ArchiveWriter, ARCHIVE_MAGIC, ARCHIVE_VERSION,
};
pub use augment::{
    augmented_id, provenance_path, read_provenance, speed_expand, write_provenance, AugTag, Provenance, ProvenanceRow,
    Stage,
};
pub use manifest::{Group, Manifest, Utterance};
pub use pairing::{make_pairs, mean_bases, PairManifest, PairStrategy, TargetRef, MEAN_BASES};
pub use stats::{compute_speaker_stats, normalize_with, ProfileSet, SpeakerProfile, SpeakerStats, STD_FLOOR};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate utterance id {0}")]
    DuplicateUtterance(String),
    #[error("alignment list is empty")]
    EmptyAlignment,
    #[error("alignments contain only silence/noise segments")]
    AllSilence,
    #[error("word mismatch: control {control:?} vs target {target:?}")]
    WordMismatch { control: Option<String>, target: Option<String> },
    #[error("utterance {0} has non-positive duration")]
    ZeroDuration(String),
    #[error("no spectrograms given")]
    EmptyInput,
    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("{0} side of the pairing is empty")]
    EmptySide(&'static str),
    #[error("parallel pairing needs word ids; missing on {0}")]
    MissingWordIds(String),
    #[error("target utterances span several speakers: {0:?}")]
    MixedTargetSpeakers(Vec<String>),
    #[error("duplicate archive id {0}")]
    DuplicateId(String),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Splits a `key=value<TAB>key=value` record.
pub(crate) fn parse_fields(line: &str, lineno: usize) -> Result<Vec<(&str, &str)>> {
    line.split('\t')
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.split_once('=')
                .ok_or_else(|| CorpusError::Parse { line: lineno, msg: format!("field {f:?} is not key=value") })
        })
        .collect()
}
