use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::Result;
use crate::scalar::Scalar;
use crate::signal::{mel_fbank, speed_perturb, MelConfig, Spectrogram, Waveform};

/// Augmentation method names used as archive tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugTag {
    /// Tempo perturbation of control speech.
    Tempo,
    /// Speed perturbation (speaker-independent factors on targets, or SD factors on controls).
    Speed,
    /// Tempo perturbation followed by the convolutional GAN.
    TempoGan,
    /// Speed perturbation followed by the convolutional GAN.
    SpeedGan,
    /// Spectral-basis GAN.
    Sbg,
    /// Spectral-basis GAN followed by the speed-input convolutional GAN.
    SbgSg,
}

impl AugTag {
    pub const ALL: [AugTag; 6] =
        [AugTag::Tempo, AugTag::Speed, AugTag::TempoGan, AugTag::SpeedGan, AugTag::Sbg, AugTag::SbgSg];

    pub fn as_str(self) -> &'static str {
        match self {
            AugTag::Tempo => "T",
            AugTag::Speed => "S",
            AugTag::TempoGan => "TG",
            AugTag::SpeedGan => "SG",
            AugTag::Sbg => "SBG",
            AugTag::SbgSg => "SBG+SG",
        }
    }

    pub fn needs_dcgan(self) -> bool {
        matches!(self, AugTag::TempoGan | AugTag::SpeedGan | AugTag::SbgSg)
    }

    pub fn needs_sbg(self) -> bool {
        matches!(self, AugTag::Sbg | AugTag::SbgSg)
    }

    /// File-name-safe form.
    pub fn file_stem(self) -> String {
        self.as_str().replace('+', "_")
    }
}

impl fmt::Display for AugTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugTag {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AugTag::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown augmentation tag {s:?}"))
    }
}

/// One processing stage with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl Stage {
    pub fn new(name: &str, params: &[(&str, String)]) -> Self {
        Self { name: name.to_string(), params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect() }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

/// Ordered stages that produced one archive record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub record_id: String,
    pub source_utt: String,
    pub tag: Option<AugTag>,
    pub stages: Vec<Stage>,
}

impl Provenance {
    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|s| s.name.as_str()).collect()
    }

    /// `record<TAB>source<TAB>tag<TAB>stage1 > stage2 > ...`
    pub fn to_line(&self) -> String {
        let chain = self.stages.iter().map(ToString::to_string).collect::<Vec<_>>().join(" > ");
        format!("{}\t{}\t{}\t{}", self.record_id, self.source_utt, self.tag.map_or("-", AugTag::as_str), chain)
    }
}

/// Sidecar path holding provenance lines for an archive.
pub fn provenance_path(archive: &Path) -> PathBuf {
    let mut s = archive.as_os_str().to_owned();
    s.push(".prov.tsv");
    PathBuf::from(s)
}

pub fn write_provenance(archive: &Path, records: &[Provenance]) -> Result<()> {
    let mut out = String::from("# record\tsource\ttag\tstages\n");
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    std::fs::write(provenance_path(archive), out)?;
    Ok(())
}

/// `(record, source, tag, stage names)` as read back from a sidecar.
pub type ProvenanceRow = (String, String, String, Vec<String>);

pub fn read_provenance(archive: &Path) -> Result<Vec<ProvenanceRow>> {
    let text = std::fs::read_to_string(provenance_path(archive))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        if cols.len() != 4 {
            return Err(super::CorpusError::Parse { line: i + 1, msg: "expected 4 columns".into() });
        }
        let stages = cols[3]
            .split(" > ")
            .filter(|s| !s.is_empty())
            .map(|s| s.split('(').next().unwrap_or(s).to_string())
            .collect();
        rows.push((cols[0].to_string(), cols[1].to_string(), cols[2].to_string(), stages));
    }
    Ok(rows)
}

/// Record id for a perturbed copy, e.g. `utt1__S0.9`.
pub fn augmented_id(utt: &str, suffix: &str) -> String {
    format!("{utt}__{suffix}")
}

/// One speed-perturbed copy per factor, as filter-bank features.
///
/// Record ids are `utt__S<alpha>`; a factor of 1 keeps an unperturbed copy.
pub fn speed_expand<T: Scalar>(
    utt_id: &str,
    wave: &Waveform<T>,
    factors: &[f64],
    mel: &MelConfig,
) -> Result<Vec<(Provenance, Spectrogram<T>)>> {
    factors
        .iter()
        .map(|&alpha| {
            let spec = mel_fbank(&speed_perturb(wave, alpha)?, mel)?;
            let prov = Provenance {
                record_id: augmented_id(utt_id, &format!("S{alpha}")),
                source_utt: utt_id.to_string(),
                tag: Some(AugTag::Speed),
                stages: vec![Stage::new("speed_perturb", &[("alpha", alpha.to_string())])],
            };
            Ok((prov, spec))
        })
        .collect()
}
