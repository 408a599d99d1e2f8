//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dysaug::corpus::{Group, Manifest, Utterance};
use dysaug::signal::{read_wav, SignalError, Waveform};

use crate::{CliError, Command, Logger, PipelineConfig, Result};

mod augment;
mod extract;
mod factors;
mod inspect;
mod pair;
mod perturb;
mod train;

pub fn dispatch(cmd: &Command, cfg: &PipelineConfig, log: &Logger) -> Result<()> {
    match cmd {
        Command::Extract { out } => extract::run(cfg, out.as_deref(), log),
        Command::EstimateFactors { out } => factors::run(cfg, out.as_deref(), log),
        Command::Perturb { method, factor, input, output } => perturb::run(cfg, *method, *factor, input, output, log),
        Command::Pair => pair::run(cfg, log),
        Command::TrainDcgan { speaker, input } => train::dcgan(cfg, speaker.as_deref(), *input, log),
        Command::TrainSbg => train::sbg(cfg, log),
        Command::Augment => augment::augment(cfg, log),
        Command::SweepLambda => augment::sweep(cfg, log),
        Command::Inspect { path, records } => inspect::run(path, *records),
    }
}

pub(crate) fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingPath { what, path: path.to_path_buf() })
    }
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Manifest plus the directory its relative audio paths resolve against.
pub(crate) struct Corpus {
    pub manifest: Manifest,
    dir: PathBuf,
    sample_rate: u32,
}

impl Corpus {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let rel = cfg.paths.manifest.as_ref().ok_or_else(|| CliError::Config("paths.manifest is not set".into()))?;
        let path = cfg.resolve(rel);
        require(&path, "manifest")?;
        let manifest = Manifest::load(&path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, dir, sample_rate: cfg.audio.sample_rate })
    }

    pub fn audio_path(&self, u: &Utterance) -> PathBuf {
        let p = Path::new(&u.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn read(&self, u: &Utterance) -> Result<Waveform<f32>> {
        let w = read_wav::<f32>(self.audio_path(u))?;
        if w.sample_rate != self.sample_rate {
            return Err(SignalError::UnsupportedFormat(format!(
                "{}: {} Hz, config expects {} Hz",
                u.utt_id, w.sample_rate, self.sample_rate
            ))
            .into());
        }
        Ok(w)
    }

    pub fn controls(&self) -> Vec<Utterance> {
        self.manifest.group(Group::Control).cloned().collect()
    }

    pub fn targets_of(&self, speaker: &str) -> Vec<Utterance> {
        self.manifest.group(Group::Target).filter(|u| u.speaker_id == speaker).cloned().collect()
    }

    pub fn target_speakers(&self) -> Result<Vec<String>> {
        let s = self.manifest.target_speakers();
        if s.is_empty() {
            return Err(CliError::NoTargets);
        }
        Ok(s)
    }

    /// Reads every listed utterance, keyed by id.
    pub fn read_all<'a>(
        &self,
        utts: impl IntoIterator<Item = &'a Utterance>,
    ) -> Result<BTreeMap<String, Waveform<f32>>> {
        utts.into_iter().map(|u| Ok((u.utt_id.clone(), self.read(u)?))).collect()
    }
}

/// Fails with `Partial` when any item failed.
pub(crate) fn check_failures(failed: Vec<String>, total: usize) -> Result<()> {
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial { failed: failed.len(), total, ids: failed })
    }
}
