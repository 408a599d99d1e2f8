//! Pipeline configuration: a TOML file, then `DYSAUG_SEED`, then
//! `--section.key=value` flags, each layer overriding the previous one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dysaug::corpus::{AugTag, PairStrategy, SilenceLabels};
use dysaug::gan::{DcganConfig, GeneratorLoss, SbgConfig};
use dysaug::nn::TrainSchedule;
use dysaug::signal::{MelConfig, WindowKind, WsolaConfig};

use crate::CliError;

pub const SEED_ENV: &str = "DYSAUG_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsSection,
    pub audio: AudioSection,
    pub mel: MelSection,
    pub wsola: WsolaSection,
    pub perturbation: PerturbationSection,
    pub pairing: PairingSection,
    pub train: TrainSection,
    pub dcgan: DcganSection,
    pub sbg: SbgSection,
    pub augment: AugmentSection,
    pub sweep: SweepSection,
    /// Directory relative paths are resolved against; not a config key.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub manifest: Option<PathBuf>,
    /// Alignment file, or a directory whose files are all read.
    pub alignments: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioSection {
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelSection {
    pub n_mels: usize,
    pub fft_len: usize,
    pub frame_len: usize,
    pub frame_hop: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WsolaSection {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub search_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    pub si_factors: Vec<f64>,
    pub silence_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingSection {
    pub strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub base_lr: f64,
    pub halve_every: usize,
    pub max_iters: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcganSection {
    pub window: usize,
    pub g_loss: String,
    pub l1_weight: f64,
    pub init_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbgSection {
    pub lambda: f64,
    pub gen_hidden: [usize; 2],
    pub disc_hidden: [usize; 3],
    pub g_loss: String,
    pub init_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub grid: Vec<f64>,
    /// Speakers to generate for; empty means every speaker of the model.
    pub speakers: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: PathsSection::default(),
            audio: AudioSection::default(),
            mel: MelSection::default(),
            wsola: WsolaSection::default(),
            perturbation: PerturbationSection::default(),
            pairing: PairingSection::default(),
            train: TrainSection::default(),
            dcgan: DcganSection::default(),
            sbg: SbgSection::default(),
            augment: AugmentSection::default(),
            sweep: SweepSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { manifest: None, alignments: None, work_dir: "work".into(), output_dir: "augmented".into() }
    }
}

impl Default for AudioSection {
    fn default() -> Self {
        Self { sample_rate: 16_000 }
    }
}

impl Default for MelSection {
    fn default() -> Self {
        let m = MelConfig::default();
        Self {
            n_mels: m.n_mels,
            fft_len: m.fft_len,
            frame_len: m.frame_len,
            frame_hop: m.frame_hop,
            fmin: m.fmin,
            fmax: m.fmax,
            log_floor: m.log_floor,
        }
    }
}

impl Default for WsolaSection {
    fn default() -> Self {
        Self { frame_ms: 32.0, hop_ms: 8.0, search_ms: 7.9 }
    }
}

impl Default for PerturbationSection {
    fn default() -> Self {
        Self {
            si_factors: vec![0.9, 1.0, 1.1],
            silence_labels: ["sil", "sp", "spn", "noise"].map(String::from).to_vec(),
        }
    }
}

impl Default for PairingSection {
    fn default() -> Self {
        Self { strategy: "rand".into() }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = TrainSchedule::default();
        Self { base_lr: s.base_lr, halve_every: s.halve_every, max_iters: s.max_iters, batch_size: s.batch_size }
    }
}

impl Default for DcganSection {
    fn default() -> Self {
        let d = DcganConfig::default();
        Self { window: d.window, g_loss: d.g_loss.to_string(), l1_weight: d.l1_weight, init_std: d.init_std }
    }
}

impl Default for SbgSection {
    fn default() -> Self {
        let s = SbgConfig::default();
        Self {
            lambda: s.lambda,
            gen_hidden: s.gen_hidden,
            disc_hidden: s.disc_hidden,
            g_loss: s.g_loss.to_string(),
            init_std: s.init_std,
        }
    }
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self { tags: AugTag::ALL.iter().map(|t| t.as_str().to_string()).collect() }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { grid: vec![0.001, 0.01, 0.1, 0.2, 1.0, 2.0, 5.0], speakers: Vec::new() }
    }
}

/// Splits `--section.key=value` (and `--seed=value`) overrides from the
/// arguments meant for the command-line parser.
pub fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        let parsed =
            arg.strip_prefix("--").and_then(|s| s.split_once('=')).filter(|(k, _)| k.contains('.') || *k == "seed");
        match parsed {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn parse_value(raw: &str, existing: Option<&toml::Value>) -> toml::Value {
    if let Ok(mut t) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    // bare comma lists for array-valued keys: --perturbation.si_factors=0.9,1.1
    if matches!(existing, Some(toml::Value::Array(_))) {
        return toml::Value::Array(raw.split(',').map(|s| parse_value(s.trim(), None)).collect());
    }
    toml::Value::String(raw.to_string())
}

fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| CliError::Config(format!("bad key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("{key}: {p} is not a section")))?;
    }
    let v = parse_value(raw, cur.get(leaf));
    cur.insert(leaf.to_string(), v);
    Ok(())
}

impl PipelineConfig {
    /// Loads the file (or defaults), applies `DYSAUG_SEED` and the flag overrides, then validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let (mut table, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
                (table, base)
            }
            None => (toml::Table::new(), PathBuf::from(".")),
        };
        // seed the table with defaults so comma lists know their target type
        let defaults = toml::Table::try_from(PipelineConfig::default()).expect("defaults serialize");
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed: u64 =
                seed.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}={seed:?} is not an integer")))?;
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        for (k, v) in overrides {
            let existing = lookup(&defaults, k).cloned();
            let mut merged = table.clone();
            if let Some(ex) = existing {
                // make sure the parent sections exist with the default shape
                set_value(&mut merged, k, ex)?;
            }
            set_path(&mut merged, k, v)?;
            table = merged;
        }
        let mut cfg: PipelineConfig =
            PipelineConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.mel_config().validate(self.audio.sample_rate).map_err(|e| CliError::Config(e.to_string()))?;
        self.wsola_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        for t in &self.augment.tags {
            t.parse::<AugTag>().map_err(CliError::Config)?;
        }
        if self.perturbation.si_factors.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad(format!("perturbation.si_factors must be positive: {:?}", self.perturbation.si_factors));
        }
        self.strategy()?;
        self.dcgan_config()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sbg_config()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.schedule().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.sweep.grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad(format!("sweep.grid must be non-negative: {:?}", self.sweep.grid));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.paths.work_dir)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output_dir)
    }

    pub fn features_path(&self) -> PathBuf {
        self.work_dir().join("features.dafa")
    }

    pub fn profiles_path(&self) -> PathBuf {
        self.work_dir().join("profiles.tsv")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.work_dir().join("models")
    }

    pub fn pairs_dir(&self, strategy: PairStrategy) -> PathBuf {
        self.work_dir().join("pairs").join(strategy.to_string())
    }

    pub fn tags(&self) -> Vec<AugTag> {
        self.augment.tags.iter().filter_map(|t| t.parse().ok()).collect()
    }

    pub fn strategy(&self) -> Result<PairStrategy, CliError> {
        self.pairing.strategy.parse().map_err(CliError::Config)
    }

    pub fn silence(&self) -> SilenceLabels {
        SilenceLabels::new(self.perturbation.silence_labels.iter().cloned())
    }

    pub fn mel_config(&self) -> MelConfig {
        let m = &self.mel;
        MelConfig {
            n_mels: m.n_mels,
            fft_len: m.fft_len,
            frame_len: m.frame_len,
            frame_hop: m.frame_hop,
            fmin: m.fmin,
            fmax: m.fmax,
            log_floor: m.log_floor,
        }
    }

    pub fn wsola_config(&self) -> WsolaConfig {
        let sr = f64::from(self.audio.sample_rate) / 1000.0;
        WsolaConfig {
            frame_len: (self.wsola.frame_ms * sr).round() as usize,
            analysis_hop: (self.wsola.hop_ms * sr).round() as usize,
            delta_max: (self.wsola.search_ms * sr).floor() as usize,
            window: WindowKind::Hann,
        }
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            base_lr: self.train.base_lr,
            halve_every: self.train.halve_every,
            max_iters: self.train.max_iters,
            batch_size: self.train.batch_size,
            seed: self.seed,
            ..TrainSchedule::default()
        }
    }

    pub fn dcgan_config(&self) -> Result<DcganConfig, CliError> {
        Ok(DcganConfig {
            n_mels: self.mel.n_mels,
            window: self.dcgan.window,
            g_loss: self.dcgan.g_loss.parse::<GeneratorLoss>().map_err(CliError::Config)?,
            l1_weight: self.dcgan.l1_weight,
            init_std: self.dcgan.init_std,
            ..DcganConfig::default()
        })
    }

    pub fn sbg_config(&self) -> Result<SbgConfig, CliError> {
        Ok(SbgConfig {
            n_channels: self.mel.n_mels,
            gen_hidden: self.sbg.gen_hidden,
            disc_hidden: self.sbg.disc_hidden,
            lambda: self.sbg.lambda,
            g_loss: self.sbg.g_loss.parse::<GeneratorLoss>().map_err(CliError::Config)?,
            init_std: self.sbg.init_std,
            ..SbgConfig::default()
        })
    }
}

fn lookup<'a>(table: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let mut parts = key.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

/// Inserts `v` at `key` only where nothing is set yet.
fn set_value(table: &mut toml::Table, key: &str, v: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().unwrap_or_default();
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("{key}: {p} is not a section")))?;
    }
    cur.entry(leaf.to_string()).or_insert(v);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
        let cfg = PipelineConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.mel.n_mels, 40);
        assert_eq!(cfg.tags().len(), 6);
    }

    #[test]
    fn flag_overrides_apply() {
        let cfg = PipelineConfig::load(
            None,
            &ov(&[
                ("mel.n_mels", "80"),
                ("perturbation.si_factors", "0.8,1.2"),
                ("augment.tags", r#"["S","SBG+SG"]"#),
                ("pairing.strategy", "exhaustive"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.mel.n_mels, 80);
        assert_eq!(cfg.perturbation.si_factors, [0.8, 1.2]);
        assert_eq!(cfg.augment.tags, ["S", "SBG+SG"]);
        assert_eq!(cfg.strategy().unwrap(), PairStrategy::Exhaustive);
    }

    #[test]
    fn unknown_keys_and_tags_rejected() {
        assert!(matches!(PipelineConfig::load(None, &ov(&[("mel.n_mel", "80")])), Err(CliError::Config(_))));
        assert!(matches!(PipelineConfig::load(None, &ov(&[("bogus.x", "1")])), Err(CliError::Config(_))));
        assert!(matches!(PipelineConfig::load(None, &ov(&[("augment.tags", "XG")])), Err(CliError::Config(_))));
        assert!(matches!(PipelineConfig::load(None, &ov(&[("sbg.lambda", "-1")])), Err(CliError::Config(_))));
    }

    #[test]
    fn split_keeps_plain_flags() {
        let (rest, o) = split_overrides(
            ["augment", "--config=c.toml", "--seed=4", "--sbg.lambda=0.2", "--speaker", "F02"]
                .map(String::from)
                .to_vec(),
        );
        assert_eq!(rest, ["augment", "--config=c.toml", "--speaker", "F02"]);
        assert_eq!(o, ov(&[("seed", "4"), ("sbg.lambda", "0.2")]));
    }
}
