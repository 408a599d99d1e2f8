use std::collections::BTreeMap;
use std::path::PathBuf;

use dysaug::corpus::{
    augmented_id, speed_expand, write_provenance, ArchiveWriter, AugTag, ProfileSet, Provenance, Stage,
};
use dysaug::gan::{dcgan_generate, sbg_generate, sbg_perturb_bases, speaker_normalize, DcganModel, GanError, SbgModel};
use dysaug::matrix::Matrix;
use dysaug::nn::Checkpoint;
use dysaug::signal::{mel_fbank, speed_perturb, tempo_perturb, Spectrogram, Waveform};
use dysaug::subspace::{recompose, svd_matrix};
use serde_json::json;

use super::train::{dcgan_path, method_name, sbg_path};
use super::{check_failures, require, Corpus};
use crate::{CliError, Logger, Method, PipelineConfig, Result};

fn load_sbg(cfg: &PipelineConfig) -> Result<SbgModel<f64>> {
    let path = sbg_path(cfg);
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(path));
    }
    Ok(SbgModel::<f32>::from_checkpoint(&Checkpoint::load(&path)?)?.cast())
}

fn load_dcgan(cfg: &PipelineConfig, method: Method, speaker: &str) -> Result<DcganModel<f32>> {
    let model = DcganModel::from_checkpoint(&Checkpoint::load(dcgan_path(cfg, method, speaker))?)?;
    if model.target_speaker != speaker {
        return Err(
            GanError::InvalidConfig(format!("checkpoint for {speaker} targets {}", model.target_speaker)).into()
        );
    }
    Ok(model)
}

fn dcgan_input(tag: AugTag) -> Option<Method> {
    match tag {
        AugTag::TempoGan => Some(Method::Tempo),
        AugTag::SpeedGan | AugTag::SbgSg => Some(Method::Speed),
        _ => None,
    }
}

/// Archive writer plus the bookkeeping reconciled at the end.
struct Sink {
    path: PathBuf,
    writer: ArchiveWriter,
    prov: Vec<Provenance>,
    failed: Vec<String>,
}

impl Sink {
    fn create(path: PathBuf) -> Result<Self> {
        let writer = ArchiveWriter::create(&path)?;
        Ok(Self { path, writer, prov: Vec::new(), failed: Vec::new() })
    }

    fn put(&mut self, prov: Provenance, m: std::result::Result<Matrix<f32>, String>, log: &Logger) -> Result<()> {
        match m {
            Ok(m) => {
                self.writer.push(&prov.record_id, &m)?;
                self.prov.push(prov);
            }
            Err(e) => {
                log.warn("record_failed", &[("id", prov.record_id.clone().into()), ("error", e.into())]);
                self.failed.push(prov.record_id);
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<(PathBuf, usize, Vec<String>)> {
        let written = self.writer.finish()? as usize;
        write_provenance(&self.path, &self.prov)?;
        Ok((self.path, written, self.failed))
    }
}

fn sbg_apply(model: &SbgModel<f64>, spec: &Spectrogram<f32>, speaker: &str) -> Result<Matrix<f32>> {
    let s = Spectrogram::from_matrix(spec.values.cast::<f64>());
    Ok(sbg_generate(model, &s, speaker)?.values.cast())
}

/// Signal-level stage plus the optional basis perturbation, before any convolutional GAN.
fn front_end(
    cfg: &PipelineConfig,
    tag: AugTag,
    wave: &Waveform<f32>,
    alpha: f64,
    sbg: Option<&SbgModel<f64>>,
    speaker: &str,
) -> Result<(Matrix<f32>, Vec<Stage>)> {
    let mel = cfg.mel_config();
    let (spec, mut stages) = match tag {
        AugTag::Tempo | AugTag::TempoGan => {
            let f = 1.0 / alpha;
            (
                mel_fbank(&tempo_perturb(wave, f, &cfg.wsola_config())?, &mel)?,
                vec![Stage::new("tempo_perturb", &[("alpha", f.to_string())])],
            )
        }
        AugTag::Speed | AugTag::SpeedGan | AugTag::SbgSg => (
            mel_fbank(&speed_perturb(wave, alpha)?, &mel)?,
            vec![Stage::new("speed_perturb", &[("alpha", alpha.to_string())])],
        ),
        AugTag::Sbg => (mel_fbank(wave, &mel)?, vec![]),
    };
    if tag.needs_sbg() {
        let model = sbg.expect("sbg model loaded for sbg tags");
        stages
            .push(Stage::new("sbg", &[("lambda", model.config.lambda.to_string()), ("speaker", speaker.to_string())]));
        return Ok((sbg_apply(model, &spec, speaker)?, stages));
    }
    Ok((spec.values, stages))
}

type Pending = (Provenance, std::result::Result<Matrix<f32>, String>);

/// Speaker-normalized input, generator, speaker-normalized output; failed records pass through.
fn gan_back_end(model: &DcganModel<f32>, method: Method, speaker: &str, items: Vec<Pending>) -> Result<Vec<Pending>> {
    let ok: Vec<Matrix<f32>> = items.iter().filter_map(|(_, m)| m.as_ref().ok().cloned()).collect();
    if ok.is_empty() {
        return Ok(items);
    }
    let mut outs = Vec::with_capacity(ok.len());
    for m in speaker_normalize(&ok)? {
        outs.push(dcgan_generate(model, &Spectrogram::from_matrix(m))?.values);
    }
    let mut outs = speaker_normalize(&outs)?.into_iter();
    let stage = Stage::new("dcgan", &[("speaker", speaker.to_string()), ("input", method_name(method).to_string())]);
    Ok(items
        .into_iter()
        .map(|(mut p, m)| {
            let m = m.map(|_| outs.next().expect("one output per input"));
            p.stages.push(stage.clone());
            (p, m)
        })
        .collect())
}

pub fn augment(cfg: &PipelineConfig, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let speakers = corpus.target_speakers()?;
    let tags = cfg.tags();

    // validate every prerequisite before doing any work
    let profiles = if tags.iter().any(|&t| t != AugTag::Sbg) {
        let p = cfg.profiles_path();
        require(&p, "speaker profiles")?;
        Some(ProfileSet::load(&p)?)
    } else {
        None
    };
    let alpha = |spk: &str| profiles.as_ref().and_then(|p| p.get(spk)).map_or(1.0, |p| p.sd_factor);
    if let Some(p) = &profiles {
        if let Some(s) = speakers.iter().find(|s| p.get(s).is_none()) {
            return Err(CliError::Config(format!("no profile for speaker {s}; run estimate-factors")));
        }
    }
    for &tag in &tags {
        if let Some(m) = dcgan_input(tag) {
            for spk in &speakers {
                let p = dcgan_path(cfg, m, spk);
                if !p.exists() {
                    return Err(CliError::MissingCheckpoint(p));
                }
            }
        }
    }
    let sbg = if tags.iter().any(|t| t.needs_sbg()) {
        let m = load_sbg(cfg)?.with_lambda(cfg.sbg.lambda)?;
        for spk in &speakers {
            m.speaker_index(spk)?;
        }
        Some(m)
    } else {
        None
    };

    let control = corpus.controls();
    let mut control_waves = BTreeMap::new();
    for u in &control {
        control_waves.insert(u.utt_id.clone(), corpus.read(u).map_err(|e| e.to_string()));
    }
    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut report = String::from("tag\tarchive\texpected\twritten\tfailed\tdegenerate\n");
    let mut all_failed = Vec::new();
    let mut total = 0usize;
    println!("tag\texpected\twritten\tfailed\tarchive");

    for &tag in &tags {
        let mut sink = Sink::create(out_dir.join(format!("{}.dafa", tag.file_stem())))?;
        let mut expected = 0usize;
        for spk in &speakers {
            let a = alpha(spk);
            let mut items: Vec<Pending> = Vec::with_capacity(control.len());
            for u in &control {
                let prov = Provenance {
                    record_id: augmented_id(&u.utt_id, &format!("{}_{spk}", tag.as_str())),
                    source_utt: u.utt_id.clone(),
                    tag: Some(tag),
                    stages: vec![],
                };
                let res = match &control_waves[&u.utt_id] {
                    Ok(w) => front_end(cfg, tag, w, a, sbg.as_ref(), spk).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                let (prov, m) = match res {
                    Ok((m, stages)) => (Provenance { stages, ..prov }, Ok(m)),
                    Err(e) => (prov, Err(e)),
                };
                items.push((prov, m));
            }
            expected += items.len();
            if let Some(method) = dcgan_input(tag) {
                items = gan_back_end(&load_dcgan(cfg, method, spk)?, method, spk, items)?;
            }
            for (p, m) in items {
                sink.put(p, m, log)?;
            }
        }
        if tag == AugTag::Speed {
            // speaker-independent expansion of the target speech
            for spk in &speakers {
                for u in corpus.targets_of(spk) {
                    expected += cfg.perturbation.si_factors.len();
                    let res = corpus.read(&u).and_then(|w| {
                        Ok(speed_expand(&u.utt_id, &w, &cfg.perturbation.si_factors, &cfg.mel_config())?)
                    });
                    match res {
                        Ok(recs) => {
                            for (p, s) in recs {
                                sink.put(p, Ok(s.values), log)?;
                            }
                        }
                        Err(e) => {
                            for &f in &cfg.perturbation.si_factors {
                                let id = augmented_id(&u.utt_id, &format!("S{f}"));
                                let p = Provenance {
                                    record_id: id,
                                    source_utt: u.utt_id.clone(),
                                    tag: Some(tag),
                                    stages: vec![],
                                };
                                sink.put(p, Err(e.to_string()), log)?;
                            }
                        }
                    }
                }
            }
        }
        let (path, written, failed) = sink.finish()?;
        if written + failed.len() != expected {
            return Err(CliError::CountMismatch { tag: tag.to_string(), expected, written, failed: failed.len() });
        }
        let degenerate = tag.needs_sbg() && cfg.sbg.lambda == 0.0;
        if degenerate {
            log.warn("degenerate", &[("tag", tag.as_str().into()), ("reason", "sbg.lambda is 0".into())]);
        }
        log.info(
            "archive_written",
            &[("tag", tag.as_str().into()), ("records", written.into()), ("expected", expected.into())],
        );
        report.push_str(&format!(
            "{tag}\t{}\t{expected}\t{written}\t{}\t{}\n",
            path.display(),
            failed.len(),
            if degenerate { "yes" } else { "no" }
        ));
        println!("{tag}\t{expected}\t{written}\t{}\t{}", failed.len(), path.display());
        total += expected;
        all_failed.extend(failed);
    }
    std::fs::write(out_dir.join("augment_report.tsv"), report)?;
    check_failures(all_failed, total)
}

pub fn sweep(cfg: &PipelineConfig, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let model = load_sbg(cfg)?;
    let speakers = if cfg.sweep.speakers.is_empty() { model.speakers.clone() } else { cfg.sweep.speakers.clone() };
    for s in &speakers {
        model.speaker_index(s)?;
    }
    let mel = cfg.mel_config();
    let mut sources = Vec::new();
    for u in corpus.controls() {
        let s = mel_fbank(&corpus.read(&u)?, &mel)?.values.cast::<f64>();
        let svd = svd_matrix(&s)?;
        sources.push((u.utt_id, s, svd));
    }
    let dir = cfg.output_dir().join("sweep");
    std::fs::create_dir_all(&dir)?;
    let mut table = String::from("lambda\tdeviation\trecords\tarchive\n");
    println!("lambda\tdeviation\trecords");
    let mut prev: Option<f64> = None;
    for &lambda in &cfg.sweep.grid {
        let m = model.with_lambda(lambda)?;
        let path: PathBuf = dir.join(format!("lambda_{lambda}.dafa"));
        let mut writer = ArchiveWriter::create(&path)?;
        let mut prov = Vec::new();
        let mut dev_sum = 0.0;
        for spk in &speakers {
            for (id, s, svd) in &sources {
                let u = sbg_perturb_bases(&m, &svd.u, spk)?;
                let out = recompose(&u, &svd.sigma, &svd.vt)?;
                dev_sum += out.frobenius_distance(s) / s.frobenius_norm();
                let record_id = augmented_id(id, &format!("SBG{lambda}_{spk}"));
                writer.push(&record_id, &out)?;
                let stages = vec![Stage::new("sbg", &[("lambda", lambda.to_string()), ("speaker", spk.clone())])];
                prov.push(Provenance { record_id, source_utt: id.clone(), tag: Some(AugTag::Sbg), stages });
            }
        }
        let n = writer.finish()? as usize;
        write_provenance(&path, &prov)?;
        let dev = if n > 0 { dev_sum / n as f64 } else { 0.0 };
        if prev.is_some_and(|p| dev < p) {
            log.warn("non_monotone", &[("lambda", json!(lambda)), ("deviation", json!(dev))]);
        }
        prev = Some(dev);
        log.info("archive_written", &[("lambda", json!(lambda)), ("records", n.into()), ("deviation", json!(dev))]);
        table.push_str(&format!("{lambda}\t{dev:e}\t{n}\t{}\n", path.display()));
        println!("{lambda}\t{dev:e}\t{n}");
    }
    std::fs::write(dir.join("deviation.tsv"), table)?;
    Ok(())
}
