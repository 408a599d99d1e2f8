use std::path::Path;

use dysaug::corpus::{write_provenance, ArchiveWriter, Provenance};
use dysaug::signal::mel_fbank;

use super::{check_failures, create_parent, Corpus};
use crate::{Logger, PipelineConfig, Result};

pub fn run(cfg: &PipelineConfig, out: Option<&Path>, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let mel = cfg.mel_config();
    let path = out.map(|p| p.to_path_buf()).unwrap_or_else(|| cfg.features_path());
    create_parent(&path)?;
    let mut writer = ArchiveWriter::create(&path)?;
    let mut prov = Vec::new();
    let mut failed = Vec::new();
    let mut frames = 0usize;
    let total = corpus.manifest.utterances.len();
    for u in &corpus.manifest.utterances {
        let spec = corpus.read(u).and_then(|w| Ok(mel_fbank(&w, &mel)?));
        match spec {
            Ok(spec) => {
                frames += spec.n_frames();
                writer.push(&u.utt_id, &spec.values)?;
                prov.push(Provenance {
                    record_id: u.utt_id.clone(),
                    source_utt: u.utt_id.clone(),
                    tag: None,
                    stages: vec![],
                });
            }
            Err(e) => {
                log.warn("utterance_failed", &[("id", u.utt_id.clone().into()), ("error", e.to_string().into())]);
                failed.push(u.utt_id.clone());
            }
        }
    }
    let written = writer.finish()?;
    write_provenance(&path, &prov)?;
    log.info("archive_written", &[("path", path.display().to_string().into()), ("records", written.into())]);
    println!(
        "records\t{written}\nfailed\t{}\nframes\t{frames}\nn_mels\t{}\narchive\t{}",
        failed.len(),
        mel.n_mels,
        path.display()
    );
    check_failures(failed, total)
}
