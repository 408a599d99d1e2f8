use dysaug::corpus::make_pairs;

use super::Corpus;
use crate::{Logger, PipelineConfig, Result};

/// Speaker `k` (manifest order) is paired with seed `seed + k`.
pub fn run(cfg: &PipelineConfig, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let speakers = corpus.target_speakers()?;
    let strategy = cfg.strategy()?;
    let control = corpus.controls();
    let dir = cfg.pairs_dir(strategy);
    std::fs::create_dir_all(&dir)?;
    println!("speaker\tpairs\tfile");
    for (k, spk) in speakers.iter().enumerate() {
        let pm = make_pairs(strategy, &control, &corpus.targets_of(spk), cfg.seed.wrapping_add(k as u64))?;
        let path = dir.join(format!("{spk}.pairs"));
        pm.save(&path)?;
        log.info("pairs_written", &[("speaker", spk.clone().into()), ("pairs", pm.pairs.len().into())]);
        println!("{spk}\t{}\t{}", pm.pairs.len(), path.display());
    }
    Ok(())
}
