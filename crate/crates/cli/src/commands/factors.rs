use std::collections::HashMap;
use std::path::Path;

use dysaug::corpus::{
    compute_speaker_stats, estimate_sd_factor, mean_phone_duration, parse_alignments, read_archive, Group,
    PhonemeAlignment, ProfileSet, SpeakerProfile,
};

use super::{create_parent, require, Corpus};
use crate::{CliError, Logger, PipelineConfig, Result};

fn load_alignments(path: &Path) -> Result<Vec<PhonemeAlignment>> {
    let files = if path.is_dir() {
        let mut v: Vec<_> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.is_file())
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        out.extend(parse_alignments(&std::fs::read_to_string(&f)?)?);
    }
    Ok(out)
}

pub fn run(cfg: &PipelineConfig, out: Option<&Path>, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let speakers = corpus.target_speakers()?;
    let rel = cfg.paths.alignments.as_ref().ok_or_else(|| CliError::Config("paths.alignments is not set".into()))?;
    let align_path = cfg.resolve(rel);
    require(&align_path, "alignments")?;
    let aligns = load_alignments(&align_path)?;
    let by_utt: HashMap<&str, &PhonemeAlignment> = aligns.iter().map(|a| (a.utt_id.as_str(), a)).collect();
    let collect = |utts: Vec<&str>| -> Vec<PhonemeAlignment> {
        utts.into_iter().filter_map(|u| by_utt.get(u).map(|a| (*a).clone())).collect()
    };
    let silence = cfg.silence();

    let control = collect(corpus.manifest.group(Group::Control).map(|u| u.utt_id.as_str()).collect());
    if control.is_empty() {
        return Err(CliError::MissingAlignments(vec!["<control>".into()]));
    }
    let control_mean = mean_phone_duration(&control, &silence)?;

    let features_path = cfg.features_path();
    let features = if features_path.exists() { Some(read_archive(&features_path)?) } else { None };

    let mut profiles = Vec::new();
    let mut missing = Vec::new();
    for spk in &speakers {
        let target = collect(corpus.targets_of(spk).iter().map(|u| u.utt_id.as_str()).collect());
        if target.is_empty() {
            missing.push(spk.clone());
            continue;
        }
        let sd_factor = estimate_sd_factor(&target, &control, &silence)?;
        let (mut feat_mean, mut feat_std) = (Vec::new(), Vec::new());
        if let Some(feats) = &features {
            let utts = corpus.targets_of(spk);
            let mats: Vec<_> = utts.iter().filter_map(|u| feats.get(&u.utt_id)).collect();
            if !mats.is_empty() {
                let stats = compute_speaker_stats(&mats)?;
                feat_mean = stats.mean.iter().map(|&v| f64::from(v)).collect();
                feat_std = stats.std.iter().map(|&v| f64::from(v)).collect();
            }
        }
        log.info("speaker_factor", &[("speaker", spk.clone().into()), ("sd_factor", sd_factor.into())]);
        profiles.push(SpeakerProfile {
            speaker_id: spk.clone(),
            sd_factor,
            mean_phone_duration: mean_phone_duration(&target, &silence)?,
            feat_mean,
            feat_std,
        });
    }

    let set = ProfileSet { control_mean_phone_duration: control_mean, profiles };
    let path = out.map(|p| p.to_path_buf()).unwrap_or_else(|| cfg.profiles_path());
    create_parent(&path)?;
    set.save(&path)?;
    println!("speaker\tsd_factor\tmean_phone_duration");
    println!("<control>\t1\t{control_mean}");
    for p in &set.profiles {
        println!("{}\t{}\t{}", p.speaker_id, p.sd_factor, p.mean_phone_duration);
    }
    if !missing.is_empty() {
        return Err(CliError::MissingAlignments(missing));
    }
    Ok(())
}
