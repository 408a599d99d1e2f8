use std::collections::BTreeMap;
use std::path::PathBuf;

use dysaug::corpus::{make_pairs, pair_scale_factor, read_archive, PairManifest, PairStrategy, TargetRef, Utterance};
use dysaug::gan::{speaker_normalize, train_dcgan, train_sbg, GanTrainReport, SbgTrainingData};
use dysaug::matrix::Matrix;
use dysaug::signal::{mel_fbank, speed_perturb, tempo_perturb, Waveform};
use dysaug::subspace::svd_matrix;

use super::{require, Corpus};
use crate::{Logger, Method, PipelineConfig, Result};

pub(crate) fn method_name(m: Method) -> &'static str {
    match m {
        Method::Tempo => "tempo",
        Method::Speed => "speed",
    }
}

pub(crate) fn dcgan_path(cfg: &PipelineConfig, method: Method, speaker: &str) -> PathBuf {
    cfg.models_dir().join(format!("dcgan_{}_{speaker}.ckpt", method_name(method)))
}

pub(crate) fn sbg_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.models_dir().join("sbg.ckpt")
}

fn save_report(ckpt: &std::path::Path, report: &GanTrainReport) -> Result<()> {
    std::fs::write(ckpt.with_extension("report.tsv"), report.to_lines())?;
    Ok(())
}

fn first_cols(m: &Matrix<f32>, n: usize) -> Matrix<f32> {
    Matrix::from_fn(m.rows(), n, |i, j| m[(i, j)])
}

/// Word-parallel pairs with the control side perturbed to the target's duration.
fn parallel_pairs(
    cfg: &PipelineConfig,
    control: &[Utterance],
    targets: &[Utterance],
    waves: &BTreeMap<String, Waveform<f32>>,
    method: Method,
) -> Result<Vec<(Matrix<f32>, Matrix<f32>)>> {
    let pm = make_pairs(PairStrategy::Parallel, control, targets, cfg.seed)?;
    let by_id: BTreeMap<&str, &Utterance> = control.iter().chain(targets).map(|u| (u.utt_id.as_str(), u)).collect();
    let (mel, wsola) = (cfg.mel_config(), cfg.wsola_config());
    let (mut ctl, mut tgt) = (Vec::new(), Vec::new());
    for (c_id, t_ref) in &pm.pairs {
        let TargetRef::Utterance(t_id) = t_ref else { continue };
        let (wc, wt) = (&waves[c_id], &waves[t_id]);
        // durations from the audio itself rather than the manifest
        let timed = |id: &str, w: &Waveform<f32>| Utterance { duration: w.duration_secs(), ..by_id[id].clone() };
        let k = pair_scale_factor(&timed(c_id, wc), &timed(t_id, wt), true)?;
        let moved = match method {
            Method::Tempo => tempo_perturb(wc, k, &wsola)?,
            Method::Speed => speed_perturb(wc, 1.0 / k)?,
        };
        let (sc, st) = (mel_fbank(&moved, &mel)?.values, mel_fbank(wt, &mel)?.values);
        let n = sc.cols().min(st.cols());
        ctl.push(first_cols(&sc, n));
        tgt.push(first_cols(&st, n));
    }
    if ctl.is_empty() {
        return Ok(Vec::new());
    }
    Ok(speaker_normalize(&ctl)?.into_iter().zip(speaker_normalize(&tgt)?).collect())
}

pub fn dcgan(cfg: &PipelineConfig, speaker: Option<&str>, input: Option<Method>, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let mut speakers = corpus.target_speakers()?;
    if let Some(s) = speaker {
        if !speakers.iter().any(|x| x == s) {
            return Err(dysaug::gan::GanError::UnknownSpeaker(s.to_string()).into());
        }
        speakers = vec![s.to_string()];
    }
    let methods = input.map_or(vec![Method::Tempo, Method::Speed], |m| vec![m]);
    let config = cfg.dcgan_config()?;
    let schedule = cfg.schedule();
    let control = corpus.controls();
    let mut waves = corpus.read_all(&control)?;
    std::fs::create_dir_all(cfg.models_dir())?;
    println!("speaker\tinput\tpairs\td_acc_tail\tcheckpoint");
    for spk in &speakers {
        let targets = corpus.targets_of(spk);
        waves.extend(corpus.read_all(&targets)?);
        for &method in &methods {
            let pairs = parallel_pairs(cfg, &control, &targets, &waves, method)?;
            log.info(
                "training",
                &[
                    ("speaker", spk.clone().into()),
                    ("input", method_name(method).into()),
                    ("pairs", pairs.len().into()),
                ],
            );
            let (model, report) = train_dcgan(&pairs, config.clone(), &schedule, spk)?;
            let path = dcgan_path(cfg, method, spk);
            model.to_checkpoint().save(&path)?;
            save_report(&path, &report)?;
            let acc = report.tail_mean(100, |r| r.d_acc);
            println!("{spk}\t{}\t{}\t{acc:.3}\t{}", method_name(method), pairs.len(), path.display());
        }
    }
    Ok(())
}

pub fn sbg(cfg: &PipelineConfig, log: &Logger) -> Result<()> {
    let corpus = Corpus::load(cfg)?;
    let speakers = corpus.target_speakers()?;
    let strategy = cfg.strategy()?;
    let features_path = cfg.features_path();
    require(&features_path, "features archive")?;
    let mut pairings = Vec::new();
    for spk in &speakers {
        let p = cfg.pairs_dir(strategy).join(format!("{spk}.pairs"));
        require(&p, "pair manifest")?;
        pairings.push(PairManifest::load(&p)?);
    }
    let feats = read_archive(&features_path)?;
    let bases = |utts: &[Utterance]| -> Result<BTreeMap<String, Matrix<f32>>> {
        utts.iter()
            .filter_map(|u| feats.get(&u.utt_id).map(|m| (u, m)))
            .map(|(u, m)| Ok((u.utt_id.clone(), svd_matrix(m)?.u)))
            .collect()
    };
    let control = bases(&corpus.controls())?;
    let mut targets = BTreeMap::new();
    for spk in &speakers {
        targets.insert(spk.clone(), bases(&corpus.targets_of(spk))?);
    }
    let data = SbgTrainingData { control, targets, pairings };
    log.info("training", &[("speakers", speakers.len().into()), ("control", data.control.len().into())]);
    let (model, report) = train_sbg(&data, cfg.sbg_config()?, &cfg.schedule())?;
    std::fs::create_dir_all(cfg.models_dir())?;
    let path = sbg_path(cfg);
    model.to_checkpoint().save(&path)?;
    save_report(&path, &report)?;
    println!(
        "speakers\t{}\nd_acc_tail\t{:.3}\nsid_acc_tail\t{:.3}\ncheckpoint\t{}",
        model.speakers.join(","),
        report.tail_mean(100, |r| r.d_acc),
        report.tail_mean(100, |r| r.sid_acc),
        path.display()
    );
    Ok(())
}
