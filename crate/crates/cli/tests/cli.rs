use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dysaug::corpus::{read_archive, read_archive_records, read_provenance, PairManifest, ProfileSet, SpeakerProfile};
use dysaug::signal::{write_wav, Waveform};
use tempfile::TempDir;

const SR: u32 = 16_000;

fn dysaug(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dysaug"));
    cmd.current_dir(dir).args(args).env_remove("DYSAUG_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

struct Utt {
    id: String,
    speaker: String,
    group: &'static str,
    secs: f64,
    word: Option<String>,
}

/// Writes one sine WAV per utterance plus the manifest.
fn write_corpus(dir: &Path, utts: &[Utt]) {
    let mut manifest = String::new();
    for (i, u) in utts.iter().enumerate() {
        let wave = Waveform::<f32>::sine(180.0 + 17.0 * i as f64, 0.3, SR, (u.secs * f64::from(SR)) as usize);
        write_wav(dir.join(format!("{}.wav", u.id)), &wave).unwrap();
        manifest.push_str(&format!(
            "id={}\tspeaker={}\tgroup={}\tpath={}.wav\tduration={}",
            u.id, u.speaker, u.group, u.id, u.secs
        ));
        if let Some(w) = &u.word {
            manifest.push_str(&format!("\tword={w}"));
        }
        manifest.push('\n');
    }
    std::fs::write(dir.join("manifest.tsv"), manifest).unwrap();
}

/// Silence-framed alignment with three phones of `phone` seconds each.
fn write_alignments(dir: &Path, utts: &[Utt], phone: impl Fn(&Utt) -> f64) {
    let mut text = String::new();
    for u in utts {
        let p = phone(u);
        text.push_str(&format!("{} sil 0 0.05\n", u.id));
        for k in 0..3 {
            let s = 0.05 + k as f64 * p;
            text.push_str(&format!("{} ph{k} {s} {}\n", u.id, s + p));
        }
        text.push_str(&format!("{} sil {} {}\n", u.id, 0.05 + 3.0 * p, u.secs));
    }
    std::fs::write(dir.join("align.txt"), text).unwrap();
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("pipeline.toml");
    let base = "seed = 1\n\
                [paths]\nmanifest = \"manifest.tsv\"\nalignments = \"align.txt\"\n\
                [train]\nmax_iters = 6\nbatch_size = 2\n\
                [dcgan]\nwindow = 16\n\
                [sbg]\ngen_hidden = [16, 16]\ndisc_hidden = [16, 16, 16]\n";
    std::fs::write(&path, format!("{base}{extra}")).unwrap();
    path
}

fn small_corpus() -> Vec<Utt> {
    let mut utts = Vec::new();
    for i in 0..3 {
        utts.push(Utt {
            id: format!("c{i}"),
            speaker: "CTL".into(),
            group: "control",
            secs: 0.4,
            word: Some(format!("w{i}")),
        });
    }
    for spk in ["F01", "M02"] {
        for i in 0..3 {
            let id = format!("{spk}_{i}");
            utts.push(Utt { id, speaker: spk.into(), group: "target", secs: 0.8, word: Some(format!("w{i}")) });
        }
    }
    utts
}

fn setup(extra: &str) -> (TempDir, Vec<Utt>) {
    let dir = TempDir::new().unwrap();
    let utts = small_corpus();
    write_corpus(dir.path(), &utts);
    write_alignments(dir.path(), &utts, |u| if u.group == "control" { 0.1 } else { 0.2 });
    write_config(dir.path(), extra);
    (dir, utts)
}

const CFG: &str = "--config=pipeline.toml";

#[test]
fn extract_writes_one_record_per_utterance() {
    let dir = TempDir::new().unwrap();
    let utts: Vec<Utt> = (0..3)
        .map(|i| Utt { id: format!("u{i}"), speaker: "S".into(), group: "control", secs: 0.3, word: None })
        .collect();
    write_corpus(dir.path(), &utts);
    write_config(dir.path(), "");
    let out = ok(dysaug(dir.path(), &[CFG, "extract"], &[]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("records\t3"));
    let feats = read_archive(dir.path().join("work/features.dafa")).unwrap();
    assert_eq!(feats.len(), 3);
    assert!(feats.values().all(|m| m.rows() == 40));
}

#[test]
fn extract_reports_unreadable_file() {
    let dir = TempDir::new().unwrap();
    let utts: Vec<Utt> = (0..3)
        .map(|i| Utt { id: format!("u{i}"), speaker: "S".into(), group: "control", secs: 0.3, word: None })
        .collect();
    write_corpus(dir.path(), &utts);
    std::fs::write(dir.path().join("u1.wav"), b"not a wav file").unwrap();
    write_config(dir.path(), "");
    let out = dysaug(dir.path(), &[CFG, "extract"], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("u1"));
    let feats = read_archive(dir.path().join("work/features.dafa")).unwrap();
    assert_eq!(feats.keys().collect::<Vec<_>>(), ["u0", "u2"]);
}

#[test]
fn config_is_closed_world() {
    let (dir, _) = setup("");
    let d = dir.path();
    assert_eq!(code(&dysaug(d, &[CFG, "--mel.bogus=1", "pair"], &[])), 2);
    assert_eq!(code(&dysaug(d, &[CFG, "--augment.tags=S,XG", "pair"], &[])), 2);
    assert_eq!(code(&dysaug(d, &[CFG, "--pairing.strategy=closest", "pair"], &[])), 2);
    write_config(d, "[mel]\nbogus = 3\n");
    assert_eq!(code(&dysaug(d, &[CFG, "pair"], &[])), 2);
    assert_eq!(code(&dysaug(d, &["pair"], &[])), 2, "no manifest configured");
    assert_eq!(code(&dysaug(d, &["no-such-verb"], &[])), 2);
}

#[test]
fn seed_precedence() {
    let (dir, _) = setup("");
    let d = dir.path();
    let header = || PairManifest::load(d.join("work/pairs/rand/F01.pairs")).unwrap().seed;
    ok(dysaug(d, &[CFG, "pair"], &[]));
    assert_eq!(header(), 1);
    ok(dysaug(d, &[CFG, "pair"], &[("DYSAUG_SEED", "77")]));
    assert_eq!(header(), 77);
    ok(dysaug(d, &[CFG, "--seed=9", "pair"], &[("DYSAUG_SEED", "77")]));
    assert_eq!(header(), 9);
    // second speaker gets the next seed
    assert_eq!(PairManifest::load(d.join("work/pairs/rand/M02.pairs")).unwrap().seed, 10);
}

#[test]
fn factors_for_twice_slower_targets() {
    let (dir, _) = setup("");
    let d = dir.path();
    ok(dysaug(d, &[CFG, "estimate-factors"], &[]));
    let profiles = ProfileSet::load(d.join("work/profiles.tsv")).unwrap();
    assert_eq!(profiles.profiles.len(), 2);
    for p in &profiles.profiles {
        assert!((p.sd_factor - 0.5).abs() < 1e-9, "{}: {}", p.speaker_id, p.sd_factor);
    }
    let again = ProfileSet::load(d.join("work/profiles.tsv")).unwrap();
    assert_eq!(profiles, again);
}

#[test]
fn factors_need_targets() {
    let dir = TempDir::new().unwrap();
    let utts: Vec<Utt> = (0..2)
        .map(|i| Utt { id: format!("c{i}"), speaker: "CTL".into(), group: "control", secs: 0.4, word: None })
        .collect();
    write_corpus(dir.path(), &utts);
    write_alignments(dir.path(), &utts, |_| 0.1);
    write_config(dir.path(), "");
    assert_eq!(code(&dysaug(dir.path(), &[CFG, "estimate-factors"], &[])), 2);
}

#[test]
fn factors_list_speakers_without_alignments() {
    let (dir, utts) = setup("");
    let covered: Vec<Utt> = utts.into_iter().filter(|u| u.speaker != "M02").collect();
    write_alignments(dir.path(), &covered, |u| if u.group == "control" { 0.1 } else { 0.2 });
    let out = dysaug(dir.path(), &[CFG, "estimate-factors"], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("M02"));
}

#[test]
fn speed_tag_triples_target_speech() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let utts: Vec<Utt> = (0..100)
        .map(|i| Utt { id: format!("t{i:03}"), speaker: "F03".into(), group: "target", secs: 0.12, word: None })
        .collect();
    write_corpus(d, &utts);
    write_config(d, "[augment]\ntags = [\"S\"]\n");
    let profile = SpeakerProfile {
        speaker_id: "F03".into(),
        sd_factor: 0.8,
        mean_phone_duration: 0.1,
        feat_mean: vec![],
        feat_std: vec![],
    };
    std::fs::create_dir_all(d.join("work")).unwrap();
    ProfileSet { control_mean_phone_duration: 0.08, profiles: vec![profile] }
        .save(d.join("work/profiles.tsv"))
        .unwrap();
    ok(dysaug(d, &[CFG, "augment"], &[]));
    let recs = read_archive_records(d.join("augmented/S.dafa")).unwrap();
    assert_eq!(recs.len(), 300);
    let report = std::fs::read_to_string(d.join("augmented/augment_report.tsv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("S\t") && l.contains("\t300\t300\t0\t")), "{report}");
}

#[test]
fn augment_requires_checkpoints() {
    let (dir, _) = setup("");
    let d = dir.path();
    ok(dysaug(d, &[CFG, "estimate-factors"], &[]));
    let out = dysaug(d, &[CFG, "--augment.tags=TG", "augment"], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dcgan_tempo_F01.ckpt"));
    assert_eq!(code(&dysaug(d, &[CFG, "--augment.tags=SBG", "augment"], &[])), 2);
}

#[test]
fn perturb_single_file() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_wav(d.join("in.wav"), &Waveform::<f32>::sine(220.0, 0.3, SR, 8000)).unwrap();
    ok(dysaug(d, &["perturb", "--method=speed", "--factor=0.5", "in.wav", "slow.wav"], &[]));
    ok(dysaug(d, &["perturb", "--method=tempo", "--factor=2", "in.wav", "long.wav"], &[]));
    let len = |p: &str| dysaug::signal::read_wav::<f32>(d.join(p)).unwrap().len();
    assert_eq!(len("slow.wav"), 16000);
    assert!(len("long.wav").abs_diff(16000) <= 512);
}

fn full_pipeline(d: &Path) {
    for verb in ["extract", "estimate-factors", "pair", "train-dcgan", "train-sbg"] {
        ok(dysaug(d, &[CFG, verb], &[]));
    }
}

#[test]
fn end_to_end_pipeline() {
    let (dir, utts) = setup("");
    let d = dir.path();
    full_pipeline(d);
    ok(dysaug(d, &[CFG, "augment"], &[]));

    let n_control = utts.iter().filter(|u| u.group == "control").count();
    let n_target = utts.len() - n_control;
    for (stem, extra) in [("T", 0), ("S", 3 * n_target), ("TG", 0), ("SG", 0), ("SBG", 0), ("SBG_SG", 0)] {
        let recs = read_archive_records(d.join(format!("augmented/{stem}.dafa"))).unwrap();
        assert_eq!(recs.len(), n_control * 2 + extra, "{stem}");
        assert!(recs.iter().all(|(_, m)| m.rows() == 40 && m.is_finite()), "{stem}");
    }
    let prov = read_provenance(&d.join("augmented/SBG_SG.dafa")).unwrap();
    for (id, src, tag, stages) in &prov {
        assert_eq!(tag, "SBG+SG");
        assert_eq!(stages, &["speed_perturb", "sbg", "dcgan"], "{id}");
        assert!(id.starts_with(&format!("{src}__SBG+SG_")));
    }
    let prov = read_provenance(&d.join("augmented/T.dafa")).unwrap();
    assert!(prov.iter().all(|(_, _, _, st)| st == &["tempo_perturb"]));

    // the tempo copies of a twice-slower speaker are about twice as long
    let feats = read_archive(d.join("work/features.dafa")).unwrap();
    let t = read_archive(d.join("augmented/T.dafa")).unwrap();
    let (src, out) = (feats["c0"].cols() as f64, t["c0__T_F01"].cols() as f64);
    assert!((out / src - 2.0).abs() < 0.15, "{src} -> {out}");

    for path in ["augmented/SG.dafa", "work/models/sbg.ckpt", "work/models/dcgan_speed_M02.ckpt"] {
        ok(dysaug(d, &["inspect", "--records", path], &[]));
    }
}

#[test]
fn sbg_with_zero_lambda_is_identity_and_flagged() {
    let (dir, _) = setup("");
    let d = dir.path();
    for verb in ["extract", "pair", "train-sbg"] {
        ok(dysaug(d, &[CFG, verb], &[]));
    }
    ok(dysaug(d, &[CFG, "--augment.tags=SBG", "--sbg.lambda=0", "augment"], &[]));
    let feats = read_archive(d.join("work/features.dafa")).unwrap();
    let out = read_archive(d.join("augmented/SBG.dafa")).unwrap();
    assert_eq!(out.len(), 6);
    for (id, m) in &out {
        let src = &feats[id.split("__").next().unwrap()];
        assert!(m.max_abs_diff(src) < 1e-4, "{id}: {}", m.max_abs_diff(src));
    }
    let report = std::fs::read_to_string(d.join("augmented/augment_report.tsv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("SBG\t") && l.ends_with("\tyes")), "{report}");
}

#[test]
fn lambda_sweep_is_monotone() {
    let (dir, _) = setup("");
    let d = dir.path();
    for verb in ["extract", "pair", "train-sbg"] {
        ok(dysaug(d, &[CFG, verb], &[]));
    }
    ok(dysaug(d, &[CFG, "sweep-lambda"], &[]));
    let archives = std::fs::read_dir(d.join("augmented/sweep"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "dafa"))
        .count();
    assert_eq!(archives, 7);
    let table = std::fs::read_to_string(d.join("augmented/sweep/deviation.tsv")).unwrap();
    let devs: Vec<f64> = table.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(devs.len(), 7);
    assert!(devs.windows(2).all(|w| w[0] <= w[1]), "{devs:?}");
    assert!(devs[0] < devs[6]);

    ok(dysaug(d, &[CFG, "--sweep.grid=0,0.1", "sweep-lambda"], &[]));
    let table = std::fs::read_to_string(d.join("augmented/sweep/deviation.tsv")).unwrap();
    let zero: f64 = table.lines().nth(1).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(zero < 1e-9, "{zero}");
}

#[test]
fn augmentation_is_deterministic() {
    let (dir, _) = setup("");
    let d = dir.path();
    full_pipeline(d);
    ok(dysaug(d, &[CFG, "--paths.output_dir=run_a", "augment"], &[]));
    // retrain from scratch and augment again
    std::fs::remove_dir_all(d.join("work")).unwrap();
    full_pipeline(d);
    ok(dysaug(d, &[CFG, "--paths.output_dir=run_b", "augment"], &[]));
    for stem in ["T", "S", "TG", "SG", "SBG", "SBG_SG"] {
        let a = std::fs::read(d.join(format!("run_a/{stem}.dafa"))).unwrap();
        let b = std::fs::read(d.join(format!("run_b/{stem}.dafa"))).unwrap();
        assert!(a == b, "{stem} differs");
    }
}
