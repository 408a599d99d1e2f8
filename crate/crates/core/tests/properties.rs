use std::collections::BTreeMap;

use dysaug::corpus::{
    decode_archive, make_pairs, read_archive, write_archive, Group, Manifest, PairManifest, PairStrategy, Utterance,
};
use dysaug::matrix::Matrix;
use dysaug::signal::{speed_perturb, tempo_perturb, Waveform, WsolaConfig};
use dysaug::subspace::{apply_perturbation, svd_matrix};
use proptest::prelude::*;

fn utt(id: String, spk: &str, group: Group) -> Utterance {
    Utterance {
        utt_id: id.clone(),
        speaker_id: spk.into(),
        group,
        audio_path: format!("{id}.wav"),
        duration: 1.5,
        word_id: Some("w".into()),
        tag: None,
    }
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn perturbed_bases_stay_within_lambda(
        u in matrix(6, 6),
        d in prop::collection::vec(-1.0f64..=1.0, 36),
        lambda in 0.0f64..5.0,
    ) {
        let out = apply_perturbation(&u, &Matrix::from_vec(6, 6, d), lambda).unwrap();
        prop_assert!(out.max_abs_diff(&u) <= lambda);
    }

    #[test]
    fn svd_reconstructs(s in (1usize..7, 1usize..12).prop_flat_map(|(r, c)| matrix(r, c))) {
        let svd = svd_matrix(&s).unwrap();
        let back = svd.recompose();
        prop_assert!(back.frobenius_distance(&s) <= 1e-10 * s.frobenius_norm().max(1.0));
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn speed_length_law(len in 2000usize..6000, alpha in 0.5f64..2.0) {
        let w = Waveform::<f64>::sine(440.0, 0.4, 16_000, len);
        let out = speed_perturb(&w, alpha).unwrap();
        prop_assert!(out.len().abs_diff((len as f64 / alpha).round() as usize) <= 1);
    }

    #[test]
    fn tempo_length_law(len in 4000usize..9000, alpha in 0.5f64..2.0) {
        let cfg = WsolaConfig::for_sample_rate(16_000);
        let w = Waveform::<f64>::sine(210.0, 0.4, 16_000, len);
        let out = tempo_perturb(&w, alpha, &cfg).unwrap();
        prop_assert!((out.len() as f64 - alpha * len as f64).abs() <= cfg.frame_len as f64);
    }

    #[test]
    fn archive_round_trip(shapes in prop::collection::vec((1usize..5, 0usize..7), 1..8), seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.dafa");
        let mut x = seed;
        let mut feats = BTreeMap::new();
        for (k, (r, c)) in shapes.iter().enumerate() {
            let m = Matrix::from_fn(*r, *c, |_, _| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f32::from_bits((x >> 32) as u32 & 0x7f7f_ffff)
            });
            feats.insert(format!("r{k}"), m);
        }
        write_archive(&path, &feats).unwrap();
        let back = read_archive(&path).unwrap();
        prop_assert_eq!(back.len(), feats.len());
        for (id, m) in &feats {
            let b = &back[id];
            prop_assert_eq!(b.shape(), m.shape());
            let same = b.as_slice().iter().zip(m.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits());
            prop_assert!(same);
        }
        let bytes = std::fs::read(&path).unwrap();
        for cut in [1, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(decode_archive(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn pairing_counts_and_round_trip(nc in 1usize..15, nt in 1usize..15, seed in any::<u64>()) {
        let control: Vec<_> = (0..nc).map(|i| utt(format!("c{i}"), "CTL", Group::Control)).collect();
        let target: Vec<_> = (0..nt).map(|i| utt(format!("t{i}"), "F01", Group::Target)).collect();
        for (strategy, expected) in [
            (PairStrategy::Rand, nc),
            (PairStrategy::Avg, nc),
            (PairStrategy::Exhaustive, nc * nt),
            (PairStrategy::Parallel, nc * nt),
        ] {
            let pm = make_pairs(strategy, &control, &target, seed).unwrap();
            prop_assert_eq!(pm.pairs.len(), expected);
            prop_assert_eq!(PairManifest::parse(&pm.to_text()).unwrap(), pm);
        }
        let a = make_pairs(PairStrategy::Rand, &control, &target, seed).unwrap().to_text();
        let b = make_pairs(PairStrategy::Rand, &control, &target, seed).unwrap().to_text();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn manifest_round_trip(n in 1usize..20, dur in 0.01f64..30.0) {
        let utts: Vec<_> = (0..n)
            .map(|i| Utterance { duration: dur * (i + 1) as f64, ..utt(format!("u{i}"), "S", if i % 2 == 0 { Group::Control } else { Group::Target }) })
            .collect();
        let m = Manifest::new(utts).unwrap();
        prop_assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }
}
