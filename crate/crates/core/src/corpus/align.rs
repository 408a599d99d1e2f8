use std::collections::HashSet;

use super::{CorpusError, Result, Utterance};

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub phoneme: String,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Phone-level segmentation of one utterance; segments are sorted and disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeAlignment {
    pub utt_id: String,
    pub segments: Vec<Segment>,
}

impl PhonemeAlignment {
    pub fn new(utt_id: impl Into<String>, segments: Vec<Segment>) -> std::result::Result<Self, String> {
        for s in &segments {
            if !(s.end > s.start && s.start >= 0.0 && s.end.is_finite()) {
                return Err(format!("segment {} [{}, {}] is empty or invalid", s.phoneme, s.start, s.end));
            }
        }
        for w in segments.windows(2) {
            if w[1].start < w[0].end {
                return Err(format!("segments {} and {} overlap or are unsorted", w[0].phoneme, w[1].phoneme));
            }
        }
        Ok(Self { utt_id: utt_id.into(), segments })
    }

    /// Same alignment with every time multiplied by `k`.
    pub fn time_scaled(&self, k: f64) -> Self {
        Self {
            utt_id: self.utt_id.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| Segment { phoneme: s.phoneme.clone(), start: s.start * k, end: s.end * k })
                .collect(),
        }
    }
}

/// Labels excluded from duration statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SilenceLabels(HashSet<String>);

impl Default for SilenceLabels {
    fn default() -> Self {
        Self::new(["sil", "sp", "spn", "noise"])
    }
}

impl SilenceLabels {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        Self(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }
}

/// Parses `utt_id phoneme start_s end_s` lines, grouping consecutive
/// utterance ids in first-appearance order.
pub fn parse_alignments(text: &str) -> Result<Vec<PhonemeAlignment>> {
    let mut out: Vec<(String, Vec<Segment>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CorpusError::Parse { line: i + 1, msg };
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [utt, phone, start, end] = cols[..] else {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        };
        let start: f64 = start.parse().map_err(|e| err(format!("start: {e}")))?;
        let end: f64 = end.parse().map_err(|e| err(format!("end: {e}")))?;
        let seg = Segment { phoneme: phone.to_string(), start, end };
        match out.iter_mut().find(|(u, _)| u == utt) {
            Some((_, segs)) => segs.push(seg),
            None => out.push((utt.to_string(), vec![seg])),
        }
    }
    out.into_iter()
        .map(|(utt, segs)| {
            PhonemeAlignment::new(utt.clone(), segs)
                .map_err(|msg| CorpusError::Parse { line: 0, msg: format!("{utt}: {msg}") })
        })
        .collect()
}

/// Mean duration over all non-silence phone tokens.
pub fn mean_phone_duration(aligns: &[PhonemeAlignment], silence: &SilenceLabels) -> Result<f64> {
    if aligns.iter().all(|a| a.segments.is_empty()) {
        return Err(CorpusError::EmptyAlignment);
    }
    let (sum, n) = aligns
        .iter()
        .flat_map(|a| &a.segments)
        .filter(|s| !silence.contains(&s.phoneme))
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.duration(), n + 1));
    if n == 0 {
        return Err(CorpusError::AllSilence);
    }
    Ok(sum / n as f64)
}

/// Speaker-dependent factor `mean control phone duration / mean target phone duration`.
///
/// Slower target speakers get factors below one; speed-perturbing control
/// speech by such a factor lengthens it.
pub fn estimate_sd_factor(
    target_aligns: &[PhonemeAlignment],
    control_aligns: &[PhonemeAlignment],
    silence: &SilenceLabels,
) -> Result<f64> {
    let control = mean_phone_duration(control_aligns, silence)?;
    let target = mean_phone_duration(target_aligns, silence)?;
    Ok(control / target)
}

/// Tempo factor that stretches `control` to the duration of `target`.
///
/// With [`crate::signal::tempo_perturb`] semantics (output duration is
/// factor times input) this is `target / control`; the matching
/// [`crate::signal::speed_perturb`] factor is its reciprocal.
pub fn pair_scale_factor(control: &Utterance, target: &Utterance, require_same_word: bool) -> Result<f64> {
    for u in [control, target] {
        if !(u.duration > 0.0 && u.duration.is_finite()) {
            return Err(CorpusError::ZeroDuration(u.utt_id.clone()));
        }
    }
    if require_same_word && (control.word_id.is_none() || control.word_id != target.word_id) {
        return Err(CorpusError::WordMismatch { control: control.word_id.clone(), target: target.word_id.clone() });
    }
    Ok(target.duration / control.duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Group;

    fn align(id: &str, durs: &[(&str, f64)]) -> PhonemeAlignment {
        let mut t = 0.0;
        let segs = durs
            .iter()
            .map(|&(p, d)| {
                let s = Segment { phoneme: p.to_string(), start: t, end: t + d };
                t += d;
                s
            })
            .collect();
        PhonemeAlignment::new(id, segs).unwrap()
    }

    fn utt(id: &str, dur: f64, word: Option<&str>) -> Utterance {
        Utterance {
            utt_id: id.into(),
            speaker_id: "s".into(),
            group: Group::Control,
            audio_path: "x.wav".into(),
            duration: dur,
            word_id: word.map(Into::into),
            tag: None,
        }
    }

    #[test]
    fn equal_durations_give_unity() {
        let a = vec![align("a", &[("k", 0.1), ("ae", 0.2)])];
        let b = vec![align("b", &[("sil", 1.0), ("t", 0.15), ("sp", 0.3), ("iy", 0.15)])];
        assert!((estimate_sd_factor(&b, &a, &SilenceLabels::default()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slower_target_gives_half() {
        let control = vec![align("c1", &[("a", 0.06), ("b", 0.10)]), align("c2", &[("c", 0.08)])];
        let target = vec![align("t1", &[("a", 0.12), ("b", 0.20), ("sil", 2.0)]), align("t2", &[("c", 0.16)])];
        let f = estimate_sd_factor(&target, &control, &SilenceLabels::default()).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
        assert!(f < 1.0);
    }

    #[test]
    fn silence_only_and_empty_lists_fail() {
        let sil = vec![align("s", &[("sil", 0.5), ("noise", 0.2)])];
        let ok = vec![align("o", &[("a", 0.1)])];
        assert!(matches!(estimate_sd_factor(&sil, &ok, &SilenceLabels::default()), Err(CorpusError::AllSilence)));
        assert!(matches!(estimate_sd_factor(&[], &ok, &SilenceLabels::default()), Err(CorpusError::EmptyAlignment)));
    }

    #[test]
    fn pair_factors() {
        let f = pair_scale_factor(&utt("c", 1.0, Some("w")), &utt("t", 2.0, Some("w")), true).unwrap();
        assert_eq!(f, 2.0);
        let f = pair_scale_factor(&utt("c", 1.5, None), &utt("t", 1.0, None), false).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pair_scale_factor(&utt("c", 1.2, None), &utt("t", 1.2, None), false).unwrap(), 1.0);
        assert!(matches!(
            pair_scale_factor(&utt("c", 1.0, Some("a")), &utt("t", 2.0, Some("b")), true),
            Err(CorpusError::WordMismatch { .. })
        ));
        assert!(matches!(
            pair_scale_factor(&utt("c", 0.0, None), &utt("t", 2.0, None), false),
            Err(CorpusError::ZeroDuration(_))
        ));
    }

    #[test]
    fn alignment_parsing() {
        let text = "u1 sil 0.0 0.2\nu1 k 0.2 0.3\nu2 a 0 0.1\n";
        let al = parse_alignments(text).unwrap();
        assert_eq!(al.len(), 2);
        assert_eq!(al[0].segments.len(), 2);
        assert!(parse_alignments("u1 k 0.3 0.2\n").is_err());
        assert!(parse_alignments("u1 k 0.0 0.2\nu1 a 0.1 0.3\n").is_err());
        assert!(parse_alignments("u1 k 0.0\n").is_err());
    }
}
