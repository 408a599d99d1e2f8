use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_fields, CorpusError, Result, Utterance};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Target token standing for the speaker's mean spectral bases.
pub const MEAN_BASES: &str = "MEAN_BASES";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairStrategy {
    /// Each control utterance paired with one uniformly drawn target utterance.
    Rand,
    /// Each control utterance paired with the target speaker's mean bases.
    Avg,
    /// Every control utterance with every target utterance.
    Exhaustive,
    /// Every control utterance with each target utterance of the same word.
    Parallel,
}

impl fmt::Display for PairStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairStrategy::Rand => "rand",
            PairStrategy::Avg => "avg",
            PairStrategy::Exhaustive => "exhaustive",
            PairStrategy::Parallel => "parallel",
        })
    }
}

impl FromStr for PairStrategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rand" => Ok(Self::Rand),
            "avg" => Ok(Self::Avg),
            "exhaustive" => Ok(Self::Exhaustive),
            "parallel" => Ok(Self::Parallel),
            other => Err(format!("unknown pairing strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetRef {
    Utterance(String),
    MeanBases,
}

impl fmt::Display for TargetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetRef::Utterance(id) => f.write_str(id),
            TargetRef::MeanBases => f.write_str(MEAN_BASES),
        }
    }
}

impl From<&str> for TargetRef {
    fn from(s: &str) -> Self {
        if s == MEAN_BASES {
            TargetRef::MeanBases
        } else {
            TargetRef::Utterance(s.to_string())
        }
    }
}

/// Control-to-target pairing for one target speaker.
///
/// Text form: a header record `strategy=..<TAB>speaker=..<TAB>seed=..`
/// followed by one `source=..<TAB>target=..` record per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairManifest {
    pub strategy: PairStrategy,
    pub target_speaker: String,
    pub seed: u64,
    pub pairs: Vec<(String, TargetRef)>,
}

pub fn make_pairs(
    strategy: PairStrategy,
    control: &[Utterance],
    target: &[Utterance],
    seed: u64,
) -> Result<PairManifest> {
    if control.is_empty() {
        return Err(CorpusError::EmptySide("control"));
    }
    if target.is_empty() {
        return Err(CorpusError::EmptySide("target"));
    }
    let mut speakers: Vec<String> = Vec::new();
    for u in target {
        if !speakers.contains(&u.speaker_id) {
            speakers.push(u.speaker_id.clone());
        }
    }
    if speakers.len() > 1 {
        return Err(CorpusError::MixedTargetSpeakers(speakers));
    }
    let tgt = |u: &Utterance| TargetRef::Utterance(u.utt_id.clone());
    let pairs: Vec<(String, TargetRef)> = match strategy {
        PairStrategy::Rand => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            control.iter().map(|c| (c.utt_id.clone(), tgt(&target[rng.random_range(0..target.len())]))).collect()
        }
        PairStrategy::Avg => control.iter().map(|c| (c.utt_id.clone(), TargetRef::MeanBases)).collect(),
        PairStrategy::Exhaustive => {
            control.iter().flat_map(|c| target.iter().map(move |t| (c.utt_id.clone(), tgt(t)))).collect()
        }
        PairStrategy::Parallel => {
            if let Some(u) = control.iter().chain(target).find(|u| u.word_id.is_none()) {
                return Err(CorpusError::MissingWordIds(u.utt_id.clone()));
            }
            control
                .iter()
                .flat_map(|c| {
                    target.iter().filter(move |t| t.word_id == c.word_id).map(move |t| (c.utt_id.clone(), tgt(t)))
                })
                .collect()
        }
    };
    Ok(PairManifest { strategy, target_speaker: speakers.remove(0), seed, pairs })
}

/// Elementwise mean of equally shaped (sign-canonical) basis matrices.
pub fn mean_bases<T: Scalar>(bases: &[&Matrix<T>]) -> Result<Matrix<T>> {
    let first = bases.first().ok_or(CorpusError::EmptyInput)?;
    let mut acc = Matrix::<T>::zeros(first.rows(), first.cols());
    for b in bases {
        if b.shape() != first.shape() {
            return Err(CorpusError::ChannelMismatch { expected: first.rows(), found: b.rows() });
        }
        for (a, &v) in acc.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *a += v;
        }
    }
    let n = T::of_usize(bases.len());
    Ok(acc.map(|v| v / n))
}

impl PairManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("strategy={}\tspeaker={}\tseed={}\n", self.strategy, self.target_speaker, self.seed);
        for (s, t) in &self.pairs {
            out.push_str(&format!("source={s}\ttarget={t}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(CorpusError::Parse { line: 0, msg: "empty pair manifest".into() })?;
        let err = |line: usize, msg: String| CorpusError::Parse { line, msg };
        let (mut strategy, mut speaker, mut seed) = (None, None, None);
        for (k, v) in parse_fields(header, hl + 1)? {
            match k {
                "strategy" => strategy = Some(v.parse::<PairStrategy>().map_err(|m| err(hl + 1, m))?),
                "speaker" => speaker = Some(v.to_string()),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| err(hl + 1, format!("seed: {e}")))?),
                other => return Err(err(hl + 1, format!("unknown header field {other:?}"))),
            }
        }
        let mut pairs = Vec::new();
        for (i, line) in lines {
            let (mut s, mut t) = (None, None);
            for (k, v) in parse_fields(line, i + 1)? {
                match k {
                    "source" => s = Some(v.to_string()),
                    "target" => t = Some(TargetRef::from(v)),
                    other => return Err(err(i + 1, format!("unknown field {other:?}"))),
                }
            }
            match (s, t) {
                (Some(s), Some(t)) => pairs.push((s, t)),
                _ => return Err(err(i + 1, "pair record needs source and target".into())),
            }
        }
        Ok(Self {
            strategy: strategy.ok_or_else(|| err(hl + 1, "missing strategy".into()))?,
            target_speaker: speaker.ok_or_else(|| err(hl + 1, "missing speaker".into()))?,
            seed: seed.ok_or_else(|| err(hl + 1, "missing seed".into()))?,
            pairs,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Group;

    fn utts(prefix: &str, speaker: &str, n: usize, words: bool) -> Vec<Utterance> {
        (0..n)
            .map(|i| Utterance {
                utt_id: format!("{prefix}{i}"),
                speaker_id: speaker.into(),
                group: if prefix == "c" { Group::Control } else { Group::Target },
                audio_path: format!("{prefix}{i}.wav"),
                duration: 1.0,
                word_id: words.then(|| format!("w{}", i % 2)),
                tag: None,
            })
            .collect()
    }

    #[test]
    fn count_laws() {
        let c = utts("c", "CM", 3, true);
        let t = utts("t", "F02", 4, true);
        assert_eq!(make_pairs(PairStrategy::Exhaustive, &c, &t, 0).unwrap().pairs.len(), 12);
        let r = make_pairs(PairStrategy::Rand, &c, &t, 9).unwrap();
        assert_eq!(r.pairs.iter().map(|p| p.0.as_str()).collect::<Vec<_>>(), ["c0", "c1", "c2"]);
        let a = make_pairs(PairStrategy::Avg, &utts("c", "CM", 5, false), &t, 0).unwrap();
        assert_eq!(a.pairs.len(), 5);
        assert!(a.pairs.iter().all(|p| p.1 == TargetRef::MeanBases));
        let p = make_pairs(PairStrategy::Parallel, &c, &t, 0).unwrap();
        // c0,c2 say w0 (t0,t2); c1 says w1 (t1,t3)
        assert_eq!(p.pairs.len(), 6);
        assert!(p.pairs.contains(&("c1".into(), TargetRef::Utterance("t3".into()))));
    }

    #[test]
    fn rand_is_reproducible() {
        let c = utts("c", "CM", 20, false);
        let t = utts("t", "F02", 7, false);
        let a = make_pairs(PairStrategy::Rand, &c, &t, 42).unwrap();
        let b = make_pairs(PairStrategy::Rand, &c, &t, 42).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(PairManifest::parse(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn error_cases() {
        let c = utts("c", "CM", 2, false);
        let t = utts("t", "F02", 2, false);
        assert!(matches!(make_pairs(PairStrategy::Rand, &[], &t, 0), Err(CorpusError::EmptySide("control"))));
        assert!(matches!(make_pairs(PairStrategy::Rand, &c, &[], 0), Err(CorpusError::EmptySide("target"))));
        assert!(matches!(make_pairs(PairStrategy::Parallel, &c, &t, 0), Err(CorpusError::MissingWordIds(_))));
        let mut mixed = t.clone();
        mixed[1].speaker_id = "M05".into();
        assert!(matches!(make_pairs(PairStrategy::Avg, &c, &mixed, 0), Err(CorpusError::MixedTargetSpeakers(_))));
    }

    #[test]
    fn mean_of_bases() {
        let a = Matrix::from_vec(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Matrix::from_vec(2, 2, vec![3.0f64, 2.0, 1.0, 0.0]);
        assert_eq!(mean_bases(&[&a, &b]).unwrap().as_slice(), &[2.0, 2.0, 2.0, 2.0]);
        assert!(mean_bases::<f64>(&[]).is_err());
    }
}
