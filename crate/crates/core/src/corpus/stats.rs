use std::path::Path;

use super::{parse_fields, CorpusError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Lower bound applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and population standard deviation pooled over all
/// frames of one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerStats<T: Scalar> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> SpeakerStats<T> {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Inverse of [`normalize_with`].
    pub fn denormalize(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(x)?;
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] * self.std[i] + self.mean[i]))
    }

    fn check(&self, x: &Matrix<T>) -> Result<()> {
        if x.rows() != self.channels() {
            return Err(CorpusError::ChannelMismatch { expected: self.channels(), found: x.rows() });
        }
        Ok(())
    }
}

pub fn compute_speaker_stats<T: Scalar>(specs: &[&Matrix<T>]) -> Result<SpeakerStats<T>> {
    let first = specs.first().ok_or(CorpusError::EmptyInput)?;
    let c = first.rows();
    let mut sum = vec![0.0f64; c];
    let mut frames = 0usize;
    for s in specs {
        if s.rows() != c {
            return Err(CorpusError::ChannelMismatch { expected: c, found: s.rows() });
        }
        for (i, acc) in sum.iter_mut().enumerate() {
            *acc += s.row(i).iter().map(|v| v.f64()).sum::<f64>();
        }
        frames += s.cols();
    }
    if frames == 0 {
        return Err(CorpusError::EmptyInput);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / frames as f64).collect();
    let mut var = vec![0.0f64; c];
    for s in specs {
        for (i, acc) in var.iter_mut().enumerate() {
            *acc += s.row(i).iter().map(|v| (v.f64() - mean[i]).powi(2)).sum::<f64>();
        }
    }
    Ok(SpeakerStats {
        mean: mean.iter().map(|&m| T::of(m)).collect(),
        std: var.iter().map(|&v| T::of((v / frames as f64).sqrt().max(STD_FLOOR))).collect(),
    })
}

/// `(x - mean) / std` per channel.
pub fn normalize_with<T: Scalar>(x: &Matrix<T>, stats: &SpeakerStats<T>) -> Result<Matrix<T>> {
    stats.check(x)?;
    Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - stats.mean[i]) / stats.std[i]))
}

/// Per-target-speaker record written by factor estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub sd_factor: f64,
    pub mean_phone_duration: f64,
    /// Empty until feature statistics are computed.
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
}

/// Control-side mean phone duration plus one profile per target speaker.
///
/// Text form: a `kind=control` record followed by `kind=speaker` records,
/// tab-separated `key=value` fields, float lists comma-separated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileSet {
    pub control_mean_phone_duration: f64,
    pub profiles: Vec<SpeakerProfile>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split(s: &str, line: usize) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse::<f64>().map_err(|e| CorpusError::Parse { line, msg: format!("{x:?}: {e}") }))
        .collect()
}

impl ProfileSet {
    pub fn get(&self, speaker: &str) -> Option<&SpeakerProfile> {
        self.profiles.iter().find(|p| p.speaker_id == speaker)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("kind=control\tmean_phone_duration={}\n", self.control_mean_phone_duration);
        for p in &self.profiles {
            out.push_str(&format!(
                "kind=speaker\tspeaker={}\tsd_factor={}\tmean_phone_duration={}\tfeat_mean={}\tfeat_std={}\n",
                p.speaker_id,
                p.sd_factor,
                p.mean_phone_duration,
                join(&p.feat_mean),
                join(&p.feat_std)
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = ProfileSet::default();
        let mut have_control = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let err = |msg: String| CorpusError::Parse { line, msg };
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{v:?}: {e}")));
            let fields = parse_fields(raw, line)?;
            match fields.first() {
                Some(&("kind", "control")) => {
                    for &(k, v) in &fields[1..] {
                        match k {
                            "mean_phone_duration" => set.control_mean_phone_duration = num(v)?,
                            other => return Err(err(format!("unknown field {other:?}"))),
                        }
                    }
                    have_control = true;
                }
                Some(&("kind", "speaker")) => {
                    let mut p = SpeakerProfile {
                        speaker_id: String::new(),
                        sd_factor: f64::NAN,
                        mean_phone_duration: f64::NAN,
                        feat_mean: Vec::new(),
                        feat_std: Vec::new(),
                    };
                    for &(k, v) in &fields[1..] {
                        match k {
                            "speaker" => p.speaker_id = v.to_string(),
                            "sd_factor" => p.sd_factor = num(v)?,
                            "mean_phone_duration" => p.mean_phone_duration = num(v)?,
                            "feat_mean" => p.feat_mean = split(v, line)?,
                            "feat_std" => p.feat_std = split(v, line)?,
                            other => return Err(err(format!("unknown field {other:?}"))),
                        }
                    }
                    if p.speaker_id.is_empty() || !(p.sd_factor > 0.0) || p.feat_mean.len() != p.feat_std.len() {
                        return Err(err("incomplete speaker record".into()));
                    }
                    if p.feat_std.iter().any(|&s| !(s > 0.0)) {
                        return Err(err("feature std must be positive".into()));
                    }
                    set.profiles.push(p);
                }
                _ => return Err(err("record must start with kind=control or kind=speaker".into())),
            }
        }
        if !have_control {
            return Err(CorpusError::Parse { line: 0, msg: "missing kind=control record".into() });
        }
        Ok(set)
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

    #[test]
    fn pooled_stats_and_normalization() {
        let a = Matrix::from_vec(2, 2, vec![1.0f64, 3.0, 5.0, 5.0]);
        let b = Matrix::from_vec(2, 2, vec![5.0f64, 7.0, 5.0, 5.0]);
        let st = compute_speaker_stats(&[&a, &b]).unwrap();
        assert_eq!(st.mean, vec![4.0, 5.0]);
        assert!((st.std[0] - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(st.std[1], STD_FLOOR);
        let n = normalize_with(&a, &st).unwrap();
        assert!(n.is_finite());
        assert!(st.denormalize(&n).unwrap().max_abs_diff(&a) < 1e-12);
        let wrong = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(normalize_with(&wrong, &st), Err(CorpusError::ChannelMismatch { .. })));
        assert!(matches!(compute_speaker_stats::<f64>(&[]), Err(CorpusError::EmptyInput)));
    }

    #[test]
    fn profile_round_trip() {
        let set = ProfileSet {
            control_mean_phone_duration: 0.0812345678901,
            profiles: vec![
                SpeakerProfile {
                    speaker_id: "F02".into(),
                    sd_factor: 0.5123,
                    mean_phone_duration: 0.16,
                    feat_mean: vec![-3.25, 1e-7],
                    feat_std: vec![0.1, 2.0],
                },
                SpeakerProfile {
                    speaker_id: "M05".into(),
                    sd_factor: 0.9,
                    mean_phone_duration: 0.09,
                    feat_mean: vec![],
                    feat_std: vec![],
                },
            ],
        };
        assert_eq!(ProfileSet::parse(&set.to_text()).unwrap(), set);
        assert!(ProfileSet::parse("kind=speaker\tspeaker=x\tsd_factor=1\n").is_err());
    }
}
