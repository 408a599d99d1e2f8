//! Waveform-similarity overlap-add time-scale modification.

use super::{check_alpha, Result, SignalError, Waveform, WindowKind};
use crate::scalar::Scalar;

/// Analysis parameters for [`tempo_perturb`], all in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsolaConfig {
    pub frame_len: usize,
    pub analysis_hop: usize,
    /// Search radius for the block offset.
    pub delta_max: usize,
    pub window: WindowKind,
}

impl WsolaConfig {
    /// 32 ms blocks, 8 ms analysis hop, 7.9 ms search radius, Hann window.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let sr = f64::from(sample_rate);
        Self {
            frame_len: (0.032 * sr).round() as usize,
            analysis_hop: (0.008 * sr).round() as usize,
            delta_max: (0.0079 * sr).floor() as usize,
            window: WindowKind::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.analysis_hop == 0 || self.analysis_hop > self.frame_len {
            return Err(SignalError::InvalidWsolaConfig(format!(
                "analysis_hop {} must be in 1..={}",
                self.analysis_hop, self.frame_len
            )));
        }
        if self.delta_max >= self.analysis_hop {
            return Err(SignalError::InvalidWsolaConfig(format!(
                "delta_max {} must be below analysis_hop {}",
                self.delta_max, self.analysis_hop
            )));
        }
        Ok(())
    }
}

impl Default for WsolaConfig {
    fn default() -> Self {
        Self::for_sample_rate(16_000)
    }
}

/// Stretches `wave` to `alpha` times its duration without moving its pitch.
///
/// Analysis blocks are taken every `analysis_hop` samples and laid down every
/// `alpha * analysis_hop` samples. Each block may slide by up to `delta_max`
/// samples; the offset is the one whose block best matches (normalized
/// cross-correlation) the natural continuation of the previously placed
/// block, ties going to the smallest offset. The overlap-add is divided by
/// the accumulated window weight. Output length is `round(alpha * len)`.
pub fn tempo_perturb<T: Scalar>(wave: &Waveform<T>, alpha: f64, cfg: &WsolaConfig) -> Result<Waveform<T>> {
    check_alpha(alpha)?;
    cfg.validate()?;
    let n = wave.len();
    if n <= cfg.frame_len {
        return Err(SignalError::WaveTooShort { len: n, needed: cfg.frame_len });
    }
    wave.check_finite()?;

    let frame = cfg.frame_len;
    let hop = cfg.analysis_hop;
    let pad = frame;
    let end_pad = 2 * frame + (alpha.ceil() as usize + 2) * hop + cfg.delta_max;
    let mut x = vec![T::zero(); pad + n + end_pad];
    x[pad..pad + n].copy_from_slice(&wave.samples);

    let win: Vec<T> = cfg.window.build(frame);
    let out_len = (alpha * n as f64).round() as usize;
    let origin = (alpha * pad as f64).round() as usize;
    let buf_len = origin + out_len + 2 * frame;
    let mut acc = vec![T::zero(); buf_len];
    let mut wsum = vec![T::zero(); buf_len];

    let synthesis_hop = alpha * hop as f64;
    let mut prev: Option<(usize, usize)> = None; // (analysis start, synthesis start)
    for m in 0.. {
        let syn = (m as f64 * synthesis_hop).round() as usize;
        if syn >= origin + out_len {
            break;
        }
        let nominal = m * hop;
        let start = match prev {
            None => nominal,
            Some((prev_start, prev_syn)) => {
                let template = prev_start + (syn - prev_syn);
                best_offset(&x, nominal, template, frame, cfg.delta_max)
            }
        };
        for r in 0..frame {
            let pos = syn + r;
            if pos >= buf_len {
                break;
            }
            acc[pos] += win[r] * x[start + r];
            wsum[pos] += win[r];
        }
        prev = Some((start, syn));
    }

    let eps = T::of(1e-3);
    let samples = (0..out_len)
        .map(|k| {
            let i = origin + k;
            acc[i] / wsum[i].max(eps)
        })
        .collect();
    Ok(Waveform::new(samples, wave.sample_rate))
}

/// Candidate start in `nominal ± delta_max` maximizing the normalized
/// cross-correlation with the block starting at `template`.
fn best_offset<T: Scalar>(x: &[T], nominal: usize, template: usize, frame: usize, delta_max: usize) -> usize {
    let tmpl = &x[template..template + frame];
    let mut best_start = nominal;
    let mut best_score = ncc(&x[nominal..nominal + frame], tmpl);
    let rel = T::of(1e-9);
    for d in 1..=delta_max {
        for cand in [nominal.checked_sub(d), Some(nominal + d)].into_iter().flatten() {
            if cand + frame > x.len() {
                continue;
            }
            let score = ncc(&x[cand..cand + frame], tmpl);
            if score > best_score + rel * best_score.abs() {
                best_score = score;
                best_start = cand;
            }
        }
    }
    best_start
}

fn ncc<T: Scalar>(cand: &[T], tmpl: &[T]) -> T {
    let mut dot = T::zero();
    let mut energy = T::zero();
    for (&c, &t) in cand.iter().zip(tmpl) {
        dot += c * t;
        energy += c * c;
    }
    if energy <= T::tiny() {
        T::zero()
    } else {
        dot / energy.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_at_16k() {
        let cfg = WsolaConfig::default();
        assert_eq!(cfg.frame_len, 512);
        assert_eq!(cfg.analysis_hop, 128);
        assert_eq!(cfg.delta_max, 126);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        let wave = Waveform::<f64>::sine(200.0, 0.5, 16_000, 4000);
        let mut cfg = WsolaConfig::default();
        cfg.delta_max = cfg.analysis_hop;
        assert!(matches!(tempo_perturb(&wave, 1.0, &cfg), Err(SignalError::InvalidWsolaConfig(_))));
        let cfg = WsolaConfig::default();
        assert!(matches!(tempo_perturb(&wave, 4.5, &cfg), Err(SignalError::AlphaOutOfRange(_))));
        assert!(matches!(tempo_perturb(&wave, 0.2, &cfg), Err(SignalError::AlphaOutOfRange(_))));
        let short = Waveform::<f64>::sine(200.0, 0.5, 16_000, 512);
        assert!(matches!(tempo_perturb(&short, 1.0, &cfg), Err(SignalError::WaveTooShort { .. })));
    }

    #[test]
    fn unit_factor_reproduces_input() {
        let sr = 16_000;
        let wave = Waveform::<f64>::new(
            (0..8000)
                .map(|n| {
                    let t = n as f64 / sr as f64;
                    0.4 * (2.0 * std::f64::consts::PI * 180.0 * t).sin()
                        + 0.2 * (2.0 * std::f64::consts::PI * 733.0 * t).sin()
                })
                .collect(),
            sr,
        );
        let cfg = WsolaConfig::default();
        let out = tempo_perturb(&wave, 1.0, &cfg).unwrap();
        assert_eq!(out.len(), wave.len());
        let inner = cfg.frame_len..wave.len() - cfg.frame_len;
        let err: f64 = inner.clone().map(|i| (out.samples[i] - wave.samples[i]).powi(2)).sum();
        let refe: f64 = inner.map(|i| wave.samples[i].powi(2)).sum();
        assert!((err / refe).sqrt() < 1e-3, "relative rms {}", (err / refe).sqrt());
    }

    #[test]
    fn extreme_factors_stay_finite() {
        let wave = Waveform::<f32>::sine(300.0, 0.9, 16_000, 6000);
        for alpha in [0.25, 4.0] {
            let out = tempo_perturb(&wave, alpha, &WsolaConfig::default()).unwrap();
            assert!(out.samples.iter().all(|s| s.is_finite()));
            assert_eq!(out.len(), (alpha * 6000.0).round() as usize);
        }
    }
}
