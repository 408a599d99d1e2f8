use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{hann, Result, SignalError, Spectrogram, Waveform};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Log-Mel filter-bank front end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fft_len: usize,
    pub frame_len: usize,
    pub frame_hop: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    /// 40 channels, 25 ms / 10 ms framing at 16 kHz.
    fn default() -> Self {
        Self { n_mels: 40, fft_len: 512, frame_len: 400, frame_hop: 160, fmin: 20.0, fmax: 7600.0, log_floor: 1e-10 }
    }
}

impl MelConfig {
    pub fn with_mels(n_mels: usize) -> Self {
        Self { n_mels, ..Self::default() }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = f64::from(sample_rate) / 2.0;
        let bad = |msg: String| Err(SignalError::InvalidMelConfig(msg));
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad(format!("need 0 <= fmin < fmax <= {nyquist}, got {}..{}", self.fmin, self.fmax));
        }
        if !(self.frame_hop >= 1 && self.frame_hop <= self.frame_len && self.frame_len <= self.fft_len) {
            return bad(format!(
                "need 1 <= frame_hop <= frame_len <= fft_len, got {} / {} / {}",
                self.frame_hop, self.frame_len, self.fft_len
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            1 + (n_samples - self.frame_len) / self.frame_hop
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels x (fft_len/2 + 1)`, unit peak at each center.
///
/// Centers are equally spaced on the HTK Mel scale between `fmin` and `fmax`.
pub fn mel_filterbank<T: Scalar>(cfg: &MelConfig, sample_rate: u32) -> Matrix<T> {
    let n_bins = cfg.fft_len / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> =
        (0..cfg.n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64)).collect();
    let bin_hz = f64::from(sample_rate) / cfg.fft_len as f64;
    Matrix::from_fn(cfg.n_mels, n_bins, |m, k| {
        let f = k as f64 * bin_hz;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        let w = if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        };
        T::of(w)
    })
}

/// Log-Mel spectrogram with `1 + (len - frame_len) / frame_hop` frames.
///
/// Each frame is Hann-windowed, zero-padded to `fft_len`, and its power
/// spectrum is weighted by [`mel_filterbank`]. Entries are
/// `ln(max(energy, log_floor))`.
pub fn mel_fbank<T: Scalar>(wave: &Waveform<T>, cfg: &MelConfig) -> Result<Spectrogram<T>> {
    cfg.validate(wave.sample_rate)?;
    if wave.len() <= cfg.frame_len {
        return Err(SignalError::WaveTooShort { len: wave.len(), needed: cfg.frame_len });
    }
    wave.check_finite()?;

    let n_frames = cfg.n_frames(wave.len());
    let fb: Matrix<T> = mel_filterbank(cfg, wave.sample_rate);
    let win: Vec<T> = hann(cfg.frame_len);
    let fft = FftPlanner::<T>::new().plan_fft_forward(cfg.fft_len);
    let n_bins = cfg.fft_len / 2 + 1;
    let floor = T::of(cfg.log_floor);

    let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.fft_len];
    let mut power = vec![T::zero(); n_bins];
    let mut out = Matrix::zeros(cfg.n_mels, n_frames);
    for t in 0..n_frames {
        let start = t * cfg.frame_hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let v = if i < cfg.frame_len { wave.samples[start + i] * win[i] } else { T::zero() };
            *b = Complex::new(v, T::zero());
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let e: T = fb.row(m).iter().zip(&power).map(|(&w, &p)| w * p).sum();
            out[(m, t)] = e.max(floor).ln();
        }
    }
    Ok(Spectrogram::new(out, cfg.frame_hop, wave.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 20.0, 440.0, 1000.0, 7600.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.985_6).abs() < 1e-3);
    }

    #[test]
    fn silence_hits_log_floor_everywhere() {
        let cfg = MelConfig::default();
        let wave = Waveform::<f64>::new(vec![0.0; 16_000], 16_000);
        let spec = mel_fbank(&wave, &cfg).unwrap();
        assert_eq!(spec.n_mels(), 40);
        assert_eq!(spec.n_frames(), 1 + (16_000 - 400) / 160);
        let expected = cfg.log_floor.ln();
        assert!(spec.values.as_slice().iter().all(|&v| v == expected));
    }

    #[test]
    fn config_validation() {
        for cfg in [
            MelConfig { fmax: 9000.0, ..MelConfig::default() },
            MelConfig { frame_len: 1024, ..MelConfig::default() },
            MelConfig { n_mels: 0, ..MelConfig::default() },
        ] {
            assert!(cfg.validate(16_000).is_err());
        }
        let wave = Waveform::<f32>::new(vec![0.0; 400], 16_000);
        assert!(matches!(mel_fbank(&wave, &MelConfig::default()), Err(SignalError::WaveTooShort { .. })));
    }

    #[test]
    fn filters_are_nonnegative_with_unit_peaks_inside_band() {
        let fb: Matrix<f64> = mel_filterbank(&MelConfig::default(), 16_000);
        assert!(fb.as_slice().iter().all(|&w| (0.0..=1.0).contains(&w)));
        for m in 5..40 {
            let peak = fb.row(m).iter().cloned().fold(0.0, f64::max);
            assert!(peak > 0.5, "channel {m} peak {peak}");
        }
    }
}
