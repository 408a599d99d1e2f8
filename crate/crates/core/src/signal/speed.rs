//! Band-limited resampling for speed perturbation.

use super::{check_alpha, Result, Waveform};
use crate::scalar::Scalar;

/// Windowed-sinc interpolator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplerConfig {
    /// Kernel support in input samples at unit cutoff.
    pub taps: usize,
    pub kaiser_beta: f64,
    /// Sub-sample resolution of the tabulated kernel.
    pub phases: usize,
}

impl Default for ResamplerConfig {
    fn default() -> Self {
        Self { taps: 64, kaiser_beta: 8.0, phases: 256 }
    }
}

/// `y(t) = x(alpha * t)` with the default resampler.
pub fn speed_perturb<T: Scalar>(wave: &Waveform<T>, alpha: f64) -> Result<Waveform<T>> {
    speed_perturb_with(wave, alpha, &ResamplerConfig::default())
}

/// Resamples so that output sample `n` reads the input at time `n * alpha`.
///
/// Output length is `round(len / alpha)`. For `alpha > 1` the kernel cutoff
/// drops to `1 / alpha` of the input Nyquist to avoid aliasing. A factor of
/// exactly 1 returns the input unchanged.
pub fn speed_perturb_with<T: Scalar>(wave: &Waveform<T>, alpha: f64, cfg: &ResamplerConfig) -> Result<Waveform<T>> {
    check_alpha(alpha)?;
    wave.check_finite()?;
    if alpha == 1.0 {
        return Ok(wave.clone());
    }
    let n_in = wave.len();
    let n_out = (n_in as f64 / alpha).round() as usize;
    let kernel = KernelTable::new(cfg);
    let cutoff = (1.0 / alpha).min(1.0);
    let half_width = cfg.taps as f64 / 2.0 / cutoff;

    let x = &wave.samples;
    let samples = (0..n_out)
        .map(|n| {
            let t = n as f64 * alpha;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(n_in.saturating_sub(1));
            let mut acc = 0.0;
            for (k, &xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                acc += xk.f64() * cutoff * kernel.eval(cutoff * (t - k as f64));
            }
            T::of(acc)
        })
        .collect();
    Ok(Waveform::new(samples, wave.sample_rate))
}

/// Kaiser-windowed sinc tabulated on `[0, taps/2]` at `1/phases` spacing.
struct KernelTable {
    half_taps: f64,
    phases: usize,
    table: Vec<f64>,
}

impl KernelTable {
    fn new(cfg: &ResamplerConfig) -> Self {
        let half_taps = cfg.taps as f64 / 2.0;
        let len = cfg.taps / 2 * cfg.phases + 2;
        let i0_beta = bessel_i0(cfg.kaiser_beta);
        let table = (0..len)
            .map(|i| {
                let u = i as f64 / cfg.phases as f64;
                if u >= half_taps {
                    return 0.0;
                }
                let r = u / half_taps;
                let w = bessel_i0(cfg.kaiser_beta * (1.0 - r * r).sqrt()) / i0_beta;
                sinc(u) * w
            })
            .collect();
        Self { half_taps, phases: cfg.phases, table }
    }

    /// Kernel value at offset `u` (input samples, scaled by the cutoff).
    fn eval(&self, u: f64) -> f64 {
        let u = u.abs();
        if u >= self.half_taps {
            return 0.0;
        }
        let pos = u * self.phases as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.table[i] * (1.0 - frac) + self.table[i + 1] * frac
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalError;

    #[test]
    fn bessel_i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) and I0(8) from tables.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_7).abs() < 1e-9);
    }

    #[test]
    fn unit_factor_is_bit_identical() {
        let wave = Waveform::<f32>::sine(440.0, 0.3, 16_000, 1234);
        assert_eq!(speed_perturb(&wave, 1.0).unwrap(), wave);
    }

    #[test]
    fn output_length_rounds() {
        let wave = Waveform::<f64>::sine(440.0, 0.3, 16_000, 16_000);
        assert_eq!(speed_perturb(&wave, 1.1).unwrap().len(), 14_545);
        assert_eq!(speed_perturb(&wave, 0.9).unwrap().len(), 17_778);
        assert!(matches!(speed_perturb(&wave, 5.0), Err(SignalError::AlphaOutOfRange(_))));
    }

    #[test]
    fn dc_passes_through_interior() {
        let wave = Waveform::<f64>::new(vec![0.5; 4000], 16_000);
        for alpha in [0.7, 1.3] {
            let out = speed_perturb(&wave, alpha).unwrap();
            let mid = out.len() / 2;
            assert!((out.samples[mid] - 0.5).abs() < 1e-3, "alpha {alpha}: {}", out.samples[mid]);
        }
    }
}
