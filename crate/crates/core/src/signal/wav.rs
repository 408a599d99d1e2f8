use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::{Result, SignalError, Waveform};
use crate::scalar::Scalar;

/// Reads a RIFF/WAVE PCM16 mono file into `[-1, 1]` amplitudes.
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(SignalError::NotMono(spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(SignalError::UnsupportedFormat(format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample)));
    }
    let scale = 1.0 / 32768.0;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| T::of(f64::from(v) * scale)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes PCM16 mono; amplitudes are clipped to `[-1, 1]`.
pub fn write_wav<T: Scalar>(path: impl AsRef<Path>, wave: &Waveform<T>) -> Result<()> {
    let spec =
        WavSpec { channels: 1, sample_rate: wave.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        let v = (s.f64().clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let wave = Waveform::<f64>::sine(440.0, 0.5, 16_000, 1600);
        write_wav(&path, &wave).unwrap();
        let back: Waveform<f64> = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.len(), wave.len());
        for (a, b) in wave.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16_000.0);
        }
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav::<f32>(&path), Err(SignalError::NotMono(2))));
    }
}
