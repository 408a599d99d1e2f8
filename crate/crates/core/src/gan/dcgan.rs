use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{dcgan_d_loss, dcgan_g_loss};
use super::{meta_parse, GanError, GanTrainReport, GeneratorLoss, IterRecord, Result};
use crate::corpus::{compute_speaker_stats, normalize_with};
use crate::matrix::Matrix;
use crate::nn::{Checkpoint, Graph, LayerSpec, Optimizer, Padding, Sequential, Tensor, TrainSchedule};
use crate::scalar::Scalar;
use crate::signal::Spectrogram;

/// Discriminator downsampling: four 2×2 stride-2 convolutions.
const D_DOWNSAMPLE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DcganConfig {
    pub n_mels: usize,
    /// Training crop length in frames; also fixes the discriminator input.
    pub window: usize,
    pub gen_channels: [usize; 3],
    pub disc_channels: [usize; 4],
    pub leaky_slope: f64,
    pub init_std: f64,
    pub g_loss: GeneratorLoss,
    /// Weight of an optional L1 term between generated and target features.
    pub l1_weight: f64,
}

impl Default for DcganConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            window: 96,
            gen_channels: [8, 8, 8],
            disc_channels: [8, 16, 32, 64],
            leaky_slope: 0.2,
            init_std: 0.02,
            g_loss: GeneratorLoss::NonSaturating,
            l1_weight: 0.0,
        }
    }
}

impl DcganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels < D_DOWNSAMPLE || self.window < D_DOWNSAMPLE {
            return Err(GanError::InvalidConfig(format!(
                "n_mels {} and window {} must both be at least {D_DOWNSAMPLE}",
                self.n_mels, self.window
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) || !(self.init_std > 0.0) || !(self.l1_weight >= 0.0) {
            return Err(GanError::InvalidConfig("leaky_slope, init_std or l1_weight out of range".into()));
        }
        Ok(())
    }

    pub fn generator_layers(&self) -> Vec<LayerSpec> {
        let pad = LayerSpec::ReplicatePad(Padding::uniform(1));
        let [a, b, c] = self.gen_channels;
        vec![
            pad,
            LayerSpec::conv(1, a, 3, 1),
            LayerSpec::Relu,
            pad,
            LayerSpec::conv(a, b, 3, 1),
            LayerSpec::Relu,
            pad,
            LayerSpec::conv(b, c, 3, 1),
            LayerSpec::Relu,
            pad,
            LayerSpec::conv(c, 1, 3, 1),
        ]
    }

    /// Flattened discriminator feature size for the configured window.
    pub fn flatten_dim(&self) -> usize {
        self.disc_channels[3] * (self.n_mels / D_DOWNSAMPLE) * (self.window / D_DOWNSAMPLE)
    }

    pub fn discriminator_layers(&self) -> Vec<LayerSpec> {
        let leaky = LayerSpec::LeakyRelu { slope: self.leaky_slope };
        let mut layers = Vec::new();
        let mut cin = 1;
        for &c in &self.disc_channels {
            layers.push(LayerSpec::conv(cin, c, 2, 2));
            layers.push(leaky);
            cin = c;
        }
        layers.extend([LayerSpec::Flatten, LayerSpec::fc(self.flatten_dim(), 1), LayerSpec::Sigmoid]);
        layers
    }
}

/// Per-target-speaker convolutional GAN.
#[derive(Debug)]
pub struct DcganModel<T: Scalar> {
    pub generator: Sequential<T>,
    pub discriminator: Sequential<T>,
    pub target_speaker: String,
    pub config: DcganConfig,
}

impl<T: Scalar> Clone for DcganModel<T> {
    fn clone(&self) -> Self {
        Self {
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            target_speaker: self.target_speaker.clone(),
            config: self.config.clone(),
        }
    }
}

impl<T: Scalar> DcganModel<T> {
    pub fn init(config: DcganConfig, target_speaker: impl Into<String>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            generator: Sequential::init(config.generator_layers(), config.init_std, &mut rng)?,
            discriminator: Sequential::init(config.discriminator_layers(), config.init_std, &mut rng)?,
            target_speaker: target_speaker.into(),
            config,
        })
    }

    /// Generator that passes its input through unchanged: the first layer
    /// splits `x` into `relu(x)` and `relu(-x)`, the middle layers carry
    /// both channels, and the last layer subtracts them.
    pub fn identity(config: DcganConfig, target_speaker: impl Into<String>) -> Result<Self> {
        if config.gen_channels.iter().any(|&c| c < 2) {
            return Err(GanError::InvalidConfig("identity generator needs at least 2 channels per layer".into()));
        }
        let mut model = Self::init(config, target_speaker, 0)?;
        let g = &mut model.generator;
        let conv_layers: Vec<usize> =
            (0..g.layers().len()).filter(|&i| matches!(g.layers()[i], LayerSpec::Conv2d { .. })).collect();
        let last = conv_layers.len() - 1;
        for (k, &li) in conv_layers.iter().enumerate() {
            let (wi, bi) = g.param_slots(li).expect("conv has params");
            let p = g.params_mut();
            p.get_mut(bi).data_mut().iter_mut().for_each(|v| *v = T::zero());
            let w = p.get_mut(wi);
            let ci = w.shape()[1];
            let data = w.data_mut();
            data.iter_mut().for_each(|v| *v = T::zero());
            let centre = |o: usize, c: usize| ((o * ci + c) * 3 + 1) * 3 + 1;
            if k == 0 {
                data[centre(0, 0)] = T::one();
                data[centre(1, 0)] = -T::one();
            } else if k == last {
                data[centre(0, 0)] = T::one();
                data[centre(0, 1)] = -T::one();
            } else {
                data[centre(0, 0)] = T::one();
                data[centre(1, 1)] = T::one();
            }
        }
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> DcganModel<U> {
        DcganModel {
            generator: self.generator.cast(),
            discriminator: self.discriminator.cast(),
            target_speaker: self.target_speaker.clone(),
            config: self.config.clone(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new();
        let c = &self.config;
        for (k, v) in [
            ("model", "dcgan".to_string()),
            ("target_speaker", self.target_speaker.clone()),
            ("n_mels", c.n_mels.to_string()),
            ("window", c.window.to_string()),
            ("leaky_slope", c.leaky_slope.to_string()),
            ("init_std", c.init_std.to_string()),
            ("g_loss", c.g_loss.to_string()),
            ("l1_weight", c.l1_weight.to_string()),
        ] {
            ck.metadata.insert(k.to_string(), v);
        }
        ck.networks.push(("generator".into(), self.generator.clone()));
        ck.networks.push(("discriminator".into(), self.discriminator.clone()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        if ck.meta("model") != Some("dcgan") {
            return Err(GanError::Checkpoint("not a dcgan checkpoint".into()));
        }
        let net = |name: &str| {
            ck.network(name).cloned().ok_or_else(|| GanError::Checkpoint(format!("missing network {name:?}")))
        };
        let generator = net("generator")?;
        let discriminator = net("discriminator")?;
        let channels = |s: &Sequential<T>| -> Vec<usize> {
            s.layers()
                .iter()
                .filter_map(|l| match l {
                    LayerSpec::Conv2d { out_channels, .. } => Some(*out_channels),
                    _ => None,
                })
                .collect()
        };
        let (gc, dc) = (channels(&generator), channels(&discriminator));
        if gc.len() != 4 || dc.len() != 4 {
            return Err(GanError::Checkpoint("unexpected layer inventory".into()));
        }
        let config = DcganConfig {
            n_mels: meta_parse(ck, "n_mels")?,
            window: meta_parse(ck, "window")?,
            gen_channels: [gc[0], gc[1], gc[2]],
            disc_channels: [dc[0], dc[1], dc[2], dc[3]],
            leaky_slope: meta_parse(ck, "leaky_slope")?,
            init_std: meta_parse(ck, "init_std")?,
            g_loss: meta_parse(ck, "g_loss")?,
            l1_weight: meta_parse(ck, "l1_weight")?,
        };
        config.validate()?;
        if generator.layers() != config.generator_layers().as_slice()
            || discriminator.layers() != config.discriminator_layers().as_slice()
        {
            return Err(GanError::Checkpoint("layers disagree with metadata".into()));
        }
        Ok(Self { generator, discriminator, target_speaker: meta_parse(ck, "target_speaker")?, config })
    }
}

/// Crops (or edge-extends) `m` to `window` columns starting at `start`.
fn crop_into<T: Scalar>(m: &Matrix<T>, start: usize, window: usize, out: &mut Vec<T>) {
    let t = m.cols();
    for i in 0..m.rows() {
        let row = m.row(i);
        out.extend((0..window).map(|j| row[(start + j).min(t - 1)]));
    }
}

/// Trains one model on time-aligned `(control, target)` feature pairs.
///
/// Each iteration takes one discriminator step on a fresh batch of random
/// crops (the generator output detached), then one generator step.
pub fn train_dcgan<T: Scalar>(
    pairs: &[(Matrix<T>, Matrix<T>)],
    config: DcganConfig,
    schedule: &TrainSchedule,
    target_speaker: &str,
) -> Result<(DcganModel<T>, GanTrainReport)> {
    schedule.validate()?;
    config.validate()?;
    if pairs.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    for (index, (c, t)) in pairs.iter().enumerate() {
        if c.cols() != t.cols() {
            return Err(GanError::UnalignedPair { index, control: c.cols(), target: t.cols() });
        }
        if c.rows() != config.n_mels || t.rows() != config.n_mels {
            return Err(GanError::ShapeMismatch(format!(
                "pair {index} has {}/{} channels, model expects {}",
                c.rows(),
                t.rows(),
                config.n_mels
            )));
        }
        if c.cols() == 0 {
            return Err(GanError::ShapeMismatch(format!("pair {index} is empty")));
        }
    }
    let mut model = DcganModel::<T>::init(config, target_speaker, schedule.seed)?;
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x5EED_DC6A);
    let (mut opt_g, mut opt_d) = (Optimizer::new(schedule.optimizer), Optimizer::new(schedule.optimizer));
    let (b, c, w) = (schedule.batch_size, cfg.n_mels, cfg.window);
    let shape = [b, 1, c, w];
    let mut report = GanTrainReport::default();

    let sample = |rng: &mut ChaCha8Rng| -> Result<(Tensor<T>, Tensor<T>)> {
        let (mut xc, mut xt) = (Vec::with_capacity(b * c * w), Vec::with_capacity(b * c * w));
        for _ in 0..b {
            let (ctl, tgt) = &pairs[rng.random_range(0..pairs.len())];
            let start = if ctl.cols() > w { rng.random_range(0..=ctl.cols() - w) } else { 0 };
            crop_into(ctl, start, w, &mut xc);
            crop_into(tgt, start, w, &mut xt);
        }
        Ok((Tensor::new(shape.to_vec(), xc)?, Tensor::new(shape.to_vec(), xt)?))
    };

    for iter in 0..schedule.max_iters {
        // discriminator step
        let (xc, xt) = sample(&mut rng)?;
        let fake = model.generator.infer(&xc)?;
        let mut g = Graph::new();
        let (real_in, fake_in) = (g.input(xt), g.input(fake));
        let d_real = model.discriminator.forward(&mut g, real_in)?;
        let d_fake = model.discriminator.forward(&mut g, fake_in)?;
        let d_loss = dcgan_d_loss(&mut g, d_real, d_fake)?;
        let correct = g.value(d_real).data().iter().filter(|&&p| p > T::of(0.5)).count()
            + g.value(d_fake).data().iter().filter(|&&p| p < T::of(0.5)).count();
        let grads = g.backward(d_loss)?;
        model.discriminator.params_mut().accumulate(&grads);
        let lr = opt_d.step(model.discriminator.params_mut(), schedule, iter)?;
        let d_loss = g.value(d_loss).item().f64();

        // generator step
        let (xc, xt) = sample(&mut rng)?;
        let mut g = Graph::new();
        let x = g.input(xc);
        let y = model.generator.forward(&mut g, x)?;
        let d_fake = model.discriminator.forward(&mut g, y)?;
        let mut g_loss = dcgan_g_loss(&mut g, d_fake, cfg.g_loss)?;
        if cfg.l1_weight > 0.0 {
            let l1 = g.mean_abs_error(y, xt.data())?;
            let l1 = g.scale(l1, T::of(cfg.l1_weight));
            g_loss = g.add(g_loss, l1)?;
        }
        let grads = g.backward(g_loss)?;
        model.generator.params_mut().accumulate(&grads);
        opt_g.step(model.generator.params_mut(), schedule, iter)?;

        report.records.push(IterRecord {
            iter,
            lr,
            d_loss,
            g_loss: g.value(g_loss).item().f64(),
            d_acc: correct as f64 / (2 * b) as f64,
            sid_acc: f64::NAN,
        });
    }
    Ok((model, report))
}

/// Runs the generator over a whole utterance; the output has the input's shape.
pub fn dcgan_generate<T: Scalar>(model: &DcganModel<T>, spec: &Spectrogram<T>) -> Result<Spectrogram<T>> {
    let (c, t) = spec.values.shape();
    if c != model.config.n_mels || t == 0 {
        return Err(GanError::ShapeMismatch(format!("input {c}x{t}, model expects {} channels", model.config.n_mels)));
    }
    let x = Tensor::new(vec![1, 1, c, t], spec.values.as_slice().to_vec())?;
    let y = model.generator.infer(&x)?;
    if y.shape() != [1, 1, c, t] {
        return Err(GanError::ShapeMismatch(format!("generator produced {:?}", y.shape())));
    }
    Ok(spec.with_values(Matrix::from_vec(c, t, y.into_data())))
}

/// Zero-mean, unit-variance normalization pooled over one speaker's outputs.
pub fn speaker_normalize<T: Scalar>(specs: &[Matrix<T>]) -> Result<Vec<Matrix<T>>> {
    let refs: Vec<&Matrix<T>> = specs.iter().collect();
    let stats = compute_speaker_stats(&refs).map_err(|e| GanError::ShapeMismatch(e.to_string()))?;
    specs.iter().map(|m| normalize_with(m, &stats).map_err(|e| GanError::ShapeMismatch(e.to_string()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DcganConfig {
        DcganConfig { n_mels: 16, window: 32, ..DcganConfig::default() }
    }

    #[test]
    fn default_discriminator_geometry() {
        let cfg = DcganConfig::default();
        assert_eq!(cfg.flatten_dim(), 64 * 2 * 6);
        let m = DcganModel::<f32>::init(cfg, "F02", 1).unwrap();
        assert_eq!(m.discriminator.output_shape(&[3, 1, 40, 96]).unwrap(), vec![3, 1]);
        assert_eq!(m.generator.output_shape(&[1, 1, 40, 123]).unwrap(), vec![1, 1, 40, 123]);
    }

    #[test]
    fn identity_fixture_passes_through() {
        let m = DcganModel::<f64>::identity(small(), "F02").unwrap();
        let s = Spectrogram::from_matrix(Matrix::from_fn(16, 21, |i, j| ((i * 31 + j * 7) % 13) as f64 - 6.5));
        let out = dcgan_generate(&m, &s).unwrap();
        assert_eq!(out.values, s.values);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pairs = vec![(Matrix::<f32>::zeros(16, 40), Matrix::<f32>::zeros(16, 41))];
        let sched = TrainSchedule { max_iters: 1, batch_size: 2, ..TrainSchedule::default() };
        assert!(matches!(train_dcgan(&pairs, small(), &sched, "x"), Err(GanError::UnalignedPair { index: 0, .. })));
        assert!(matches!(train_dcgan::<f32>(&[], small(), &sched, "x"), Err(GanError::EmptyTrainingSet)));
        let m = DcganModel::<f32>::init(small(), "x", 0).unwrap();
        assert!(dcgan_generate(&m, &Spectrogram::from_matrix(Matrix::zeros(40, 5))).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_determinism() {
        let pairs: Vec<_> = (0..4)
            .map(|k| {
                let c = Matrix::from_fn(16, 40, |i, j| ((i + j + k) as f32 * 0.3).sin());
                let t = c.map(|v| v + 0.5);
                (c, t)
            })
            .collect();
        let sched = TrainSchedule { max_iters: 5, batch_size: 2, seed: 3, ..TrainSchedule::default() };
        let (a, ra) = train_dcgan(&pairs, small(), &sched, "F02").unwrap();
        let (b, _) = train_dcgan(&pairs, small(), &sched, "F02").unwrap();
        assert_eq!(ra.len(), 5);
        assert!(ra.all_finite());
        let (ca, cb) = (a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
        assert_eq!(ca, cb);
        let back = DcganModel::<f32>::from_checkpoint(&Checkpoint::from_bytes(&ca).unwrap()).unwrap();
        assert_eq!(back.config, a.config);
        assert_eq!(back.generator.params().get(0).data(), a.generator.params().get(0).data());
    }
}
