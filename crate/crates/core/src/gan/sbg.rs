use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{sbg_d_loss, sbg_g_loss};
use super::{dcgan_generate, meta_parse, DcganModel, GanError, GanTrainReport, GeneratorLoss, IterRecord, Result};
use crate::corpus::{mean_bases, PairManifest, PairStrategy, Stage, TargetRef};
use crate::matrix::Matrix;
use crate::nn::{Checkpoint, Graph, LayerSpec, Optimizer, Sequential, Tensor, TrainSchedule, Var};
use crate::scalar::Scalar;
use crate::signal::{mel_fbank, speed_perturb, MelConfig, Spectrogram, Waveform};
use crate::subspace::{apply_perturbation, recompose, svd_decompose};

#[derive(Debug, Clone, PartialEq)]
pub struct SbgConfig {
    /// C: spectral bases are C×C.
    pub n_channels: usize,
    pub gen_hidden: [usize; 2],
    pub disc_hidden: [usize; 3],
    pub leaky_slope: f64,
    pub init_std: f64,
    /// Perturbation scale applied to the generator output.
    pub lambda: f64,
    pub g_loss: GeneratorLoss,
}

impl Default for SbgConfig {
    fn default() -> Self {
        Self {
            n_channels: 40,
            gen_hidden: [512, 512],
            disc_hidden: [256, 512, 256],
            leaky_slope: 0.2,
            init_std: 0.02,
            lambda: 0.1,
            g_loss: GeneratorLoss::NonSaturating,
        }
    }
}

impl SbgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.gen_hidden.contains(&0) || self.disc_hidden.contains(&0) {
            return Err(GanError::InvalidConfig("layer sizes must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) || !(self.init_std > 0.0) {
            return Err(GanError::InvalidConfig("leaky_slope or init_std out of range".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GanError::InvalidConfig(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        Ok(())
    }

    fn basis_dim(&self) -> usize {
        self.n_channels * self.n_channels
    }

    pub fn generator_layers(&self, n_speakers: usize) -> Vec<LayerSpec> {
        let leaky = LayerSpec::LeakyRelu { slope: self.leaky_slope };
        let [h1, h2] = self.gen_hidden;
        vec![
            LayerSpec::fc(self.basis_dim() + n_speakers, h1),
            leaky,
            LayerSpec::fc(h1, h2),
            leaky,
            LayerSpec::fc(h2, self.basis_dim()),
            LayerSpec::Tanh,
        ]
    }

    pub fn trunk_layers(&self) -> Vec<LayerSpec> {
        let leaky = LayerSpec::LeakyRelu { slope: self.leaky_slope };
        let [h1, h2, h3] = self.disc_hidden;
        vec![LayerSpec::fc(self.basis_dim(), h1), leaky, LayerSpec::fc(h1, h2), leaky, LayerSpec::fc(h2, h3), leaky]
    }

    pub fn head_layers(&self, outputs: usize) -> Vec<LayerSpec> {
        vec![LayerSpec::fc(self.disc_hidden[2], outputs), LayerSpec::Sigmoid]
    }
}

/// Shared trunk with a condition head (target speech vs generated) and a
/// per-speaker sigmoid head.
#[derive(Debug)]
pub struct SbgDiscriminator<T: Scalar> {
    pub trunk: Sequential<T>,
    pub condition: Sequential<T>,
    pub speaker: Sequential<T>,
}

impl<T: Scalar> Clone for SbgDiscriminator<T> {
    fn clone(&self) -> Self {
        Self { trunk: self.trunk.clone(), condition: self.condition.clone(), speaker: self.speaker.clone() }
    }
}

impl<T: Scalar> SbgDiscriminator<T> {
    /// Returns `(condition, speaker)` outputs.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> crate::nn::Result<(Var, Var)> {
        let h = self.trunk.forward(g, x)?;
        Ok((self.condition.forward(g, h)?, self.speaker.forward(g, h)?))
    }

    /// Inference-only `(condition, speaker)` probabilities for a `[batch, C*C]` input.
    pub fn classify(&self, x: &Tensor<T>) -> crate::nn::Result<(Tensor<T>, Tensor<T>)> {
        let h = self.trunk.infer(x)?;
        Ok((self.condition.infer(&h)?, self.speaker.infer(&h)?))
    }
}

#[derive(Debug)]
pub struct SbgModel<T: Scalar> {
    pub generator: Sequential<T>,
    pub discriminator: SbgDiscriminator<T>,
    /// Speaker vocabulary; index `k` is one-hot position `k`.
    pub speakers: Vec<String>,
    pub config: SbgConfig,
}

impl<T: Scalar> Clone for SbgModel<T> {
    fn clone(&self) -> Self {
        Self {
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            speakers: self.speakers.clone(),
            config: self.config.clone(),
        }
    }
}

impl<T: Scalar> SbgModel<T> {
    pub fn init(config: SbgConfig, speakers: Vec<String>, seed: u64) -> Result<Self> {
        config.validate()?;
        if speakers.is_empty() {
            return Err(GanError::InvalidConfig("speaker vocabulary is empty".into()));
        }
        if speakers.iter().any(|s| s.is_empty() || s.contains(',')) {
            return Err(GanError::InvalidConfig("speaker ids must be non-empty and comma-free".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = config.init_std;
        Ok(Self {
            generator: Sequential::init(config.generator_layers(speakers.len()), std, &mut rng)?,
            discriminator: SbgDiscriminator {
                trunk: Sequential::init(config.trunk_layers(), std, &mut rng)?,
                condition: Sequential::init(config.head_layers(1), std, &mut rng)?,
                speaker: Sequential::init(config.head_layers(speakers.len()), std, &mut rng)?,
            },
            speakers,
            config,
        })
    }

    /// Model whose generator output is exactly zero (last layer zeroed).
    pub fn zero_generator(config: SbgConfig, speakers: Vec<String>) -> Result<Self> {
        let mut m = Self::init(config, speakers, 0)?;
        let last = m.generator.layers().len() - 2;
        let (w, b) = m.generator.param_slots(last).expect("final fc");
        for i in [w, b] {
            m.generator.params_mut().get_mut(i).data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(m)
    }

    pub fn speaker_index(&self, speaker: &str) -> Result<usize> {
        self.speakers.iter().position(|s| s == speaker).ok_or_else(|| GanError::UnknownSpeaker(speaker.to_string()))
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut m = self.clone();
        m.config.lambda = lambda;
        m.config.validate()?;
        Ok(m)
    }

    pub fn cast<U: Scalar>(&self) -> SbgModel<U> {
        SbgModel {
            generator: self.generator.cast(),
            discriminator: SbgDiscriminator {
                trunk: self.discriminator.trunk.cast(),
                condition: self.discriminator.condition.cast(),
                speaker: self.discriminator.speaker.cast(),
            },
            speakers: self.speakers.clone(),
            config: self.config.clone(),
        }
    }

    /// Raw generator output (entries in (-1, 1)) for one basis matrix.
    pub fn generator_output(&self, u: &Matrix<T>, speaker: &str) -> Result<Matrix<T>> {
        let c = self.config.n_channels;
        if u.shape() != (c, c) {
            return Err(GanError::ShapeMismatch(format!("bases {:?}, model expects {c}x{c}", u.shape())));
        }
        let k = self.speaker_index(speaker)?;
        let mut x = u.as_slice().to_vec();
        x.extend((0..self.speakers.len()).map(|i| if i == k { T::one() } else { T::zero() }));
        let y = self.generator.infer(&Tensor::new(vec![1, x.len()], x)?)?;
        Ok(Matrix::from_vec(c, c, y.into_data()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new();
        let c = &self.config;
        for (k, v) in [
            ("model", "sbg".to_string()),
            ("speakers", self.speakers.join(",")),
            ("n_channels", c.n_channels.to_string()),
            ("leaky_slope", c.leaky_slope.to_string()),
            ("init_std", c.init_std.to_string()),
            ("lambda", c.lambda.to_string()),
            ("g_loss", c.g_loss.to_string()),
        ] {
            ck.metadata.insert(k.to_string(), v);
        }
        ck.networks.push(("generator".into(), self.generator.clone()));
        ck.networks.push(("d_trunk".into(), self.discriminator.trunk.clone()));
        ck.networks.push(("d_condition".into(), self.discriminator.condition.clone()));
        ck.networks.push(("d_speaker".into(), self.discriminator.speaker.clone()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        if ck.meta("model") != Some("sbg") {
            return Err(GanError::Checkpoint("not an sbg checkpoint".into()));
        }
        let net = |name: &str| {
            ck.network(name).cloned().ok_or_else(|| GanError::Checkpoint(format!("missing network {name:?}")))
        };
        let speakers: Vec<String> = ck.meta("speakers").unwrap_or("").split(',').map(String::from).collect();
        let generator = net("generator")?;
        let trunk = net("d_trunk")?;
        let fc_out = |s: &Sequential<T>| -> Vec<usize> {
            s.layers()
                .iter()
                .filter_map(|l| match l {
                    LayerSpec::Fc { out_features, .. } => Some(*out_features),
                    _ => None,
                })
                .collect()
        };
        let (go, to) = (fc_out(&generator), fc_out(&trunk));
        if go.len() != 3 || to.len() != 3 {
            return Err(GanError::Checkpoint("unexpected layer inventory".into()));
        }
        let config = SbgConfig {
            n_channels: meta_parse(ck, "n_channels")?,
            gen_hidden: [go[0], go[1]],
            disc_hidden: [to[0], to[1], to[2]],
            leaky_slope: meta_parse(ck, "leaky_slope")?,
            init_std: meta_parse(ck, "init_std")?,
            lambda: meta_parse(ck, "lambda")?,
            g_loss: meta_parse(ck, "g_loss")?,
        };
        config.validate()?;
        let model = Self {
            generator,
            discriminator: SbgDiscriminator { trunk, condition: net("d_condition")?, speaker: net("d_speaker")? },
            speakers,
            config,
        };
        let c = &model.config;
        if model.generator.layers() != c.generator_layers(model.speakers.len()).as_slice()
            || model.discriminator.trunk.layers() != c.trunk_layers().as_slice()
            || model.discriminator.condition.layers() != c.head_layers(1).as_slice()
            || model.discriminator.speaker.layers() != c.head_layers(model.speakers.len()).as_slice()
        {
            return Err(GanError::Checkpoint("layers disagree with metadata".into()));
        }
        Ok(model)
    }
}

/// Sign-canonical bases for training: control utterances, target
/// utterances grouped by speaker, and one pairing per target speaker.
#[derive(Debug, Clone)]
pub struct SbgTrainingData<T: Scalar> {
    pub control: BTreeMap<String, Matrix<T>>,
    pub targets: BTreeMap<String, BTreeMap<String, Matrix<T>>>,
    pub pairings: Vec<PairManifest>,
}

/// `(control index, speaker index, real index)` triples plus the flattened matrices.
struct Resolved<T> {
    control: Vec<Vec<T>>,
    real: Vec<Vec<T>>,
    pairs: Vec<(usize, usize, usize)>,
}

fn resolve<T: Scalar>(data: &SbgTrainingData<T>, speakers: &[String], c: usize) -> Result<Resolved<T>> {
    let check = |id: &str, m: &Matrix<T>| {
        if m.shape() != (c, c) {
            return Err(GanError::ShapeMismatch(format!("bases of {id} are {:?}, expected {c}x{c}", m.shape())));
        }
        Ok(())
    };
    let mut out = Resolved { control: Vec::new(), real: Vec::new(), pairs: Vec::new() };
    let mut control_idx = BTreeMap::new();
    let mut real_idx: BTreeMap<(usize, TargetRef), usize> = BTreeMap::new();
    for pm in &data.pairings {
        if pm.strategy == PairStrategy::Parallel {
            return Err(GanError::InvalidConfig("parallel pairing is not used for basis training".into()));
        }
        let spk = speakers
            .iter()
            .position(|s| *s == pm.target_speaker)
            .ok_or_else(|| GanError::UnknownSpeakerInPairing(pm.target_speaker.clone()))?;
        let utts = &data.targets[&pm.target_speaker];
        for (src, tref) in &pm.pairs {
            let ci = match control_idx.get(src) {
                Some(&i) => i,
                None => {
                    let m = data.control.get(src).ok_or_else(|| GanError::MissingUtterance(src.clone()))?;
                    check(src, m)?;
                    out.control.push(m.as_slice().to_vec());
                    control_idx.insert(src.clone(), out.control.len() - 1);
                    out.control.len() - 1
                }
            };
            let key = (spk, tref.clone());
            let ri = match real_idx.get(&key) {
                Some(&i) => i,
                None => {
                    let m = match tref {
                        TargetRef::Utterance(id) => {
                            let m = utts.get(id).ok_or_else(|| GanError::MissingUtterance(id.clone()))?;
                            check(id, m)?;
                            m.clone()
                        }
                        TargetRef::MeanBases => {
                            let all: Vec<&Matrix<T>> = utts.values().collect();
                            for (id, m) in utts {
                                check(id, m)?;
                            }
                            mean_bases(&all).map_err(|e| GanError::ShapeMismatch(e.to_string()))?
                        }
                    };
                    out.real.push(m.into_vec());
                    real_idx.insert(key, out.real.len() - 1);
                    out.real.len() - 1
                }
            };
            out.pairs.push((ci, spk, ri));
        }
    }
    if out.pairs.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    Ok(out)
}

/// Adversarial training of the basis perturbation generator.
///
/// Fake bases are `U_C + λ·G(U_C, onehot)`. Each iteration makes one
/// discriminator step (condition loss on real and fake, speaker loss on
/// both) and one generator step (fool the condition head, keep the
/// speaker head on the requested speaker).
pub fn train_sbg<T: Scalar>(
    data: &SbgTrainingData<T>,
    config: SbgConfig,
    schedule: &TrainSchedule,
) -> Result<(SbgModel<T>, GanTrainReport)> {
    schedule.validate()?;
    config.validate()?;
    let speakers: Vec<String> = data.targets.keys().cloned().collect();
    if speakers.is_empty() || data.control.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    let c = config.n_channels;
    let res = resolve(data, &speakers, c)?;
    let mut model = SbgModel::<T>::init(config, speakers, schedule.seed)?;
    let (cc, s, b) = (c * c, model.speakers.len(), schedule.batch_size);
    let lambda = T::of(model.config.lambda);
    let g_kind = model.config.g_loss;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x5EED_5B6A);
    let mut opt_g = Optimizer::new(schedule.optimizer);
    let mut opt_d =
        [Optimizer::new(schedule.optimizer), Optimizer::new(schedule.optimizer), Optimizer::new(schedule.optimizer)];
    let mut report = GanTrainReport::default();

    // (generator input, control bases, real bases, one-hot targets, labels)
    type Batch<T> = (Tensor<T>, Tensor<T>, Tensor<T>, Vec<T>, Vec<usize>);
    let sample = |rng: &mut ChaCha8Rng| -> Result<Batch<T>> {
        let (mut gin, mut uc, mut real, mut onehot, mut labels) = (
            Vec::with_capacity(b * (cc + s)),
            Vec::with_capacity(b * cc),
            Vec::with_capacity(b * cc),
            Vec::new(),
            Vec::new(),
        );
        for _ in 0..b {
            let (ci, spk, ri) = res.pairs[rng.random_range(0..res.pairs.len())];
            let oh: Vec<T> = (0..s).map(|i| if i == spk { T::one() } else { T::zero() }).collect();
            gin.extend_from_slice(&res.control[ci]);
            gin.extend_from_slice(&oh);
            uc.extend_from_slice(&res.control[ci]);
            real.extend_from_slice(&res.real[ri]);
            onehot.extend(oh);
            labels.push(spk);
        }
        Ok((
            Tensor::new(vec![b, cc + s], gin)?,
            Tensor::new(vec![b, cc], uc)?,
            Tensor::new(vec![b, cc], real)?,
            onehot,
            labels,
        ))
    };

    for iter in 0..schedule.max_iters {
        // discriminator step, generator output detached
        let (gin, uc, real, onehot, labels) = sample(&mut rng)?;
        let delta = model.generator.infer(&gin)?;
        let fake_data = uc.data().iter().zip(delta.data()).map(|(&u, &d)| u + lambda * d).collect();
        let fake = Tensor::new(vec![b, cc], fake_data)?;
        let mut g = Graph::new();
        let (ri, fi) = (g.input(real), g.input(fake));
        let (c_real, s_real) = model.discriminator.forward(&mut g, ri)?;
        let (c_fake, s_fake) = model.discriminator.forward(&mut g, fi)?;
        let d_loss = sbg_d_loss(&mut g, c_real, c_fake, s_real, s_fake, &onehot)?;
        let half = T::of(0.5);
        let d_correct = g.value(c_real).data().iter().filter(|&&p| p > half).count()
            + g.value(c_fake).data().iter().filter(|&&p| p < half).count();
        let sid_correct = g.value(s_real).data().chunks(s).zip(&labels).filter(|(row, &l)| argmax(row) == l).count();
        let grads = g.backward(d_loss)?;
        let d = &mut model.discriminator;
        let mut lr = 0.0;
        for (opt, net) in opt_d.iter_mut().zip([&mut d.trunk, &mut d.condition, &mut d.speaker]) {
            net.params_mut().accumulate(&grads);
            lr = opt.step(net.params_mut(), schedule, iter)?;
        }
        let d_loss = g.value(d_loss).item().f64();

        // generator step
        let (gin, uc, _, onehot, _) = sample(&mut rng)?;
        let mut g = Graph::new();
        let x = g.input(gin);
        let delta = model.generator.forward(&mut g, x)?;
        let scaled = g.scale(delta, lambda);
        let base = g.input(uc);
        let fake = g.add(base, scaled)?;
        let (c_fake, s_fake) = model.discriminator.forward(&mut g, fake)?;
        let g_loss = sbg_g_loss(&mut g, c_fake, s_fake, &onehot, g_kind)?;
        let grads = g.backward(g_loss)?;
        model.generator.params_mut().accumulate(&grads);
        opt_g.step(model.generator.params_mut(), schedule, iter)?;

        report.records.push(IterRecord {
            iter,
            lr,
            d_loss,
            g_loss: g.value(g_loss).item().f64(),
            d_acc: d_correct as f64 / (2 * b) as f64,
            sid_acc: sid_correct as f64 / b as f64,
        });
    }
    Ok((model, report))
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

/// `U + λ·G(U, speaker)` with the exact `|U' - U| <= λ` guarantee.
pub fn sbg_perturb_bases<T: Scalar>(model: &SbgModel<T>, u: &Matrix<T>, speaker: &str) -> Result<Matrix<T>> {
    let delta = model.generator_output(u, speaker)?;
    Ok(apply_perturbation(u, &delta, T::of(model.config.lambda))?)
}

/// Decomposes the spectrogram, perturbs its spectral bases and recomposes
/// with the original singular values and temporal bases.
pub fn sbg_generate<T: Scalar>(model: &SbgModel<T>, spec: &Spectrogram<T>, speaker: &str) -> Result<Spectrogram<T>> {
    let c = model.config.n_channels;
    if spec.n_mels() != c {
        return Err(GanError::ShapeMismatch(format!("input has {} channels, model expects {c}", spec.n_mels())));
    }
    let svd = svd_decompose(spec)?;
    let u = sbg_perturb_bases(model, &svd.u, speaker)?;
    Ok(spec.with_values(recompose(&u, &svd.sigma, &svd.vt)?))
}

/// Speed perturbation by the speaker-dependent factor, feature extraction,
/// basis perturbation, then the speed-input convolutional GAN.
pub fn sbg_plus_sg<T: Scalar>(
    wave: &Waveform<T>,
    sbg: &SbgModel<T>,
    dcgan: &DcganModel<T>,
    speaker: &str,
    sd_factor: f64,
    mel: &MelConfig,
) -> Result<(Spectrogram<T>, Vec<Stage>)> {
    if dcgan.target_speaker != speaker {
        return Err(GanError::InvalidConfig(format!(
            "convolutional model targets {}, requested {speaker}",
            dcgan.target_speaker
        )));
    }
    let perturbed = speed_perturb(wave, sd_factor)?;
    let spec = mel_fbank(&perturbed, mel)?;
    let spec = sbg_generate(sbg, &spec, speaker)?;
    let spec = dcgan_generate(dcgan, &spec)?;
    let stages = vec![
        Stage::new("speed_perturb", &[("alpha", sd_factor.to_string())]),
        Stage::new("sbg", &[("lambda", sbg.config.lambda.to_string()), ("speaker", speaker.to_string())]),
        Stage::new("dcgan", &[("speaker", dcgan.target_speaker.clone())]),
    ];
    Ok((spec, stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::make_pairs;
    use crate::corpus::{Group, Utterance};

    fn small(c: usize) -> SbgConfig {
        SbgConfig { n_channels: c, gen_hidden: [16, 16], disc_hidden: [8, 16, 8], ..SbgConfig::default() }
    }

    #[test]
    fn generator_output_is_bounded() {
        let m =
            SbgModel::<f64>::init(SbgConfig { init_std: 3.0, ..small(4) }, vec!["a".into(), "b".into()], 1).unwrap();
        let u = Matrix::from_fn(4, 4, |i, j| (i as f64 - j as f64) * 10.0);
        let d = m.generator_output(&u, "b").unwrap();
        assert!(d.as_slice().iter().all(|v| v.abs() <= 1.0));
        assert!(matches!(m.generator_output(&u, "zz"), Err(GanError::UnknownSpeaker(_))));
        let up = sbg_perturb_bases(&m, &u, "a").unwrap();
        assert!(up.max_abs_diff(&u) <= 0.1);
    }

    #[test]
    fn zero_lambda_is_identity() {
        let m = SbgModel::<f64>::init(small(6), vec!["a".into()], 2).unwrap().with_lambda(0.0).unwrap();
        let s = Spectrogram::from_matrix(Matrix::from_fn(6, 9, |i, j| ((i * 5 + j * 3) % 7) as f64 - 2.0));
        let out = sbg_generate(&m, &s, "a").unwrap();
        assert!(out.values.frobenius_distance(&s.values) / s.values.frobenius_norm() < 1e-10);
    }

    fn utt(id: &str, spk: &str) -> Utterance {
        Utterance {
            utt_id: id.into(),
            speaker_id: spk.into(),
            group: Group::Target,
            audio_path: String::new(),
            duration: 1.0,
            word_id: None,
            tag: None,
        }
    }

    #[test]
    fn training_runs_and_checkpoints() {
        let c = 4;
        let mk = |k: usize| Matrix::from_fn(c, c, |i, j| ((i * 3 + j + k) as f64).sin());
        let control: BTreeMap<_, _> = (0..3).map(|k| (format!("c{k}"), mk(k))).collect();
        let mut targets = BTreeMap::new();
        for spk in ["F02", "M05"] {
            targets
                .insert(spk.to_string(), (0..2).map(|k| (format!("{spk}_{k}"), mk(k + 7))).collect::<BTreeMap<_, _>>());
        }
        let cu: Vec<Utterance> = control.keys().map(|k| utt(k, "CM")).collect();
        let pairings = vec![
            make_pairs(PairStrategy::Rand, &cu, &[utt("F02_0", "F02"), utt("F02_1", "F02")], 1).unwrap(),
            make_pairs(PairStrategy::Avg, &cu, &[utt("M05_0", "M05")], 1).unwrap(),
        ];
        let data = SbgTrainingData { control, targets, pairings };
        let sched = TrainSchedule { max_iters: 4, batch_size: 3, seed: 5, ..TrainSchedule::default() };
        let (a, rep) = train_sbg(&data, small(c), &sched).unwrap();
        let (b, _) = train_sbg(&data, small(c), &sched).unwrap();
        assert_eq!(rep.len(), 4);
        assert!(rep.all_finite());
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
        let back =
            SbgModel::<f64>::from_checkpoint(&Checkpoint::from_bytes(&a.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.speakers, a.speakers);
        assert_eq!(back.config, a.config);

        let mut bad = data.clone();
        bad.pairings[0].target_speaker = "X".into();
        assert!(matches!(train_sbg(&bad, small(c), &sched), Err(GanError::UnknownSpeakerInPairing(_))));
        assert!(matches!(train_sbg(&data, small(5), &sched), Err(GanError::ShapeMismatch(_))));
    }
}
