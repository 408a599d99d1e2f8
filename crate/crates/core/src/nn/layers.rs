use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Graph, NnError, Padding, ParamStore, Result, Tensor, Var};
use crate::scalar::Scalar;

/// One stage of a feed-forward stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: (usize, usize), stride: (usize, usize) },
    Fc { in_features: usize, out_features: usize },
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    Flatten,
    ReplicatePad(Padding),
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, k: usize, s: usize) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel: (k, k), stride: (s, s) }
    }

    pub fn fc(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Fc { in_features, out_features }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
                if stride.0 == 0
                    || stride.1 == 0
                    || kernel.0 == 0
                    || kernel.1 == 0
                    || in_channels == 0
                    || out_channels == 0
                {
                    return Err(NnError::InvalidLayer(format!("{self:?}")));
                }
            }
            LayerSpec::Fc { in_features, out_features } => {
                if in_features == 0 || out_features == 0 {
                    return Err(NnError::InvalidLayer(format!("{self:?}")));
                }
            }
            LayerSpec::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => {
                return Err(NnError::InvalidLayer(format!("leaky_relu slope {slope} outside (0, 1)")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Shapes of this layer's (weight, bias), if it has parameters.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                Some((vec![out_channels, in_channels, kernel.0, kernel.1], vec![out_channels]))
            }
            LayerSpec::Fc { in_features, out_features } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    /// Output shape for an input of `shape`, without running anything.
    pub fn output_shape(&self, shape: &[usize]) -> Result<Vec<usize>> {
        let mismatch = || NnError::ShapeMismatch(format!("{self:?} cannot take input {shape:?}"));
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => match *shape {
                [n, c, h, w] if c == in_channels && h >= kernel.0 && w >= kernel.1 => {
                    Ok(vec![n, out_channels, (h - kernel.0) / stride.0 + 1, (w - kernel.1) / stride.1 + 1])
                }
                _ => Err(mismatch()),
            },
            LayerSpec::Fc { in_features, out_features } => match *shape {
                [n, f] if f == in_features => Ok(vec![n, out_features]),
                _ => Err(mismatch()),
            },
            LayerSpec::Flatten => match shape {
                [n, rest @ ..] if !rest.is_empty() => Ok(vec![*n, rest.iter().product()]),
                _ => Err(mismatch()),
            },
            LayerSpec::ReplicatePad(p) => match *shape {
                [n, c, h, w] if h > 0 && w > 0 => Ok(vec![n, c, h + p.top + p.bottom, w + p.left + p.right]),
                _ => Err(mismatch()),
            },
            _ => Ok(shape.to_vec()),
        }
    }
}

/// Layer stack with its parameters.
///
/// Parameters of layer `i` (if any) live at `params[2k]` (weight) and
/// `params[2k + 1]` (bias) where `k` counts parameterized layers before `i`.
#[derive(Debug)]
pub struct Sequential<T> {
    layers: Vec<LayerSpec>,
    params: ParamStore<T>,
    slots: Vec<Option<(usize, usize)>>,
}

impl<T: Scalar> Clone for Sequential<T> {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), params: self.params.clone(), slots: self.slots.clone() }
    }
}

impl<T: Scalar> Sequential<T> {
    /// Weights from `N(0, std)`, biases zero.
    pub fn init<R: Rng>(layers: Vec<LayerSpec>, std: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, std).map_err(|e| NnError::InvalidLayer(e.to_string()))?;
        Self::build(layers, |shape, is_bias| {
            let n: usize = shape.iter().product();
            let data = if is_bias { vec![T::zero(); n] } else { (0..n).map(|_| T::of(normal.sample(rng))).collect() };
            Tensor::new(shape.to_vec(), data).expect("consistent shape")
        })
    }

    /// Stack whose weights and biases are all zero.
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        Self::build(layers, |shape, _| Tensor::zeros(shape))
    }

    fn build(layers: Vec<LayerSpec>, mut make: impl FnMut(&[usize], bool) -> Tensor<T>) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut slots = Vec::with_capacity(layers.len());
        for layer in &layers {
            layer.validate()?;
            slots.push(layer.param_shapes().map(|(ws, bs)| {
                let w = params.push(make(&ws, false));
                let b = params.push(make(&bs, true));
                (w, b)
            }));
        }
        Ok(Self { layers, params, slots })
    }

    /// Reassembles a stack from layers and a flat parameter list.
    pub fn from_parts(layers: Vec<LayerSpec>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut it = tensors.into_iter();
        let mut err = None;
        let seq = Self::build(layers, |shape, _| match it.next() {
            Some(t) if t.shape() == shape => t,
            other => {
                err.get_or_insert_with(|| {
                    NnError::ShapeMismatch(format!(
                        "parameter expected {shape:?}, found {:?}",
                        other.as_ref().map(|t| t.shape().to_vec())
                    ))
                });
                Tensor::zeros(shape)
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        if it.next().is_some() {
            return Err(NnError::ShapeMismatch("more parameters than layers need".into()));
        }
        Ok(seq)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// `(weight, bias)` of layer `i`.
    pub fn layer_params(&self, i: usize) -> Option<(&Tensor<T>, &Tensor<T>)> {
        self.slots[i].map(|(w, b)| (self.params.get(w), self.params.get(b)))
    }

    pub fn param_slots(&self, i: usize) -> Option<(usize, usize)> {
        self.slots[i]
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers.iter().try_fold(input.to_vec(), |s, l| l.output_shape(&s))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Appends the stack's operations to `g`, starting from `x`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (layer, slot) in self.layers.iter().zip(&self.slots) {
            layer.output_shape(g.value(h).shape())?;
            h = match (*layer, *slot) {
                (LayerSpec::Conv2d { stride, .. }, Some((w, b))) => {
                    let (w, b) = (g.param(&self.params, w), g.param(&self.params, b));
                    g.conv2d(h, w, b, stride)?
                }
                (LayerSpec::Fc { .. }, Some((w, b))) => {
                    let (w, b) = (g.param(&self.params, w), g.param(&self.params, b));
                    g.linear(h, w, b)?
                }
                (LayerSpec::Relu, _) => g.relu(h),
                (LayerSpec::LeakyRelu { slope }, _) => g.leaky_relu(h, T::of(slope)),
                (LayerSpec::Tanh, _) => g.tanh(h),
                (LayerSpec::Sigmoid, _) => g.sigmoid(h),
                (LayerSpec::Flatten, _) => g.flatten(h)?,
                (LayerSpec::ReplicatePad(p), _) => g.replicate_pad(h, p)?,
                (l, s) => unreachable!("layer {l:?} with slot {s:?}"),
            };
        }
        Ok(h)
    }

    /// Forward pass on a throwaway graph.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let y = self.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        Sequential { layers: self.layers.clone(), params: self.params.cast(), slots: self.slots.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_padded_conv_preserves_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Sequential::<f64>::init(
            vec![LayerSpec::ReplicatePad(Padding::uniform(1)), LayerSpec::conv(1, 8, 3, 1)],
            0.02,
            &mut rng,
        )
        .unwrap();
        assert_eq!(net.output_shape(&[2, 1, 40, 57]).unwrap(), vec![2, 8, 40, 57]);
        let y = net.infer(&Tensor::zeros(&[2, 1, 40, 57])).unwrap();
        assert_eq!(y.shape(), &[2, 8, 40, 57]);
    }

    #[test]
    fn strided_conv_floors() {
        let l = LayerSpec::conv(1, 8, 2, 2);
        assert_eq!(l.output_shape(&[1, 1, 41, 7]).unwrap(), vec![1, 8, 20, 3]);
    }

    #[test]
    fn identity_kernel_passes_input() {
        let mut net =
            Sequential::<f64>::zeros(vec![LayerSpec::ReplicatePad(Padding::uniform(1)), LayerSpec::conv(1, 1, 3, 1)])
                .unwrap();
        let (w, _) = net.param_slots(1).unwrap();
        net.params_mut().get_mut(w).data_mut()[4] = 1.0;
        let x = Tensor::new(vec![1, 1, 3, 4], (0..12).map(|v| v as f64 * 0.5 - 2.0).collect()).unwrap();
        assert_eq!(net.infer(&x).unwrap(), x);
    }

    #[test]
    fn zero_fc_emits_bias() {
        let mut net = Sequential::<f64>::zeros(vec![LayerSpec::fc(3, 2)]).unwrap();
        let (_, b) = net.param_slots(0).unwrap();
        net.params_mut().get_mut(b).data_mut().copy_from_slice(&[0.25, -1.5]);
        let y = net.infer(&Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -4.0, 5.0, 6.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.25, -1.5, 0.25, -1.5]);
    }

    #[test]
    fn invalid_layers_rejected() {
        assert!(Sequential::<f32>::zeros(vec![LayerSpec::LeakyRelu { slope: 1.5 }]).is_err());
        assert!(Sequential::<f32>::zeros(vec![LayerSpec::conv(1, 1, 3, 0)]).is_err());
        let net = Sequential::<f32>::zeros(vec![LayerSpec::fc(3, 2)]).unwrap();
        assert!(matches!(net.infer(&Tensor::zeros(&[1, 4])), Err(NnError::ShapeMismatch(_))));
    }
}
