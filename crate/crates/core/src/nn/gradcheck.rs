//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Result, Sequential, Tensor};

/// Anything exposing a scalar loss over parameters and an input, together
/// with its analytic gradients.
pub trait Differentiable {
    fn params(&self) -> &ParamStore<f64>;
    fn params_mut(&mut self) -> &mut ParamStore<f64>;
    fn loss(&self, input: &Tensor<f64>) -> Result<f64>;
    /// Loss, per-parameter gradients (same order as `params`) and input gradient.
    fn loss_and_grads(&self, input: &Tensor<f64>) -> Result<(f64, Vec<Tensor<f64>>, Tensor<f64>)>;
}

/// Fixed, non-degenerate projection weights turning a network output into a scalar.
fn probe(i: usize) -> f64 {
    (0.7 * i as f64 + 0.3).sin() + 0.1
}

impl Differentiable for Sequential<f64> {
    fn params(&self) -> &ParamStore<f64> {
        Sequential::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        Sequential::params_mut(self)
    }

    fn loss(&self, input: &Tensor<f64>) -> Result<f64> {
        let y = self.infer(input)?;
        Ok(y.data().iter().enumerate().map(|(i, &v)| probe(i) * v).sum())
    }

    fn loss_and_grads(&self, input: &Tensor<f64>) -> Result<(f64, Vec<Tensor<f64>>, Tensor<f64>)> {
        let mut g = Graph::new();
        let x = g.tracked_input(input.clone());
        let y = self.forward(&mut g, x)?;
        let yv = g.value(y);
        let w = Tensor::new(yv.shape().to_vec(), (0..yv.len()).map(probe).collect())?;
        let wv = g.input(w);
        let prod = g.mul(y, wv)?;
        let loss = g.sum(prod);
        let grads = g.backward(loss)?;
        let param_grads = self
            .params()
            .grads_in(&grads)
            .into_iter()
            .enumerate()
            .map(|(i, gr)| gr.unwrap_or_else(|| Tensor::zeros(self.params().get(i).shape())))
            .collect();
        let gx = grads.of(x).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        Ok((g.value(loss).item(), param_grads, gx))
    }
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Human-readable location of the worst entry.
    pub worst: String,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when the model could not be evaluated at all.
    pub error: Option<String>,
}

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Compares analytic gradients with central differences on a random subsample
/// of at most `per_tensor` entries from every parameter tensor and the input.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the check passes iff
/// the largest one is below `tolerance`.
pub fn grad_check<M: Differentiable>(
    model: &mut M,
    input: &Tensor<f64>,
    tolerance: f64,
    per_tensor: usize,
    seed: u64,
) -> GradCheckReport {
    let mut report =
        GradCheckReport { checked: 0, max_rel_error: 0.0, worst: String::new(), tolerance, passed: false, error: None };
    let (_, pgrads, xgrad) = match model.loss_and_grads(input) {
        Ok(v) => v,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let record = |report: &mut GradCheckReport, what: String, analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        report.checked += 1;
        if !(rel <= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = format!("{what}: analytic {analytic:e}, numeric {numeric:e}");
        }
    };

    for (pi, pg) in pgrads.iter().enumerate() {
        let n = pg.len();
        for idx in sample(&mut rng, n, per_tensor.min(n)).into_iter() {
            let orig = model.params().get(pi).data()[idx];
            let eval = |model: &mut M, v: f64| {
                model.params_mut().get_mut(pi).data_mut()[idx] = v;
                model.loss(input)
            };
            let plus = eval(model, orig + FD_STEP);
            let minus = eval(model, orig - FD_STEP);
            model.params_mut().get_mut(pi).data_mut()[idx] = orig;
            match (plus, minus) {
                (Ok(p), Ok(m)) => {
                    record(&mut report, format!("param {pi}[{idx}]"), pg.data()[idx], (p - m) / (2.0 * FD_STEP))
                }
                (Err(e), _) | (_, Err(e)) => {
                    report.error = Some(e.to_string());
                    return report;
                }
            }
        }
    }
    let n = input.len();
    let mut x = input.clone();
    for idx in sample(&mut rng, n, per_tensor.min(n)).into_iter() {
        let orig = x.data()[idx];
        x.data_mut()[idx] = orig + FD_STEP;
        let plus = model.loss(&x);
        x.data_mut()[idx] = orig - FD_STEP;
        let minus = model.loss(&x);
        x.data_mut()[idx] = orig;
        match (plus, minus) {
            (Ok(p), Ok(m)) => {
                record(&mut report, format!("input[{idx}]"), xgrad.data()[idx], (p - m) / (2.0 * FD_STEP))
            }
            (Err(e), _) | (_, Err(e)) => {
                report.error = Some(e.to_string());
                return report;
            }
        }
    }
    report.passed = report.error.is_none() && report.checked > 0 && report.max_rel_error < tolerance;
    report
}
