use super::{NnError, ParamStore, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Step-decay learning-rate schedule plus loop sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub base_lr: f64,
    pub halve_every: usize,
    pub max_iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            base_lr: 2e-4,
            halve_every: 2500,
            max_iters: 10_000,
            batch_size: 16,
            seed: 0,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) || self.halve_every == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidSchedule(format!(
                "base_lr {} / halve_every {} / batch_size {}",
                self.base_lr, self.halve_every, self.batch_size
            )));
        }
        Ok(())
    }

    /// `base_lr * 0.5^floor(iter / halve_every)`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let halvings = (iter / self.halve_every).min(i32::MAX as usize) as i32;
        self.base_lr * 0.5f64.powi(halvings)
    }
}

/// Optimizer state for one parameter store.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    /// Applies one update at `schedule.lr_at(iter)` and clears the gradients.
    /// Returns the learning rate used.
    pub fn step(&mut self, store: &mut ParamStore<T>, schedule: &TrainSchedule, iter: usize) -> Result<f64> {
        if !store.has_grads() {
            return Err(NnError::MissingGrads);
        }
        let lr = schedule.lr_at(iter);
        let lr_t = T::of(lr);
        let (params, grads) = store.take_parts();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    let g = g.as_ref().expect("checked above");
                    for (pi, &gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *pi -= lr_t * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let (b1, b2, e) = (T::of(beta1), T::of(beta2), T::of(eps));
                let bc1 = T::one() - b1.powi(self.t);
                let bc2 = T::one() - b2.powi(self.t);
                for (k, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
                    let g = g.as_ref().expect("checked above");
                    for ((pi, &gi), (mi, vi)) in
                        p.data_mut().iter_mut().zip(g.data()).zip(self.m[k].iter_mut().zip(self.v[k].iter_mut()))
                    {
                        *mi = b1 * *mi + (T::one() - b1) * gi;
                        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                        let mhat = *mi / bc1;
                        let vhat = *vi / bc2;
                        *pi -= lr_t * mhat / (vhat.sqrt() + e);
                    }
                }
            }
        }
        store.zero_grad();
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Tensor};

    #[test]
    fn halving_schedule() {
        let s = TrainSchedule { base_lr: 1e-3, ..TrainSchedule::default() };
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(2499), 1e-3);
        assert_eq!(s.lr_at(2500), 5e-4);
        assert_eq!(s.lr_at(5000), 2.5e-4);
        assert_eq!(s.lr_at(7499), 2.5e-4);
    }

    #[test]
    fn sgd_step_is_exact_and_clears_grads() {
        let mut store = ParamStore::<f64>::new();
        let i = store.push(Tensor::new(vec![1], vec![3.0]).unwrap());
        let mut g = Graph::new();
        let p = g.param(&store, i);
        let p2 = g.scale(p, 2.5);
        let loss = g.sum(p2);
        store.accumulate(&g.backward(loss).unwrap());
        let sched = TrainSchedule { base_lr: 0.1, optimizer: OptimizerKind::Sgd, ..TrainSchedule::default() };
        let mut opt = Optimizer::new(sched.optimizer);
        let lr = opt.step(&mut store, &sched, 0).unwrap();
        assert_eq!(lr, 0.1);
        assert_eq!(store.get(i).data()[0], 3.0 - 0.1 * 2.5);
        assert!(store.grad(i).is_none());
        assert!(matches!(opt.step(&mut store, &sched, 1), Err(NnError::MissingGrads)));
    }

    #[test]
    fn schedule_validation() {
        assert!(TrainSchedule { halve_every: 0, ..TrainSchedule::default() }.validate().is_err());
        assert!(TrainSchedule { base_lr: 0.0, ..TrainSchedule::default() }.validate().is_err());
        TrainSchedule::default().validate().unwrap();
    }
}
