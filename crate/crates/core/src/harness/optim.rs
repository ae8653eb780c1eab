use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Tensor, TensorError};
use crate::scalar::Scalar;

fn check_shapes<T: Scalar>(params: &[Tensor<T>], grads: &[Tensor<T>]) -> Result<(), TensorError> {
    if params.len() != grads.len() {
        return Err(TensorError::Shape { op: "optimizer", detail: format!("{} params, {} grads", params.len(), grads.len()) });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(TensorError::Shape { op: "optimizer", detail: format!("param {:?} vs grad {:?}", p.shape(), g.shape()) });
        }
    }
    Ok(())
}

/// Clamps every gradient entry into `[-c, c]`.
pub fn clip_gradients<T: Scalar>(grads: &mut [Tensor<T>], c: f64) {
    let c = T::of(c);
    for g in grads {
        g.data_mut().iter_mut().for_each(|v| *v = v.max(-c).min(c));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        Self::for_shapes(store.values(), config)
    }

    pub fn for_shapes(params: &[Tensor<T>], config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Adam { config, m: zeros(), v: zeros(), t: 0 }
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<(), TensorError> {
        check_shapes(params, grads)?;
        check_shapes(&self.m, grads)?;
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - b1.powi(self.t as i32);
        let bc2 = T::one() - b2.powi(self.t as i32);
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let pd = p.data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                let mk = b1 * m.data()[k] + (T::one() - b1) * gk;
                let vk = b2 * v.data()[k] + (T::one() - b2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                pd[k] -= lr * (mk / bc1) / ((vk / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_store(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<(), TensorError> {
        self.step(store.values_mut(), grads)
    }
}

/// Learning rate multiplied by `factor` at each listed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl StepSchedule {
    pub fn constant(lr: f64) -> Self {
        StepSchedule { lr, milestones: Vec::new(), factor: 1.0 }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr * self.factor.powi(drops as i32)
    }
}

/// `p ← p − lr·g`.
pub fn sgd_step<T: Scalar>(params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<(), TensorError> {
    check_shapes(params, grads)?;
    let lr = T::of(lr);
    for (p, g) in params.iter_mut().zip(grads) {
        p.data_mut().iter_mut().zip(g.data()).for_each(|(x, &d)| *x -= lr * d);
    }
    Ok(())
}

/// Plain SGD following a step schedule.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub schedule: StepSchedule,
}

impl Sgd {
    pub fn step<T: Scalar>(&self, params: &mut [Tensor<T>], grads: &[Tensor<T>], epoch: usize) -> Result<(), TensorError> {
        sgd_step(params, grads, self.schedule.lr_at(epoch))
    }
}
