use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{Grads, Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors, addressed by [`ParamId`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value.with_grad(true));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Copies values from `other` where names and shapes agree.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<(), TensorError> {
        for (name, v) in other.names.iter().zip(&other.values) {
            let id = self.find(name).ok_or_else(|| TensorError::Shape {
                op: "load_params",
                detail: format!("unknown parameter {name}"),
            })?;
            if self.values[id.0].shape() != v.shape() {
                return Err(TensorError::Shape {
                    op: "load_params",
                    detail: format!("{name}: {:?} vs {:?}", self.values[id.0].shape(), v.shape()),
                });
            }
            self.values[id.0] = v.clone().with_grad(true);
        }
        Ok(())
    }
}

/// A tape with every parameter of a store recorded as a trainable leaf.
pub struct Session<T> {
    tape: Tape<T>,
    bound: Vec<Var>,
}

impl<T: Scalar> Session<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let mut tape = Tape::new();
        let bound = store.values.iter().map(|v| tape.param(v.clone())).collect();
        Session { tape, bound }
    }

    /// Like [`Session::new`] but parameters are constants (inference only).
    pub fn frozen(store: &ParamStore<T>) -> Self {
        let mut tape = Tape::new();
        let bound = store.values.iter().map(|v| tape.constant(v.clone())).collect();
        Session { tape, bound }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.bound[id.0]
    }

    /// Per-parameter gradients in store order (zeros where unused).
    pub fn param_grads(&self, store: &ParamStore<T>, loss: Var) -> Result<Vec<Tensor<T>>, TensorError> {
        let g = self.tape.backward(loss)?;
        Ok(self.collect(store, &g))
    }

    pub fn collect(&self, store: &ParamStore<T>, g: &Grads<T>) -> Vec<Tensor<T>> {
        self.bound
            .iter()
            .zip(&store.values)
            .map(|(&v, t)| g.get_or_zeros(v, t.shape()))
            .collect()
    }
}

impl<T> Deref for Session<T> {
    type Target = Tape<T>;
    fn deref(&self) -> &Tape<T> {
        &self.tape
    }
}

impl<T> DerefMut for Session<T> {
    fn deref_mut(&mut self) -> &mut Tape<T> {
        &mut self.tape
    }
}

/// Glorot-uniform initialization for a `fan_in × fan_out` weight.
pub fn glorot<T: Scalar, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| T::of(rng.gen_range(-a..a))).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("glorot shape")
}

/// Orthogonal initialization: rows or columns orthonormal, whichever is fewer,
/// obtained by Gram-Schmidt on a Gaussian matrix and scaled by `gain`.
pub fn orthogonal<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, gain: f64) -> Tensor<T> {
    let (short, long) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let mut data = vec![T::zero(); rows * cols];
    for (s, b) in basis.iter().enumerate() {
        for (l, &x) in b.iter().enumerate() {
            let (r, c) = if rows <= cols { (s, l) } else { (l, s) };
            data[r * cols + c] = T::of(gain * x);
        }
    }
    Tensor::new(vec![rows, cols], data).expect("orthogonal shape")
}
