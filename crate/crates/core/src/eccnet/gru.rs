use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamId, ParamStore, Reduce, Session, Tensor, TensorError, Var, LAYER_NORM_EPS};
use crate::scalar::Scalar;

use super::ecc::EdgeBatch;
use super::mlp::{Arity, FilterNet, FilterNetConfig, Init, Linear};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruConfig {
    /// Hidden width `d_z`.
    pub dim: usize,
    pub attr_dim: usize,
    pub classes: usize,
    /// Number of propagation steps `T`.
    pub steps: usize,
    pub input_gating: bool,
    pub layer_norm: bool,
    /// Read out from all states `H^1..H^{T+1}` (true) or only the last.
    pub concat_states: bool,
    pub filter: FilterNetConfig,
}

impl GruConfig {
    pub fn new(dim: usize, attr_dim: usize, classes: usize, steps: usize) -> Self {
        GruConfig {
            dim,
            attr_dim,
            classes,
            steps,
            input_gating: true,
            layer_norm: true,
            concat_states: true,
            filter: FilterNetConfig::default(),
        }
    }
}

/// Gated recurrent unit whose input is an edge-conditioned message with
/// per-edge weight vectors:
///
/// ```text
/// M_i = mean_{(j,i)} w(E_ji) ⊙ H_j
/// X_i = σ(H_i W_g + b_g) ⊙ M_i
/// (x1,x2,x3) = ρ(X_i W_x + b_x),  (h1,h2,h3) = ρ(H_i W_h + b_h)
/// Q = tanh(x1 + R ⊙ h1),  U = σ(x2 + h2),  R = σ(x3 + h3)
/// H'_i = (1 − U) ⊙ Q + U ⊙ H_i
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GruCell {
    pub cfg: GruConfig,
    pub filter: FilterNet,
    pub w_g: Linear,
    pub w_x: Linear,
    pub w_h: Linear,
    /// Added to the normalized pre-activations of all three gates.
    pub gate_bias: ParamId,
    pub w_o: Linear,
}

impl GruCell {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, cfg: GruConfig) -> Self {
        let d = cfg.dim;
        let filter = FilterNet::new(store, rng, &format!("{name}.w"), cfg.attr_dim, Arity::Vector(d), &cfg.filter);
        let w_g = Linear::new(store, rng, &format!("{name}.g"), d, d, true, Init::Glorot);
        let w_x = Linear::new(store, rng, &format!("{name}.x"), d, 3 * d, true, Init::Glorot);
        let w_h = Linear::new(store, rng, &format!("{name}.h"), d, 3 * d, true, Init::Glorot);
        let gate_bias = store.add(format!("{name}.gate_b"), Tensor::zeros(vec![3 * d]));
        let read = if cfg.concat_states { d * (cfg.steps + 1) } else { d };
        let w_o = Linear::new(store, rng, &format!("{name}.o"), read, cfg.classes, true, Init::Glorot);
        GruCell { cfg, filter, w_g, w_x, w_h, gate_bias, w_o }
    }

    /// `M`: mean over incoming edges of `w(E) ⊙ H_j`; zero for isolated nodes.
    pub fn message<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, h: Var) -> Result<Var> {
        let attrs = s.constant(eb.unique_attr.clone());
        let wu = self.filter.forward(s, attrs)?;
        let w = s.gather_rows(wu, &eb.attr_index)?;
        let hj = s.gather_rows(h, &eb.src)?;
        let msg = s.mul(w, hj)?;
        s.segment_reduce(msg, &eb.dst, eb.n, Reduce::Mean)
    }

    /// One propagation step; `eb` must be built without self-loops.
    pub fn step<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, h: Var) -> Result<Var> {
        let d = self.cfg.dim;
        if s.value(h).cols() != d {
            return Err(TensorError::Shape { op: "gru_step", detail: format!("state width {} != {d}", s.value(h).cols()) });
        }
        let m = self.message(s, eb, h)?;
        let x = if self.cfg.input_gating {
            let g = self.w_g.forward(s, h)?;
            let g = s.sigmoid(g);
            s.mul(g, m)?
        } else {
            m
        };
        let mut hx = self.w_x.forward(s, x)?;
        let mut hh = self.w_h.forward(s, h)?;
        if self.cfg.layer_norm {
            hx = s.layer_norm(hx, T::of(LAYER_NORM_EPS))?;
            hh = s.layer_norm(hh, T::of(LAYER_NORM_EPS))?;
        }
        let gb = s.p(self.gate_bias);
        hx = s.add_row(hx, gb)?;
        let (x1, x2, x3) = (s.slice_cols(hx, 0, d)?, s.slice_cols(hx, d, d)?, s.slice_cols(hx, 2 * d, d)?);
        let (h1, h2, h3) = (s.slice_cols(hh, 0, d)?, s.slice_cols(hh, d, d)?, s.slice_cols(hh, 2 * d, d)?);
        let r = s.add(x3, h3)?;
        let r = s.sigmoid(r);
        let u = s.add(x2, h2)?;
        let u = s.sigmoid(u);
        let rh = s.mul(r, h1)?;
        let q = s.add(x1, rh)?;
        let q = s.tanh(q);
        let keep = s.one_minus(u);
        let a = s.mul(keep, q)?;
        let b = s.mul(u, h)?;
        s.add(a, b)
    }

    /// Runs `T` steps from `H^1 = z`, returning `[H^1, ..., H^{T+1}]`.
    pub fn unroll<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, z: Var) -> Result<Vec<Var>> {
        let mut states = vec![z];
        for _ in 0..self.cfg.steps {
            let next = self.step(s, eb, *states.last().expect("nonempty"))?;
            states.push(next);
        }
        Ok(states)
    }

    /// Logits `Y = concat(H^1..H^{T+1}) W_o + b_o` (or the last state only).
    pub fn readout<T: Scalar>(&self, s: &mut Session<T>, states: &[Var]) -> Result<Var> {
        let Some(&last) = states.last() else {
            return Err(TensorError::Shape { op: "gru_readout", detail: "no states".into() });
        };
        let input = if self.cfg.concat_states {
            if states.len() != self.cfg.steps + 1 {
                return Err(TensorError::Shape {
                    op: "gru_readout",
                    detail: format!("{} states, expected {}", states.len(), self.cfg.steps + 1),
                });
            }
            s.concat_cols(states)?
        } else {
            last
        };
        self.w_o.forward(s, input)
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, z: Var) -> Result<Var> {
        let states = self.unroll(s, eb, z)?;
        self.readout(s, &states)
    }
}
