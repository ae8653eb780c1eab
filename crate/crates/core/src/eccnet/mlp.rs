use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{glorot, orthogonal, ParamId, ParamStore, Session, Tensor, TensorError, Var, LAYER_NORM_EPS};
use crate::scalar::Scalar;

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, s: &mut Session<T>, x: Var) -> Var {
        match self {
            Activation::Relu => s.relu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Glorot,
    Orthogonal,
}

/// Affine layer `x W + b` with `W: din×dout`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let w = match init {
            Init::Glorot => glorot(rng, din, dout),
            Init::Orthogonal => orthogonal(rng, din, dout, 1.0),
        };
        let w = store.add(format!("{name}.w"), w);
        let b = bias.then(|| store.add(format!("{name}.b"), Tensor::zeros(vec![dout])));
        Linear { w, b, din, dout }
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let w = s.p(self.w);
        let y = s.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = s.p(b);
                s.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Multi-layer perceptron with a shared hidden activation and an optional
/// layer normalization after one hidden layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
    /// Apply layer normalization after the output of this layer index (before its activation).
    pub norm_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub last_bias: bool,
    pub init: Init,
    pub norm_after: Option<usize>,
}

impl MlpConfig {
    pub fn new(widths: Vec<usize>) -> Self {
        MlpConfig {
            widths,
            hidden: Activation::Relu,
            output: Activation::Identity,
            last_bias: true,
            init: Init::Glorot,
            norm_after: None,
        }
    }
}

impl Mlp {
    /// `widths` includes the input width: `[din, h1, ..., dout]`.
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, cfg: &MlpConfig) -> Self {
        let n = cfg.widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|l| {
                let bias = l + 1 < n || cfg.last_bias;
                Linear::new(store, rng, &format!("{name}.{l}"), cfg.widths[l], cfg.widths[l + 1], bias, cfg.init)
            })
            .collect();
        Mlp { layers, hidden: cfg.hidden, output: cfg.output, norm_after: cfg.norm_after }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.din)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.dout)
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, mut x: Var) -> Result<Var> {
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            x = layer.forward(s, x)?;
            if self.norm_after == Some(l) {
                x = s.layer_norm(x, T::of(LAYER_NORM_EPS))?;
            }
            x = if l + 1 < n { self.hidden.apply(s, x) } else { self.output.apply(s, x) };
        }
        Ok(x)
    }
}

/// Shape of a filter-generating network's output per edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    /// Row-major `dout × din` weight matrix (ECC).
    Matrix { dout: usize, din: usize },
    /// Weight vector applied elementwise (ECC-VV).
    Vector(usize),
    /// Single factor (ECC-f).
    Scalar,
}

impl Arity {
    pub fn width(self) -> usize {
        match self {
            Arity::Matrix { dout, din } => dout * din,
            Arity::Vector(d) => d,
            Arity::Scalar => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterNetConfig {
    /// Hidden widths between the attribute input and the output layer.
    pub hidden: Vec<usize>,
    pub last_bias: bool,
    pub norm_after: Option<usize>,
}

impl Default for FilterNetConfig {
    fn default() -> Self {
        FilterNetConfig { hidden: vec![16, 32], last_bias: true, norm_after: None }
    }
}

impl FilterNetConfig {
    /// Single linear layer without bias: `w(E) = θ E`.
    pub fn linear() -> Self {
        FilterNetConfig { hidden: vec![], last_bias: false, norm_after: None }
    }

    /// Hidden widths divided by `factor` (at least 1).
    pub fn scaled(mut self, factor: usize) -> Self {
        let f = factor.max(1);
        self.hidden.iter_mut().for_each(|w| *w = (*w / f).max(1));
        self
    }
}

/// Filter-generating network mapping edge attributes to per-edge weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterNet {
    pub mlp: Mlp,
    pub arity: Arity,
}

impl FilterNet {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        attr_dim: usize,
        arity: Arity,
        cfg: &FilterNetConfig,
    ) -> Self {
        let mut widths = vec![attr_dim];
        widths.extend(&cfg.hidden);
        widths.push(arity.width());
        let mcfg = MlpConfig {
            widths,
            hidden: Activation::Relu,
            output: Activation::Identity,
            last_bias: cfg.last_bias,
            init: Init::Orthogonal,
            norm_after: cfg.norm_after,
        };
        FilterNet { mlp: Mlp::new(store, rng, name, &mcfg), arity }
    }

    pub fn attr_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, attrs: Var) -> Result<Var> {
        if s.value(attrs).cols() != self.attr_dim() {
            return Err(TensorError::Shape {
                op: "filter_net",
                detail: format!("attribute width {} != {}", s.value(attrs).cols(), self.attr_dim()),
            });
        }
        self.mlp.forward(s, attrs)
    }
}
