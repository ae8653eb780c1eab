use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Session, Tape, Tensor, TensorError, Var};
use crate::eccnet::{
    batch_graphs, global_pool, Activation, EccIdLayer, EdgeBatch, FilterNetConfig, GatedPool, Init, Linear, Mlp,
    MlpConfig, PoolMode,
};
use crate::graphcore::AttributedGraph;
use crate::scalar::Scalar;

use super::graph::{DenseGraph, ProbGraph};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Maximum number of decoded nodes.
    pub k: usize,
    pub d_n: usize,
    pub d_e: usize,
    /// Latent size.
    pub c: usize,
    /// Label size for the conditional model (0 = unconditional).
    pub d_y: usize,
    pub encoder: Vec<usize>,
    pub pool: usize,
    pub decoder: Vec<usize>,
}

impl VaeConfig {
    pub fn new(k: usize, d_n: usize, d_e: usize, c: usize) -> Self {
        VaeConfig { k, d_n, d_e, c, d_y: 0, encoder: vec![32, 64], pool: 128, decoder: vec![128, 256, 512] }
    }

    /// Hidden widths divided by `factor`.
    pub fn scaled(mut self, factor: usize) -> Self {
        let f = factor.max(1);
        for w in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            *w = (*w / f).max(1);
        }
        self.pool = (self.pool / f).max(1);
        self
    }

    /// Number of upper-triangular pairs including the diagonal.
    pub fn tri(&self) -> usize {
        self.k * (self.k + 1) / 2
    }
}

/// Index of the pair `{a, b}` in row-major upper-triangular order.
pub fn tri_index(k: usize, a: usize, b: usize) -> usize {
    let (a, b) = (a.min(b), a.max(b));
    a * k - a * (a + 1) / 2 + b
}

/// Posterior parameters and a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
    pub z: Vec<T>,
    pub y: Option<Vec<T>>,
}

/// Tape variables of an encoded batch: `mu`, `log_sigma` and `z` are `B×c`.
#[derive(Clone, Copy, Debug)]
pub struct Posterior {
    pub mu: Var,
    pub log_sigma: Var,
    pub z: Var,
}

/// ECC encoder with gated global pooling and a Gaussian head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Encoder {
    pub layers: Vec<EccIdLayer>,
    pub pool: GatedPool,
    pub head: Linear,
    pub c: usize,
    pub d_y: usize,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, cfg: &VaeConfig) -> Self {
        let mut din = cfg.d_n;
        let mut layers = Vec::new();
        for (l, &w) in cfg.encoder.iter().enumerate() {
            layers.push(EccIdLayer::new(store, rng, &format!("{name}.ecc{l}"), cfg.d_e, din, w, &FilterNetConfig::linear()));
            din = w;
        }
        let pool = GatedPool::new(store, rng, &format!("{name}.pool"), din + cfg.d_y, cfg.pool);
        let head = Linear::new(store, rng, &format!("{name}.head"), cfg.pool, 2 * cfg.c, true, Init::Glorot);
        Encoder { layers, pool, head, c: cfg.c, d_y: cfg.d_y }
    }

    /// Returns `(mu, log_sigma)`, each `B×c`. `ys` holds one label per graph
    /// for the conditional model.
    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, graphs: &[&AttributedGraph<T>], ys: Option<&[Vec<T>]>) -> Result<(Var, Var)> {
        let (g, owner) = batch_graphs(graphs).map_err(|e| TensorError::Shape { op: "encoder", detail: e.to_string() })?;
        let eb = EdgeBatch::new(&g, false);
        let mut h = s.constant(g.node_attr.clone());
        for l in &self.layers {
            h = l.forward(s, &eb, h)?;
        }
        if self.d_y > 0 {
            let ys = ys.ok_or_else(|| TensorError::Domain { op: "encoder", detail: "conditional model needs labels".into() })?;
            let mut data = Vec::with_capacity(owner.len() * self.d_y);
            for &o in &owner {
                if ys[o].len() != self.d_y {
                    return Err(TensorError::Shape { op: "encoder", detail: format!("label width {} != {}", ys[o].len(), self.d_y) });
                }
                data.extend_from_slice(&ys[o]);
            }
            let y = s.constant(Tensor::new(vec![owner.len(), self.d_y], data)?);
            h = s.concat_cols(&[h, y])?;
        }
        let pooled = global_pool(s, h, &owner, graphs.len(), PoolMode::Gated, Some(&self.pool))?;
        let out = self.head.forward(s, pooled)?;
        let mu = s.slice_cols(out, 0, self.c)?;
        let log_sigma = s.slice_cols(out, self.c, self.c)?;
        Ok((mu, log_sigma))
    }

    /// Samples `z = μ + σ⊙ε` with `σ = exp(log σ)`; `eps` is `B×c`.
    pub fn reparameterize<T: Scalar>(s: &mut Tape<T>, mu: Var, log_sigma: Var, eps: Tensor<T>) -> Result<Var> {
        let sigma = s.exp(log_sigma);
        let e = s.constant(eps);
        let noise = s.mul(sigma, e)?;
        s.add(mu, noise)
    }

    pub fn posterior<T: Scalar, R: Rng>(
        &self,
        s: &mut Session<T>,
        graphs: &[&AttributedGraph<T>],
        ys: Option<&[Vec<T>]>,
        rng: &mut R,
    ) -> Result<Posterior> {
        let (mu, log_sigma) = self.forward(s, graphs, ys)?;
        let eps = standard_normal(rng, graphs.len(), self.c);
        let z = Self::reparameterize(s, mu, log_sigma, eps)?;
        Ok(Posterior { mu, log_sigma, z })
    }
}

/// `rows×cols` tensor of independent standard normal draws.
pub fn standard_normal<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let data = (0..rows * cols).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect();
    Tensor::new(vec![rows, cols], data).expect("noise shape")
}

/// `½ Σ (μ² + σ² − 1 − 2 log σ)` from `log σ`, summed over all entries.
pub fn kl_normal_var<T: Scalar>(s: &mut Tape<T>, mu: Var, log_sigma: Var) -> Result<Var> {
    let mu2 = s.mul(mu, mu)?;
    let two = s.scale(log_sigma, T::of(2.0));
    let var = s.exp(two);
    let a = s.add(mu2, var)?;
    let b = s.sub(a, two)?;
    let c = s.add_scalar(b, -T::one());
    let total = s.sum(c);
    Ok(s.scale(total, T::of(0.5)))
}

/// KL divergence of `N(μ, diag σ²)` from `N(0, I)`.
pub fn kl_normal<T: Scalar>(mu: &[T], sigma: &[T]) -> T {
    let half = T::of(0.5);
    mu.iter().zip(sigma).map(|(&m, &s)| half * (m * m + s * s - T::one() - T::of(2.0) * s.ln())).sum()
}

/// Tape variables of one decoded graph.
#[derive(Clone, Copy, Debug)]
pub struct ProbGraphVars {
    /// `k×k`.
    pub a: Var,
    /// `k²×d_e`, row `a·k + b`.
    pub e: Var,
    /// `k×d_n`.
    pub f: Var,
}

impl ProbGraphVars {
    pub fn value<T: Scalar>(&self, s: &Tape<T>, k: usize) -> ProbGraph<T> {
        ProbGraph { k, a: s.value(self.a).clone(), e: s.value(self.e).clone(), f: s.value(self.f).clone() }
    }

    /// Registers a fixed probabilistic graph as tape leaves.
    pub fn constant<T: Scalar>(s: &mut Tape<T>, p: &ProbGraph<T>) -> Self {
        ProbGraphVars { a: s.constant(p.a.clone()), e: s.constant(p.e.clone()), f: s.constant(p.f.clone()) }
    }
}

/// MLP decoder with three heads predicting the upper triangle of the
/// adjacency (sigmoid), the edge classes of the upper triangle and the node
/// classes (softmax).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decoder {
    pub trunk: Mlp,
    pub head_a: Linear,
    pub head_e: Linear,
    pub head_f: Linear,
    pub k: usize,
    pub d_n: usize,
    pub d_e: usize,
}

impl Decoder {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, cfg: &VaeConfig) -> Self {
        let mut widths = vec![cfg.c + cfg.d_y];
        widths.extend(&cfg.decoder);
        let mcfg = MlpConfig { widths, hidden: Activation::Relu, output: Activation::Relu, last_bias: true, init: Init::Glorot, norm_after: None };
        let trunk = Mlp::new(store, rng, &format!("{name}.trunk"), &mcfg);
        let w = trunk.out_dim();
        let t = cfg.tri();
        Decoder {
            head_a: Linear::new(store, rng, &format!("{name}.a"), w, t, true, Init::Glorot),
            head_e: Linear::new(store, rng, &format!("{name}.e"), w, t * cfg.d_e, true, Init::Glorot),
            head_f: Linear::new(store, rng, &format!("{name}.f"), w, cfg.k * cfg.d_n, true, Init::Glorot),
            trunk,
            k: cfg.k,
            d_n: cfg.d_n,
            d_e: cfg.d_e,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    /// Decodes every row of `z` (`B×(c+d_y)`).
    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, z: Var) -> Result<Vec<ProbGraphVars>> {
        let h = self.trunk.forward(s, z)?;
        let la = self.head_a.forward(s, h)?;
        let le = self.head_e.forward(s, h)?;
        let lf = self.head_f.forward(s, h)?;
        self.heads(s, la, le, lf)
    }

    /// Activations and symmetrization from head pre-activations
    /// `la: B×T`, `le: B×(T·d_e)`, `lf: B×(k·d_n)` with `T = k(k+1)/2`.
    pub fn heads<T: Scalar>(&self, s: &mut Session<T>, la: Var, le: Var, lf: Var) -> Result<Vec<ProbGraphVars>> {
        let (k, t) = (self.k, self.k * (self.k + 1) / 2);
        let b = s.value(la).rows();
        let pa = s.sigmoid(la);
        let le = s.reshape(le, vec![b * t, self.d_e])?;
        let pe = s.softmax(le);
        let lf = s.reshape(lf, vec![b * k, self.d_n])?;
        let pf = s.softmax(lf);
        let map: Vec<usize> = (0..k * k).map(|x| tri_index(k, x / k, x % k)).collect();
        let mut out = Vec::with_capacity(b);
        for r in 0..b {
            let idx: Vec<usize> = map.iter().map(|&m| r * t + m).collect();
            let a = s.gather_elems(pa, &idx)?;
            let a = s.reshape(a, vec![k, k])?;
            let e = s.gather_rows(pe, &idx)?;
            let rows: Vec<usize> = (0..k).map(|x| r * k + x).collect();
            let f = s.gather_rows(pf, &rows)?;
            out.push(ProbGraphVars { a, e, f });
        }
        Ok(out)
    }

    /// Decodes latent codes without recording gradients.
    pub fn decode<T: Scalar>(&self, store: &ParamStore<T>, z: &Tensor<T>) -> Result<Vec<ProbGraph<T>>> {
        let mut s = Session::frozen(store);
        let zv = s.constant(z.clone());
        let vars = self.forward(&mut s, zv)?;
        Ok(vars.iter().map(|v| v.value(&s, self.k)).collect())
    }
}

/// Encoder and decoder sharing one parameter store.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphVae {
    pub config: VaeConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl GraphVae {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, cfg: &VaeConfig) -> Self {
        GraphVae { encoder: Encoder::new(store, rng, "enc", cfg), decoder: Decoder::new(store, rng, "dec", cfg), config: cfg.clone() }
    }

    /// Posterior of one graph with a seeded sample.
    pub fn encode_posterior<T: Scalar, R: Rng>(
        &self,
        store: &ParamStore<T>,
        g: &DenseGraph,
        y: Option<&[T]>,
        rng: &mut R,
    ) -> Result<LatentCode<T>> {
        let mut s = Session::frozen(store);
        let ag = g.to_attributed::<T>();
        let ys = y.map(|y| vec![y.to_vec()]);
        let post = self.encoder.posterior(&mut s, &[&ag], ys.as_deref(), rng)?;
        Ok(LatentCode {
            mu: s.value(post.mu).data().to_vec(),
            sigma: s.value(post.log_sigma).data().iter().map(|v| v.exp()).collect(),
            z: s.value(post.z).data().to_vec(),
            y: y.map(|y| y.to_vec()),
        })
    }

    /// Decoder input rows `z ⊕ y`.
    pub fn decoder_input<T: Scalar>(&self, z: &Tensor<T>, ys: Option<&[Vec<T>]>) -> Result<Tensor<T>> {
        match ys {
            None => Ok(z.clone()),
            Some(ys) => {
                let mut rows = Vec::with_capacity(z.rows());
                for (r, y) in ys.iter().enumerate() {
                    let mut row = z.row(r).to_vec();
                    row.extend_from_slice(y);
                    rows.push(row);
                }
                Tensor::from_rows(&rows)
            }
        }
    }
}
