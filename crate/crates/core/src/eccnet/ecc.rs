use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamId, ParamStore, Reduce, Session, Tensor, TensorError, Var};
use crate::graphcore::{AttributedGraph, GraphError};
use crate::scalar::Scalar;

use super::mlp::{Activation, Arity, FilterNet, FilterNetConfig, Init, Linear};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

impl Aggregation {
    fn reduce(self) -> Reduce {
        match self {
            Aggregation::Mean => Reduce::Mean,
            Aggregation::Sum => Reduce::Sum,
        }
    }
}

/// Edge list prepared for message passing: endpoints sorted by
/// `(dst, src)`, optional implicit self-loops, and deduplicated attribute
/// rows so the filter network runs once per distinct attribute.
#[derive(Clone, Debug)]
pub struct EdgeBatch<T> {
    pub n: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub unique_attr: Tensor<T>,
    pub attr_index: Vec<usize>,
    /// `|N(i)|`, stored edges only.
    pub in_degree: Vec<usize>,
}

impl<T: Scalar> EdgeBatch<T> {
    pub fn new(g: &AttributedGraph<T>, include_self: bool) -> Self {
        let d = g.edge_dim();
        let self_attr = g.self_attr_or_zero();
        let mut items: Vec<(usize, usize, bool, usize)> =
            g.edges.iter().enumerate().map(|(e, &(j, i))| (i, j, false, e)).collect();
        if include_self {
            items.extend((0..g.n).map(|i| (i, i, true, usize::MAX)));
        }
        items.sort_by_key(|&(i, j, is_self, e)| (i, j, is_self, e));
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut unique = Vec::new();
        let mut attr_index = Vec::with_capacity(items.len());
        let (mut src, mut dst) = (Vec::with_capacity(items.len()), Vec::with_capacity(items.len()));
        for &(i, j, is_self, e) in &items {
            let row: &[T] = if is_self { &self_attr } else { &g.edge_attr.data()[e * d..(e + 1) * d] };
            let key: Vec<u64> = row.iter().map(|v| v.as_f64().to_bits()).collect();
            let next = seen.len();
            let idx = *seen.entry(key).or_insert_with(|| {
                unique.extend_from_slice(row);
                next
            });
            attr_index.push(idx);
            src.push(j);
            dst.push(i);
        }
        let u = seen.len();
        EdgeBatch {
            n: g.n,
            src,
            dst,
            unique_attr: Tensor::new(vec![u, d], unique).expect("attr shape"),
            attr_index,
            in_degree: g.in_degrees(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Disjoint union of graphs; returns the union and the graph id of each node.
pub fn batch_graphs<T: Scalar>(graphs: &[&AttributedGraph<T>]) -> std::result::Result<(AttributedGraph<T>, Vec<usize>), GraphError> {
    let de = graphs.first().map_or(0, |g| g.edge_dim());
    let dn = graphs.first().map_or(0, |g| g.node_dim());
    let mut edges = Vec::new();
    let (mut eattr, mut nattr, mut sig) = (Vec::new(), Vec::new(), Vec::new());
    let mut owner = Vec::new();
    let mut off = 0;
    let sig_w = graphs.first().and_then(|g| g.signal.as_ref()).map(|h| h.cols());
    for (gi, g) in graphs.iter().enumerate() {
        if g.edge_dim() != de || g.node_dim() != dn || g.self_attr != graphs[0].self_attr {
            return Err(GraphError::Invalid("batched graphs must share attribute layouts".into()));
        }
        edges.extend(g.edges.iter().map(|&(j, i)| (j + off, i + off)));
        eattr.extend_from_slice(g.edge_attr.data());
        nattr.extend_from_slice(g.node_attr.data());
        match (&g.signal, sig_w) {
            (Some(h), Some(w)) if h.cols() == w => sig.extend_from_slice(h.data()),
            (None, None) => {}
            _ => return Err(GraphError::Invalid("batched graphs must all carry signals of equal width".into())),
        }
        owner.extend(std::iter::repeat(gi).take(g.n));
        off += g.n;
    }
    let m = edges.len();
    let mut out = AttributedGraph::new(off, edges, Tensor::new(vec![off, dn], nattr)?, Tensor::new(vec![m, de], eattr)?)?;
    out.self_attr = graphs.first().and_then(|g| g.self_attr.clone());
    if let Some(w) = sig_w {
        out.signal = Some(Tensor::new(vec![off, w], sig)?);
    }
    Ok((out, owner))
}

/// Edge-conditioned convolution over `N(i) ∪ {i}`:
/// `H'_i = act(agg_j w(E_ji) H_j + b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EccLayer {
    pub filter: FilterNet,
    pub bias: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
    pub aggregation: Aggregation,
    pub activation: Activation,
}

impl EccLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        attr_dim: usize,
        din: usize,
        dout: usize,
        filter: &FilterNetConfig,
        bias: bool,
    ) -> Self {
        let filter = FilterNet::new(store, rng, &format!("{name}.w"), attr_dim, Arity::Matrix { dout, din }, filter);
        let bias = bias.then(|| store.add(format!("{name}.b"), Tensor::zeros(vec![dout])));
        EccLayer { filter, bias, din, dout, aggregation: Aggregation::Mean, activation: Activation::Relu }
    }

    pub fn with_aggregation(mut self, a: Aggregation) -> Self {
        self.aggregation = a;
        self
    }

    pub fn with_activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    /// Pre-activation sum or mean of filtered messages, before bias.
    pub(crate) fn messages<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, h: Var, mode: Reduce) -> Result<Var> {
        if s.value(h).cols() != self.din || s.value(h).rows() != eb.n {
            return Err(TensorError::Shape {
                op: "ecc",
                detail: format!("signal {:?}, expected {}×{}", s.shape(h), eb.n, self.din),
            });
        }
        let attrs = s.constant(eb.unique_attr.clone());
        let wu = self.filter.forward(s, attrs)?;
        let w = s.gather_rows(wu, &eb.attr_index)?;
        let hj = s.gather_rows(h, &eb.src)?;
        let msg = s.edge_matvec(w, hj, self.dout, self.din)?;
        s.segment_reduce(msg, &eb.dst, eb.n, mode)
    }

    /// `eb` must include self-loops (see [`EdgeBatch::new`]).
    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, h: Var) -> Result<Var> {
        let agg = self.messages(s, eb, h, self.aggregation.reduce())?;
        let pre = match self.bias {
            Some(b) => {
                let b = s.p(b);
                s.add_row(agg, b)?
            }
            None => agg,
        };
        Ok(self.activation.apply(s, pre))
    }
}

/// ECC with an identity (or linear) skip connection and the central node
/// removed from the aggregation:
/// `H'_i = act(id(H_i) + mean_{j∈N(i)} w(E_ji) H_j + b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EccIdLayer {
    pub conv: EccLayer,
    /// Linear map used when `din != dout`.
    pub id_map: Option<Linear>,
}

impl EccIdLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        attr_dim: usize,
        din: usize,
        dout: usize,
        filter: &FilterNetConfig,
    ) -> Self {
        let conv = EccLayer::new(store, rng, name, attr_dim, din, dout, filter, true);
        let id_map = (din != dout).then(|| Linear::new(store, rng, &format!("{name}.id"), din, dout, false, Init::Glorot));
        EccIdLayer { conv, id_map }
    }

    /// `eb` must be built without self-loops.
    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, h: Var) -> Result<Var> {
        let agg = self.conv.messages(s, eb, h, Reduce::Mean)?;
        let skip = match &self.id_map {
            Some(l) => l.forward(s, h)?,
            None => h,
        };
        let mut pre = s.add(skip, agg)?;
        if let Some(b) = self.conv.bias {
            let b = s.p(b);
            pre = s.add_row(pre, b)?;
        }
        Ok(self.conv.activation.apply(s, pre))
    }
}

/// ECC whose neighborhood normalization is modulated by a learned factor of
/// the node degree: `H'_i = act(f(|N(i)|)/|N(i)∪{i}| Σ_j w(E_ji) H_j + b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EccFLayer {
    pub conv: EccLayer,
    pub factor: FilterNet,
}

impl EccFLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        attr_dim: usize,
        din: usize,
        dout: usize,
        filter: &FilterNetConfig,
        factor: &FilterNetConfig,
    ) -> Self {
        let conv = EccLayer::new(store, rng, name, attr_dim, din, dout, filter, true);
        let factor = FilterNet::new(store, rng, &format!("{name}.f"), 1, Arity::Scalar, factor);
        EccFLayer { conv, factor }
    }

    /// `eb` must include self-loops.
    pub fn forward<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, h: Var) -> Result<Var> {
        let summed = self.conv.messages(s, eb, h, Reduce::Sum)?;
        let deg = Tensor::new(vec![eb.n, 1], eb.in_degree.iter().map(|&d| T::of_usize(d)).collect())?;
        let inv = Tensor::new(vec![eb.n, 1], eb.in_degree.iter().map(|&d| T::one() / T::of_usize(d + 1)).collect())?;
        let deg = s.constant(deg);
        let inv = s.constant(inv);
        let f = self.factor.forward(s, deg)?;
        let scale = s.mul(f, inv)?;
        let mut pre = s.mul_col(summed, scale)?;
        if let Some(b) = self.conv.bias {
            let b = s.p(b);
            pre = s.add_row(pre, b)?;
        }
        Ok(self.conv.activation.apply(s, pre))
    }
}

/// Path graph on `n` nodes where node `i` receives an edge from every `j`
/// with `|j − i| ≤ kernel/2`, labelled by the one-hot class of the offset
/// `j − i`. The self offset is the implicit self-loop attribute.
pub fn grid_equiv_graph<T: Scalar>(n: usize, kernel: usize) -> std::result::Result<AttributedGraph<T>, GraphError> {
    grid_equiv_graph_2d(1, n, 1, kernel)
}

/// Two-dimensional variant on an `h × w` grid with a `kh × kw` kernel; node
/// index is `y * w + x` and offset class is `(dy + kh/2) * kw + (dx + kw/2)`.
pub fn grid_equiv_graph_2d<T: Scalar>(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) -> std::result::Result<AttributedGraph<T>, GraphError> {
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(GraphError::Parameter(format!("kernel {kh}×{kw} must be odd")));
    }
    if kh > h || kw > w {
        return Err(GraphError::Parameter(format!("kernel {kh}×{kw} exceeds grid {h}×{w}")));
    }
    let (ry, rx) = ((kh / 2) as i64, (kw / 2) as i64);
    let de = kh * kw;
    let mut edges = Vec::new();
    let mut attr = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = (y * w as i64 + x) as usize;
            for dy in -ry..=ry {
                for dx in -rx..=rx {
                    let (sy, sx) = (y + dy, x + dx);
                    if (dy == 0 && dx == 0) || sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                        continue;
                    }
                    edges.push(((sy * w as i64 + sx) as usize, i));
                    let mut row = vec![T::zero(); de];
                    row[((dy + ry) * kw as i64 + dx + rx) as usize] = T::one();
                    attr.extend(row);
                }
            }
        }
    }
    let m = edges.len();
    let mut self_attr = vec![T::zero(); de];
    self_attr[(ry * kw as i64 + rx) as usize] = T::one();
    let mut g = AttributedGraph::new(h * w, edges, Tensor::zeros(vec![h * w, 0]), Tensor::new(vec![m, de], attr)?)?;
    g.self_attr = Some(self_attr);
    g.sort_edges();
    Ok(g)
}

/// Offset class → weight matrix map realized by a bias-free linear filter
/// network: the returned `dout × din` matrix for class `c`.
pub fn linear_filter_matrix<T: Scalar>(store: &ParamStore<T>, layer: &EccLayer, class: usize) -> Vec<Vec<T>> {
    let lin = &layer.filter.mlp.layers[0];
    let theta = store.get(lin.w);
    let (dout, din) = (layer.dout, layer.din);
    (0..dout).map(|o| (0..din).map(|i| theta.get2(class, o * din + i)).collect()).collect()
}
