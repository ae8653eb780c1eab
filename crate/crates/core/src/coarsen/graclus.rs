use std::collections::BTreeMap;

use crate::diffcore::Tensor;
use crate::graphcore::{AttributedGraph, GraphError};
use crate::scalar::{total_cmp, Scalar};

use super::PoolingMap;

/// Edge weights of `g`: the first edge-attribute column, or 1 when absent.
pub fn edge_weights<T: Scalar>(g: &AttributedGraph<T>) -> Vec<T> {
    let d = g.edge_dim();
    (0..g.num_edges()).map(|e| if d == 0 { T::one() } else { g.edge_attr.data()[e * d] }).collect()
}

/// Symmetric weighted graph from undirected `(a, b, w)` triples, both
/// directions stored, weights as a single edge-attribute column.
pub fn weighted_graph<T: Scalar>(n: usize, pairs: &[(usize, usize, T)]) -> Result<AttributedGraph<T>, GraphError> {
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    let mut w = Vec::with_capacity(pairs.len() * 2);
    for &(a, b, x) in pairs {
        edges.push((a, b));
        edges.push((b, a));
        w.push(x);
        w.push(x);
    }
    let m = edges.len();
    let mut g = AttributedGraph::new(n, edges, Tensor::zeros(vec![n, 0]), Tensor::new(vec![m, 1], w)?)?;
    g.sort_edges();
    Ok(g)
}

/// Undirected weights `{(a,b): w}` with `a < b`, taking one direction per pair.
pub(crate) fn undirected_weights<T: Scalar>(g: &AttributedGraph<T>) -> BTreeMap<(usize, usize), T> {
    let w = edge_weights(g);
    let mut out = BTreeMap::new();
    for (e, &(j, i)) in g.edges.iter().enumerate() {
        if i != j {
            out.entry((j.min(i), j.max(i))).or_insert(w[e]);
        }
    }
    out
}

/// Greedy matching by descending normalized cut `A_ij (1/D_i + 1/D_j)`;
/// matched pairs merge, unmatched nodes survive. Coarse weights sum over the
/// merged pairs and intra-cluster weight is dropped.
pub fn graclus_coarsen<T: Scalar>(g: &AttributedGraph<T>) -> Result<(AttributedGraph<T>, PoolingMap), GraphError> {
    let w = undirected_weights(g);
    if w.values().any(|&x| x < T::zero()) {
        return Err(GraphError::Invalid("graclus needs nonnegative weights".into()));
    }
    let mut deg = vec![T::zero(); g.n];
    for (&(a, b), &x) in &w {
        deg[a] += x;
        deg[b] += x;
    }
    let inv = |d: T| if d > T::zero() { T::one() / d } else { T::zero() };
    let mut cand: Vec<(T, usize, usize)> = w.iter().map(|(&(a, b), &x)| (x * (inv(deg[a]) + inv(deg[b])), a, b)).collect();
    cand.sort_by(|x, y| total_cmp(&y.0, &x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut mate = vec![usize::MAX; g.n];
    for &(_, a, b) in &cand {
        if mate[a] == usize::MAX && mate[b] == usize::MAX {
            mate[a] = b;
            mate[b] = a;
        }
    }
    let groups: Vec<usize> = (0..g.n).map(|i| if mate[i] == usize::MAX { i } else { i.min(mate[i]) }).collect();
    let map = PoolingMap::from_groups(&groups);
    let coarse = coarse_graph(&w, &map)?;
    Ok((coarse, map))
}

/// Sums undirected weights between distinct coarse nodes.
pub(crate) fn coarse_graph<T: Scalar>(
    w: &BTreeMap<(usize, usize), T>,
    map: &PoolingMap,
) -> Result<AttributedGraph<T>, GraphError> {
    let mut cw: BTreeMap<(usize, usize), T> = BTreeMap::new();
    for (&(a, b), &x) in w {
        let (ca, cb) = (map.assign[a], map.assign[b]);
        if ca != cb {
            *cw.entry((ca.min(cb), ca.max(cb))).or_insert(T::zero()) += x;
        }
    }
    let pairs: Vec<_> = cw.into_iter().map(|((a, b), x)| (a, b, x)).collect();
    weighted_graph(map.n_coarse(), &pairs)
}
