use rand::Rng;

use crate::graphcore::{AttributedGraph, GraphError};
use crate::scalar::Scalar;

/// Drops undirected edge pairs independently with probability `1 − keep_prob`;
/// both directions of a pair share one draw. Draws are made in ascending
/// `(min, max)` pair order, so a seeded generator reproduces the result.
pub fn random_sparsify<T: Scalar, R: Rng>(
    g: &AttributedGraph<T>,
    keep_prob: f64,
    rng: &mut R,
) -> Result<AttributedGraph<T>, GraphError> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(GraphError::Parameter(format!("keep_prob must be in (0, 1], got {keep_prob}")));
    }
    let mut pairs: Vec<(usize, usize)> = g.edges.iter().map(|&(j, i)| (j.min(i), j.max(i))).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let kept: std::collections::HashSet<(usize, usize)> =
        pairs.into_iter().filter(|_| keep_prob >= 1.0 || rng.gen::<f64>() < keep_prob).collect();
    let d = g.edge_dim();
    let mut edges = Vec::new();
    let mut attr = Vec::new();
    for (e, &(j, i)) in g.edges.iter().enumerate() {
        if kept.contains(&(j.min(i), j.max(i))) {
            edges.push((j, i));
            attr.extend_from_slice(&g.edge_attr.data()[e * d..(e + 1) * d]);
        }
    }
    let mut out = g.clone();
    out.edge_attr = crate::diffcore::Tensor::new(vec![edges.len(), d], attr)?;
    out.edges = edges;
    Ok(out)
}
