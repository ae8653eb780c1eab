use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::diffcore::Tensor;
use crate::graphcore::AttributedGraph;
use crate::scalar::Scalar;
use crate::spg::SuperpointGraph;

pub const SUBGRAPH_MAX_NODES: usize = 512;
pub const SUBGRAPH_HOPS: usize = 3;

/// Nodes of a union of `hops`-neighborhoods around random seeds, grown in
/// breadth-first order until `max_nodes` are taken. Sorted ascending; a graph
/// within the cap is returned whole.
pub fn subgraph_nodes<T: Scalar, R: Rng>(g: &AttributedGraph<T>, max_nodes: usize, hops: usize, rng: &mut R) -> Vec<usize> {
    if g.n <= max_nodes {
        return (0..g.n).collect();
    }
    let nbr = g.undirected_neighbors();
    let mut seeds: Vec<usize> = (0..g.n).collect();
    seeds.shuffle(rng);
    let mut taken = vec![false; g.n];
    let mut count = 0;
    'outer: for &seed in &seeds {
        if taken[seed] {
            continue;
        }
        let mut depth = vec![usize::MAX; g.n];
        depth[seed] = 0;
        let mut queue = VecDeque::from([seed]);
        while let Some(v) = queue.pop_front() {
            if !taken[v] {
                taken[v] = true;
                count += 1;
                if count == max_nodes {
                    break 'outer;
                }
            }
            if depth[v] == hops {
                continue;
            }
            for &u in &nbr[v] {
                if depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    (0..g.n).filter(|&v| taken[v]).collect()
}

fn select_rows<T: Scalar>(t: &Tensor<T>, keep: &[usize]) -> Tensor<T> {
    let data = keep.iter().flat_map(|&k| t.row(k).iter().copied()).collect();
    Tensor::new(vec![keep.len(), t.cols()], data).expect("row selection")
}

/// Induced superpoint graph on [`subgraph_nodes`]; returns the kept ids too.
pub fn subgraph_sample<T: Scalar, R: Rng>(
    spg: &SuperpointGraph<T>,
    max_nodes: usize,
    hops: usize,
    rng: &mut R,
) -> (Vec<usize>, SuperpointGraph<T>) {
    let keep = subgraph_nodes(&spg.graph, max_nodes, hops, rng);
    let sub = SuperpointGraph {
        superpoints: keep.iter().map(|&k| spg.superpoints[k].clone()).collect(),
        graph: spg.graph.induced(&keep),
        embeddings: spg.embeddings.as_ref().map(|t| select_rows(t, &keep)),
        logits: spg.logits.as_ref().map(|t| select_rows(t, &keep)),
    };
    (keep, sub)
}
