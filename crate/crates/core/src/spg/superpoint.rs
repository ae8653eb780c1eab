use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::graphcore::{AttributedGraph, GraphError, PointCloud};
use crate::scalar::Scalar;

use super::cutpursuit::Partition;
use super::features::{covariance, sym_eigen3};

/// Width of the superedge attribute vector.
pub const SUPEREDGE_ATTRS: usize = 13;
/// Guards the shape log-ratios against zero eigenvalues.
pub const SHAPE_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Superpoint<T> {
    pub members: Vec<usize>,
    pub centroid: [T; 3],
    /// Eigenvalues of the position covariance, decreasing.
    pub eigenvalues: [T; 3],
}

impl<T: Scalar> Superpoint<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn length(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn surface(&self) -> T {
        self.eigenvalues[0] * self.eigenvalues[1]
    }

    pub fn volume(&self) -> T {
        self.eigenvalues[0] * self.eigenvalues[1] * self.eigenvalues[2]
    }
}

/// Superpoints and the directed superedges between them. `graph.edges`
/// holds `(S, R)` pairs whose 13 attributes describe `S` relative to `R`.
#[derive(Clone, Debug)]
pub struct SuperpointGraph<T> {
    pub superpoints: Vec<Superpoint<T>>,
    pub graph: AttributedGraph<T>,
    pub embeddings: Option<Tensor<T>>,
    pub logits: Option<Tensor<T>>,
}

impl<T: Scalar> SuperpointGraph<T> {
    pub fn len(&self) -> usize {
        self.superpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.superpoints.is_empty()
    }

    /// Superpoint id of every point.
    pub fn assignment(&self, n_points: usize) -> Vec<usize> {
        let mut a = vec![usize::MAX; n_points];
        for (s, sp) in self.superpoints.iter().enumerate() {
            sp.members.iter().for_each(|&i| a[i] = s);
        }
        a
    }

    /// Writes the superedge graph as a graph document.
    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        self.graph.save(path)
    }
}

fn log_ratio<T: Scalar>(a: T, b: T) -> T {
    let eps = T::of(SHAPE_EPS);
    ((a + eps) / (b + eps)).ln()
}

/// Superpoint statistics for every component of a partition.
pub fn superpoints<T: Scalar>(partition: &Partition<T>, cloud: &PointCloud<T>) -> Vec<Superpoint<T>> {
    partition
        .members()
        .into_iter()
        .map(|members| {
            let (centroid, cov) = covariance(members.iter().map(|&i| cloud.positions[i]));
            let (eigenvalues, _) = sym_eigen3(&cov);
            Superpoint { members, centroid, eigenvalues }
        })
        .collect()
}

/// Attributes of the superedge `(S, R)` from the offsets `P_i − P_j` of the
/// crossing neighbor pairs `i ∈ S`, `j ∈ R`.
pub fn superedge_attrs<T: Scalar>(s: &Superpoint<T>, r: &Superpoint<T>, offsets: &[[T; 3]]) -> [T; SUPEREDGE_ATTRS] {
    let m = T::of_usize(offsets.len().max(1));
    let mut mean = [T::zero(); 3];
    for d in offsets {
        for a in 0..3 {
            mean[a] += d[a] / m;
        }
    }
    let mut var = [T::zero(); 3];
    for d in offsets {
        for a in 0..3 {
            var[a] += (d[a] - mean[a]) * (d[a] - mean[a]) / m;
        }
    }
    [
        mean[0],
        mean[1],
        mean[2],
        var[0].sqrt(),
        var[1].sqrt(),
        var[2].sqrt(),
        s.centroid[0] - r.centroid[0],
        s.centroid[1] - r.centroid[1],
        s.centroid[2] - r.centroid[2],
        log_ratio(s.length(), r.length()),
        log_ratio(s.surface(), r.surface()),
        log_ratio(s.volume(), r.volume()),
        (T::of_usize(s.len()) / T::of_usize(r.len())).ln(),
    ]
}

/// Builds the superpoint graph: a superedge joins `S` and `R` (in both
/// directions) iff some neighbor pair of `g_nn` crosses between them. Each
/// unordered neighbor pair contributes one offset per direction.
pub fn build_spg<T: Scalar>(
    partition: &Partition<T>,
    g_nn: &AttributedGraph<T>,
    cloud: &PointCloud<T>,
) -> Result<SuperpointGraph<T>, GraphError> {
    if partition.component.len() != cloud.len() || g_nn.n != cloud.len() {
        return Err(GraphError::Invalid(format!(
            "partition covers {} points, graph {} nodes, cloud {} points",
            partition.component.len(),
            g_nn.n,
            cloud.len()
        )));
    }
    let sp = superpoints(partition, cloud);
    let comp = &partition.component;
    let p = &cloud.positions;
    let mut pairs = HashSet::new();
    let mut offsets: BTreeMap<(usize, usize), Vec<[T; 3]>> = BTreeMap::new();
    for &(a, b) in &g_nn.edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca == cb || !pairs.insert((a.min(b), a.max(b))) {
            continue;
        }
        let d = [p[a][0] - p[b][0], p[a][1] - p[b][1], p[a][2] - p[b][2]];
        offsets.entry((ca, cb)).or_default().push(d);
        offsets.entry((cb, ca)).or_default().push([-d[0], -d[1], -d[2]]);
    }
    let mut edges = Vec::with_capacity(offsets.len());
    let mut attr = Vec::with_capacity(offsets.len() * SUPEREDGE_ATTRS);
    for ((s, r), offs) in &offsets {
        edges.push((*s, *r));
        attr.extend(superedge_attrs(&sp[*s], &sp[*r], offs));
    }
    let k = sp.len();
    let mut graph = AttributedGraph::new(
        k,
        edges,
        Tensor::zeros(vec![k, 0]),
        Tensor::new(vec![offsets.len(), SUPEREDGE_ATTRS], attr)?,
    )?;
    graph.self_attr = Some(vec![T::zero(); SUPEREDGE_ATTRS]);
    graph.sort_edges();
    Ok(SuperpointGraph { superpoints: sp, graph, embeddings: None, logits: None })
}
