use std::collections::HashMap;

use crate::diffcore::{Reduce, Tape, TensorError, Var};
use crate::graphcore::{dist2, GraphError, GridIndex, PointCloud};
use crate::scalar::{total_cmp, Scalar};

/// Assignment of fine nodes to coarse nodes.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolingMap {
    /// Coarse index of every fine node.
    pub assign: Vec<usize>,
    /// Number of fine nodes per coarse node.
    pub counts: Vec<usize>,
}

impl PoolingMap {
    /// Builds a map and checks that it is surjective onto `0..n_coarse`.
    pub fn new(assign: Vec<usize>, n_coarse: usize) -> Result<Self, GraphError> {
        let mut counts = vec![0; n_coarse];
        for &c in &assign {
            if c >= n_coarse {
                return Err(GraphError::Invalid(format!("coarse index {c} out of range {n_coarse}")));
            }
            counts[c] += 1;
        }
        if let Some(c) = counts.iter().position(|&k| k == 0) {
            return Err(GraphError::Invalid(format!("coarse node {c} has no members")));
        }
        Ok(PoolingMap { assign, counts })
    }

    pub fn identity(n: usize) -> Self {
        PoolingMap { assign: (0..n).collect(), counts: vec![1; n] }
    }

    pub fn n_fine(&self) -> usize {
        self.assign.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.counts.len()
    }

    /// Composition: first `self`, then `next`.
    pub fn then(&self, next: &PoolingMap) -> PoolingMap {
        let assign: Vec<usize> = self.assign.iter().map(|&c| next.assign[c]).collect();
        let mut counts = vec![0; next.n_coarse()];
        for &c in &assign {
            counts[c] += 1;
        }
        PoolingMap { assign, counts }
    }

    /// Relabels an arbitrary grouping densely in order of first appearance.
    pub fn from_groups<K: std::hash::Hash + Eq + Clone>(groups: &[K]) -> Self {
        let mut ids = HashMap::new();
        let assign: Vec<usize> = groups
            .iter()
            .map(|g| {
                let next = ids.len();
                *ids.entry(g.clone()).or_insert(next)
            })
            .collect();
        let mut counts = vec![0; ids.len()];
        for &c in &assign {
            counts[c] += 1;
        }
        PoolingMap { assign, counts }
    }
}

/// Replaces all points inside each voxel of edge `r` by their centroid
/// (observations averaged, labels by majority with ties to the lowest id).
/// Voxel ids are `floor(P/r) − floor(min/r)` with `min` the cloud's lower
/// corner, i.e. the lattice is anchored at the origin as in PCL, so every
/// centroid stays inside its voxel. Output order follows the first point of
/// each voxel.
pub fn voxel_grid<T: Scalar>(cloud: &PointCloud<T>, r: T) -> Result<(PointCloud<T>, PoolingMap), GraphError> {
    if !(r > T::zero()) {
        return Err(GraphError::Parameter(format!("voxel size must be positive, got {r}")));
    }
    let Some((lo, _)) = cloud.bounds() else {
        return Ok((cloud.clone(), PoolingMap::identity(0)));
    };
    let keys: Vec<(i64, i64, i64)> = cloud
        .positions
        .iter()
        .map(|p| {
            let f = |a: usize| ((p[a] / r).floor() - (lo[a] / r).floor()).to_i64().unwrap_or(0);
            (f(0), f(1), f(2))
        })
        .collect();
    let map = PoolingMap::from_groups(&keys);
    Ok((pool_cloud(cloud, &map), map))
}

/// Centroids (and mean observations, majority labels) of every coarse node.
pub fn pool_cloud<T: Scalar>(cloud: &PointCloud<T>, map: &PoolingMap) -> PointCloud<T> {
    let k = map.n_coarse();
    let mut pos = vec![[T::zero(); 3]; k];
    for (i, p) in cloud.positions.iter().enumerate() {
        let c = map.assign[i];
        for a in 0..3 {
            pos[c][a] += p[a];
        }
    }
    for (c, p) in pos.iter_mut().enumerate() {
        let n = T::of_usize(map.counts[c]);
        p.iter_mut().for_each(|v| *v /= n);
    }
    let observations = cloud.observations.as_ref().map(|o| {
        let w = cloud.observation_dim();
        let mut acc = vec![vec![T::zero(); w]; k];
        for (i, row) in o.iter().enumerate() {
            for (a, v) in acc[map.assign[i]].iter_mut().zip(row) {
                *a += *v;
            }
        }
        for (c, row) in acc.iter_mut().enumerate() {
            let n = T::of_usize(map.counts[c]);
            row.iter_mut().for_each(|v| *v /= n);
        }
        acc
    });
    let labels = cloud.labels.as_ref().map(|l| {
        let mut votes: Vec<HashMap<usize, usize>> = vec![HashMap::new(); k];
        for (i, &lab) in l.iter().enumerate() {
            *votes[map.assign[i]].entry(lab).or_default() += 1;
        }
        votes
            .iter()
            .map(|v| v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map_or(0, |(&lab, _)| lab))
            .collect()
    });
    PointCloud { positions: pos, observations, features: None, labels }
}

/// Maps every fine point to its nearest coarse point (ties to the lower index).
pub fn nearest_assign<T: Scalar>(fine: &PointCloud<T>, coarse: &PointCloud<T>) -> Result<PoolingMap, GraphError> {
    if coarse.is_empty() {
        return Err(GraphError::Parameter("coarse cloud is empty".into()));
    }
    let index = GridIndex::with_density(&coarse.positions, 2);
    let mut assign = Vec::with_capacity(fine.len());
    for q in &fine.positions {
        let mut rad = index.cell();
        let best = loop {
            let cand = index.within(q, rad);
            if !cand.is_empty() {
                break cand
                    .into_iter()
                    .map(|j| (dist2(q, &coarse.positions[j]), j))
                    .min_by(|a, b| total_cmp(&a.0, &b.0).then(a.1.cmp(&b.1)))
                    .expect("nonempty")
                    .1;
            }
            rad = rad + rad;
        };
        assign.push(best);
    }
    let mut counts = vec![0; coarse.len()];
    for &c in &assign {
        counts[c] += 1;
    }
    // Coarse points that attract no fine point are legal here.
    Ok(PoolingMap { assign, counts })
}

/// Aggregates a fine signal onto coarse nodes (`Reduce::Max` or `Reduce::Mean`).
pub fn pool_signal<T: Scalar>(tape: &mut Tape<T>, map: &PoolingMap, h: Var, mode: Reduce) -> Result<Var, TensorError> {
    if tape.value(h).rows() != map.n_fine() {
        return Err(TensorError::Shape {
            op: "pool_signal",
            detail: format!("{} rows for {} fine nodes", tape.value(h).rows(), map.n_fine()),
        });
    }
    tape.segment_reduce(h, &map.assign, map.n_coarse(), mode)
}
