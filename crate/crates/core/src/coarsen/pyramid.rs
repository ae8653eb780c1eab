use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graphcore::{radius_graph, AttributedGraph, GraphDocument, GraphError, PointCloud};
use crate::scalar::{Field, Scalar};

use super::graclus::{edge_weights, graclus_coarsen, weighted_graph};
use super::kron::{eigvec_split, kron_reduce, Laplacian};
use super::voxel::{voxel_grid, PoolingMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarsenMethod {
    /// Largest-eigenvector split of the unweighted Laplacian followed by Kron
    /// reduction of the weighted one.
    Kron,
    Graclus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level<T> {
    pub graph: AttributedGraph<T>,
    /// Map from the previous level's nodes (identity at level 0).
    pub map: PoolingMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid<T> {
    pub levels: Vec<Level<T>>,
}

/// One eigenvector-split + Kron-reduction step. Every connected component
/// keeps at least one node so the interior block stays invertible; removed
/// nodes pool into their heaviest kept neighbor, else the nearest kept node
/// by hop count.
pub fn kron_coarsen<T: Scalar + Field>(g: &AttributedGraph<T>) -> Result<(AttributedGraph<T>, PoolingMap), GraphError> {
    let n = g.n;
    if n < 2 {
        return Ok((g.clone(), PoolingMap::identity(n)));
    }
    let split = eigvec_split(&Laplacian::unweighted(g))?;
    let mut kept = vec![false; n];
    if split.negative.is_empty() || g.num_edges() == 0 {
        (0..n).step_by(2).for_each(|i| kept[i] = true);
    } else {
        split.positive.iter().for_each(|&i| kept[i] = true);
    }
    let comp = g.connected_components();
    let ncomp = comp.iter().max().map_or(0, |m| m + 1);
    let mut has = vec![false; ncomp];
    for i in 0..n {
        has[comp[i]] |= kept[i];
    }
    for i in 0..n {
        if !has[comp[i]] {
            kept[i] = true;
            has[comp[i]] = true;
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    let reduced = kron_reduce(&Laplacian::from_graph(g), &keep)?;
    let scale = reduced.data.iter().fold(T::zero(), |a, b| a.max(b.abs()));
    let pairs: Vec<_> = reduced.pairs().into_iter().filter(|p| p.2 > T::of(1e-12) * scale).collect();
    let coarse = weighted_graph(keep.len(), &pairs)?;

    let mut idx = vec![usize::MAX; n];
    keep.iter().enumerate().for_each(|(k, &i)| idx[i] = k);
    let w = edge_weights(g);
    let mut best: Vec<Option<(T, usize)>> = vec![None; n];
    for (e, &(j, i)) in g.edges.iter().enumerate() {
        for (a, b) in [(i, j), (j, i)] {
            if !kept[a] && kept[b] {
                let better = match best[a] {
                    None => true,
                    Some((bw, bk)) => w[e] > bw || (w[e] == bw && b < bk),
                };
                if better {
                    best[a] = Some((w[e], b));
                }
            }
        }
    }
    let nb = g.undirected_neighbors();
    let assign = (0..n)
        .map(|i| {
            if kept[i] {
                return idx[i];
            }
            if let Some((_, k)) = best[i] {
                return idx[k];
            }
            idx[bfs_nearest_kept(&nb, &kept, i)]
        })
        .collect();
    Ok((coarse, PoolingMap::new(assign, keep.len())?))
}

fn bfs_nearest_kept(nb: &[Vec<usize>], kept: &[bool], s: usize) -> usize {
    let mut dist = vec![usize::MAX; nb.len()];
    dist[s] = 0;
    let mut q = VecDeque::from([s]);
    let mut found: Option<(usize, usize)> = None;
    while let Some(u) = q.pop_front() {
        if let Some((d, _)) = found {
            if dist[u] > d {
                break;
            }
        }
        if kept[u] {
            found = Some(match found {
                Some((d, k)) if k < u => (d, k),
                _ => (dist[u], u),
            });
            continue;
        }
        for &v in &nb[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    found.expect("component contains a kept node").1
}

/// Up to `depth` coarsening steps; stops early once a step no longer
/// shrinks the graph (a single node, or only isolated components).
pub fn graph_pyramid<T: Scalar + Field>(
    g: &AttributedGraph<T>,
    depth: usize,
    method: CoarsenMethod,
) -> Result<Pyramid<T>, GraphError> {
    let mut levels = vec![Level { graph: g.clone(), map: PoolingMap::identity(g.n) }];
    for _ in 0..depth {
        let prev = &levels.last().expect("nonempty").graph;
        if prev.n <= 1 {
            break;
        }
        let (graph, map) = match method {
            CoarsenMethod::Kron => kron_coarsen(prev)?,
            CoarsenMethod::Graclus => graclus_coarsen(prev)?,
        };
        if graph.n >= prev.n {
            break;
        }
        levels.push(Level { graph, map });
    }
    Ok(Pyramid { levels })
}

/// VoxelGrid pyramid: level `s` is the previous cloud subsampled with voxel
/// size `r_s` (skipped when `r_s` is 0) and connected by `radius_graph` with
/// `ρ_s`.
pub fn voxel_pyramid<T: Scalar>(
    cloud: &PointCloud<T>,
    scales: &[(T, T)],
) -> Result<(Vec<PointCloud<T>>, Pyramid<T>), GraphError> {
    let mut clouds: Vec<PointCloud<T>> = Vec::new();
    let mut levels = Vec::new();
    for &(r, rho) in scales {
        let prev = clouds.last().unwrap_or(cloud);
        let (c, map) = if r > T::zero() { voxel_grid(prev, r)? } else { (prev.clone(), PoolingMap::identity(prev.len())) };
        let graph = radius_graph(&c, rho)?;
        clouds.push(c);
        levels.push(Level { graph, map });
    }
    Ok((clouds, Pyramid { levels }))
}

#[derive(Serialize, Deserialize)]
struct LevelDoc {
    graph: GraphDocument,
    map: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PyramidDoc {
    levels: Vec<LevelDoc>,
}

impl<T: Scalar> Pyramid<T> {
    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.graph.n).collect()
    }

    /// `{"levels": [{"graph": <graph document>, "map": [...]}, ...]}`.
    pub fn to_json(&self) -> String {
        let doc = PyramidDoc {
            levels: self.levels.iter().map(|l| LevelDoc { graph: l.graph.to_document(), map: l.map.assign.clone() }).collect(),
        };
        serde_json::to_string(&doc).expect("pyramid serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let doc: PyramidDoc = serde_json::from_str(s)?;
        let levels = doc
            .levels
            .iter()
            .map(|l| {
                let graph = AttributedGraph::from_document(&l.graph)?;
                let map = PoolingMap::new(l.map.clone(), graph.n)?;
                Ok(Level { graph, map })
            })
            .collect::<Result<_, GraphError>>()?;
        Ok(Pyramid { levels })
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
