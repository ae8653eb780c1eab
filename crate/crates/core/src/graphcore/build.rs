use crate::diffcore::Tensor;
use crate::scalar::Scalar;

use super::cloud::{norm3, sub3};
use super::spatial::GridIndex;
use super::{AttributedGraph, GraphError, PointCloud};

/// Width of the offset attribute produced by [`offset_attr`].
pub const OFFSET_ATTR_DIM: usize = 6;

/// Offset `δ = P_src − P_dst` in Cartesian and spherical form:
/// `(δx, δy, δz, ‖δ‖, arccos(δz/‖δ‖), atan2(δy, δx))`. Angles are 0 for a
/// zero offset.
pub fn offset_attr<T: Scalar>(src: &[T; 3], dst: &[T; 3]) -> [T; OFFSET_ATTR_DIM] {
    let d = sub3(src, dst);
    let len = norm3(&d);
    let (polar, azimuth) = if len > T::zero() {
        ((d[2] / len).max(-T::one()).min(T::one()).acos(), d[1].atan2(d[0]))
    } else {
        (T::zero(), T::zero())
    };
    [d[0], d[1], d[2], len, polar, azimuth]
}

fn offset_graph<T: Scalar>(cloud: &PointCloud<T>, edges: Vec<(usize, usize)>) -> AttributedGraph<T> {
    let p = &cloud.positions;
    let mut attr = Vec::with_capacity(edges.len() * OFFSET_ATTR_DIM);
    for &(j, i) in &edges {
        attr.extend_from_slice(&offset_attr(&p[j], &p[i]));
    }
    let od = cloud.observation_dim();
    let node_attr = match &cloud.observations {
        Some(o) => Tensor::new(vec![cloud.len(), od], o.concat()).expect("observation shape"),
        None => Tensor::zeros(vec![cloud.len(), 0]),
    };
    let mut g = AttributedGraph {
        n: cloud.len(),
        edge_attr: Tensor::new(vec![edges.len(), OFFSET_ATTR_DIM], attr).expect("edge attr shape"),
        edges,
        node_attr,
        self_attr: Some(vec![T::zero(); OFFSET_ATTR_DIM]),
        signal: None,
    };
    g.sort_edges();
    g
}

/// Connects every ordered pair of distinct points within `radius` and
/// attaches 6D offset attributes.
pub fn radius_graph<T: Scalar>(cloud: &PointCloud<T>, radius: T) -> Result<AttributedGraph<T>, GraphError> {
    if !(radius > T::zero()) {
        return Err(GraphError::Parameter(format!("radius must be positive, got {radius}")));
    }
    if cloud.is_empty() {
        let mut g = AttributedGraph::empty();
        g.edge_attr = Tensor::zeros(vec![0, OFFSET_ATTR_DIM]);
        g.self_attr = Some(vec![T::zero(); OFFSET_ATTR_DIM]);
        return Ok(g);
    }
    let index = GridIndex::new(&cloud.positions, radius);
    let mut edges = Vec::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        for j in index.within(p, radius) {
            if j != i {
                edges.push((j, i));
            }
        }
    }
    Ok(offset_graph(cloud, edges))
}

/// Indices of the `k` nearest neighbors of every point (ties by index).
pub fn knn_lists<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<Vec<Vec<usize>>, GraphError> {
    if k >= cloud.len() {
        return Err(GraphError::Parameter(format!("k = {k} must be below the point count {}", cloud.len())));
    }
    let index = GridIndex::with_density(&cloud.positions, k.max(4));
    Ok((0..cloud.len()).map(|i| index.knn(i, k)).collect())
}

/// Directed k-NN graph: edge `(i, j)` for each of the `k` nearest neighbors
/// `j` of `i`, so every node has out-degree exactly `k`.
pub fn knn_graph<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<AttributedGraph<T>, GraphError> {
    let lists = knn_lists(cloud, k)?;
    let edges = lists.iter().enumerate().flat_map(|(i, l)| l.iter().map(move |&j| (i, j))).collect();
    Ok(offset_graph(cloud, edges))
}

/// Union of a graph's edges with their reversals; offset attributes are
/// recomputed from positions.
pub fn symmetrize<T: Scalar>(g: &AttributedGraph<T>, cloud: &PointCloud<T>) -> AttributedGraph<T> {
    let mut edges: Vec<(usize, usize)> = g.edges.iter().flat_map(|&(j, i)| [(j, i), (i, j)]).collect();
    edges.sort_unstable();
    edges.dedup();
    offset_graph(cloud, edges)
}

/// Replaces integral class ids (a single edge-attribute column) by one-hot
/// rows. With `self_class`, an extra class is appended and used as the
/// implicit self-loop attribute.
pub fn one_hot_edges<T: Scalar>(
    g: &AttributedGraph<T>,
    classes: usize,
    self_class: bool,
) -> Result<AttributedGraph<T>, GraphError> {
    if g.edge_dim() != 1 && g.num_edges() > 0 {
        return Err(GraphError::Encoding(format!("expected one class column, got {}", g.edge_dim())));
    }
    let width = classes + usize::from(self_class);
    let mut attr = vec![T::zero(); g.num_edges() * width];
    for e in 0..g.num_edges() {
        let v = g.edge_attr.data()[e];
        let id = v.to_usize().filter(|&c| T::of_usize(c) == v && c < classes);
        let id = id.ok_or_else(|| GraphError::Encoding(format!("edge {e}: class {v} outside 0..{classes}")))?;
        attr[e * width + id] = T::one();
    }
    let mut out = g.clone();
    out.edge_attr = Tensor::new(vec![g.num_edges(), width], attr)?;
    out.self_attr = Some(if self_class {
        let mut s = vec![T::zero(); width];
        s[classes] = T::one();
        s
    } else {
        vec![T::zero(); width]
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeVariant {
    InvSqrt,
    Inv,
    Sqrt,
    Id,
}

impl DegreeVariant {
    pub fn apply<T: Scalar>(self, deg: usize) -> T {
        if deg == 0 {
            return T::zero();
        }
        let d = T::of_usize(deg);
        match self {
            DegreeVariant::InvSqrt => T::one() / d.sqrt(),
            DegreeVariant::Inv => T::one() / d,
            DegreeVariant::Sqrt => d.sqrt(),
            DegreeVariant::Id => d,
        }
    }
}

/// Appends `(L(deg(j)), L(deg(i)))` to every edge `(j, i)`, with
/// `deg = |N(·)|`. The self-loop attribute is padded with zeros.
pub fn add_degree_attrs<T: Scalar>(g: &AttributedGraph<T>, variant: DegreeVariant) -> AttributedGraph<T> {
    let deg = g.in_degrees();
    let d = g.edge_dim();
    let mut attr = Vec::with_capacity(g.num_edges() * (d + 2));
    for (e, &(j, i)) in g.edges.iter().enumerate() {
        attr.extend_from_slice(&g.edge_attr.data()[e * d..(e + 1) * d]);
        attr.push(variant.apply(deg[j]));
        attr.push(variant.apply(deg[i]));
    }
    let mut out = g.clone();
    out.edge_attr = Tensor::new(vec![g.num_edges(), d + 2], attr).expect("degree attr shape");
    out.self_attr = g.self_attr.as_ref().map(|s| {
        let mut s = s.clone();
        s.extend([T::zero(), T::zero()]);
        s
    });
    out
}
