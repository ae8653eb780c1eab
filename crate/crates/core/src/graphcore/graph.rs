use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::scalar::Scalar;

use super::GraphError;

/// Directed multigraph with node and edge attributes and a per-layer signal.
///
/// Edges are `(src, dst)` pairs, i.e. `(j, i)` in message-passing notation
/// where `j ∈ N(i)`. Self-loops are never stored; `self_attr` is the attribute
/// vector convolution layers use for the implicit self-connection (zeros when
/// absent).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph<T> {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_attr: Tensor<T>,
    pub edge_attr: Tensor<T>,
    pub self_attr: Option<Vec<T>>,
    pub signal: Option<Tensor<T>>,
}

impl<T: Scalar> AttributedGraph<T> {
    pub fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        node_attr: Tensor<T>,
        edge_attr: Tensor<T>,
    ) -> Result<Self, GraphError> {
        let g = AttributedGraph { n, edges, node_attr, edge_attr, self_attr: None, signal: None };
        g.validate()?;
        Ok(g)
    }

    /// Graph without attributes: `n×0` node attributes and `m×0` edge attributes.
    pub fn bare(n: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let m = edges.len();
        Self::new(n, edges, Tensor::zeros(vec![n, 0]), Tensor::zeros(vec![m, 0]))
    }

    pub fn empty() -> Self {
        AttributedGraph {
            n: 0,
            edges: Vec::new(),
            node_attr: Tensor::zeros(vec![0, 0]),
            edge_attr: Tensor::zeros(vec![0, 0]),
            self_attr: None,
            signal: None,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if let Some(&(j, i)) = self.edges.iter().find(|&&(j, i)| j >= self.n || i >= self.n) {
            return Err(GraphError::Invalid(format!("edge ({j},{i}) out of range for {} nodes", self.n)));
        }
        if self.node_attr.shape().len() != 2 || self.node_attr.shape()[0] != self.n {
            return Err(GraphError::Invalid(format!(
                "node attributes {:?} for {} nodes",
                self.node_attr.shape(),
                self.n
            )));
        }
        if self.edge_attr.shape().len() != 2 || self.edge_attr.shape()[0] != self.edges.len() {
            return Err(GraphError::Invalid(format!(
                "edge attributes {:?} for {} edges",
                self.edge_attr.shape(),
                self.edges.len()
            )));
        }
        if let Some(s) = &self.self_attr {
            if s.len() != self.edge_dim() {
                return Err(GraphError::Invalid(format!("self attribute width {} != {}", s.len(), self.edge_dim())));
            }
        }
        if let Some(h) = &self.signal {
            if h.rows() != self.n || h.shape().len() != 2 {
                return Err(GraphError::Invalid(format!("signal {:?} for {} nodes", h.shape(), self.n)));
            }
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_attr.shape()[1]
    }

    pub fn node_dim(&self) -> usize {
        self.node_attr.shape()[1]
    }

    pub fn with_signal(mut self, h: Tensor<T>) -> Result<Self, GraphError> {
        self.signal = Some(h);
        self.validate()?;
        Ok(self)
    }

    pub fn with_self_attr(mut self, s: Vec<T>) -> Result<Self, GraphError> {
        self.self_attr = Some(s);
        self.validate()?;
        Ok(self)
    }

    /// Attribute of the implicit self-loop.
    pub fn self_attr_or_zero(&self) -> Vec<T> {
        self.self_attr.clone().unwrap_or_else(|| vec![T::zero(); self.edge_dim()])
    }

    /// `|N(i)|`: number of stored edges ending in each node.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(_, i) in &self.edges {
            d[i] += 1;
        }
        d
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(j, _) in &self.edges {
            d[j] += 1;
        }
        d
    }

    /// Sources of incoming edges per node, in stored edge order.
    pub fn in_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n];
        for &(j, i) in &self.edges {
            nb[i].push(j);
        }
        nb
    }

    /// Undirected adjacency lists (deduplicated, sorted).
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n];
        for &(j, i) in &self.edges {
            nb[i].push(j);
            nb[j].push(i);
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Reorders edges by `(dst, src)` so reductions over neighborhoods visit
    /// sources in ascending order.
    pub fn sort_edges(&mut self) {
        let d = self.edge_dim();
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by_key(|&e| (self.edges[e].1, self.edges[e].0, e));
        let edges = order.iter().map(|&e| self.edges[e]).collect();
        let mut attr = Vec::with_capacity(self.edge_attr.len());
        for &e in &order {
            attr.extend_from_slice(&self.edge_attr.data()[e * d..(e + 1) * d]);
        }
        self.edges = edges;
        self.edge_attr = Tensor::new(vec![self.edges.len(), d], attr).expect("edge attr shape");
    }

    /// True when `(j,i)` is stored iff `(i,j)` is.
    pub fn is_symmetric(&self) -> bool {
        let set: std::collections::HashSet<_> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(j, i)| set.contains(&(i, j)))
    }

    /// Connected components of the underlying undirected graph, labelled in
    /// order of their smallest node.
    pub fn connected_components(&self) -> Vec<usize> {
        let nb = self.undirected_neighbors();
        let mut comp = vec![usize::MAX; self.n];
        let mut next = 0;
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &v in &nb[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Subgraph induced by `keep` (in the given order), relabelled densely.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let d = self.edge_dim();
        let mut edges = Vec::new();
        let mut attr = Vec::new();
        for (e, &(j, i)) in self.edges.iter().enumerate() {
            if map[j] != usize::MAX && map[i] != usize::MAX {
                edges.push((map[j], map[i]));
                attr.extend_from_slice(&self.edge_attr.data()[e * d..(e + 1) * d]);
            }
        }
        let dn = self.node_dim();
        let mut nattr = Vec::with_capacity(keep.len() * dn);
        for &k in keep {
            nattr.extend_from_slice(self.node_attr.row(k));
        }
        let signal = self.signal.as_ref().map(|h| {
            let w = h.cols();
            let mut s = Vec::with_capacity(keep.len() * w);
            for &k in keep {
                s.extend_from_slice(h.row(k));
            }
            Tensor::new(vec![keep.len(), w], s).expect("signal shape")
        });
        AttributedGraph {
            n: keep.len(),
            node_attr: Tensor::new(vec![keep.len(), dn], nattr).expect("node attr shape"),
            edge_attr: Tensor::new(vec![edges.len(), d], attr).expect("edge attr shape"),
            edges,
            self_attr: self.self_attr.clone(),
            signal,
        }
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            n: self.n,
            edges: self.edges.iter().map(|&(j, i)| [j, i]).collect(),
            node_attr: self.node_attr.to_rows().into_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect(),
            edge_attr: self.edge_attr.to_rows().into_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect(),
            self_attr: self.self_attr.as_ref().map(|s| s.iter().map(|x| x.as_f64()).collect()),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self, GraphError> {
        let m = doc.edges.len();
        let dn = doc.node_attr.first().map_or(0, Vec::len);
        let de = doc.edge_attr.first().map_or(0, Vec::len);
        let conv = |rows: &[Vec<f64>], r: usize, c: usize, what: &str| -> Result<Tensor<T>, GraphError> {
            if rows.is_empty() {
                return Ok(Tensor::zeros(vec![r, 0]));
            }
            if rows.len() != r || rows.iter().any(|x| x.len() != c) {
                return Err(GraphError::Invalid(format!("{what}: expected {r} rows of width {c}")));
            }
            Ok(Tensor::from_f64(vec![r, c], &rows.concat())?)
        };
        let mut g = AttributedGraph {
            n: doc.n,
            edges: doc.edges.iter().map(|e| (e[0], e[1])).collect(),
            node_attr: conv(&doc.node_attr, doc.n, dn, "node_attr")?,
            edge_attr: conv(&doc.edge_attr, m, de, "edge_attr")?,
            self_attr: doc.self_attr.as_ref().map(|s| s.iter().map(|&x| T::of(x)).collect()),
            signal: None,
        };
        if doc.edge_attr.is_empty() {
            g.edge_attr = Tensor::zeros(vec![m, 0]);
        }
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument = serde_json::from_str(s)?;
        Self::from_document(&doc)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// JSON form of a graph: `{"n", "edges": [[j,i],...], "node_attr", "edge_attr"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub node_attr: Vec<Vec<f64>>,
    #[serde(default)]
    pub edge_attr: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_attr: Option<Vec<f64>>,
}
