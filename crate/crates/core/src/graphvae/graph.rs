use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::graphcore::{AttributedGraph, GraphError};
use crate::scalar::Scalar;

/// Discrete undirected graph with categorical node and edge classes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DenseGraph {
    pub node_class: Vec<usize>,
    /// Undirected edges `(i, j, class)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, usize)>,
    pub d_n: usize,
    pub d_e: usize,
}

impl DenseGraph {
    pub fn new(node_class: Vec<usize>, edges: Vec<(usize, usize, usize)>, d_n: usize, d_e: usize) -> Result<Self, GraphError> {
        let n = node_class.len();
        if let Some(c) = node_class.iter().find(|&&c| c >= d_n) {
            return Err(GraphError::Encoding(format!("node class {c} outside 0..{d_n}")));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (i, j, c) in edges {
            if i == j || i >= n || j >= n {
                return Err(GraphError::Invalid(format!("edge ({i},{j}) invalid for {n} nodes")));
            }
            if c >= d_e {
                return Err(GraphError::Encoding(format!("edge class {c} outside 0..{d_e}")));
            }
            norm.push((i.min(j), i.max(j), c));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(GraphError::Invalid("duplicate edge".into()));
        }
        Ok(DenseGraph { node_class, edges: norm, d_n, d_e })
    }

    pub fn n(&self) -> usize {
        self.node_class.len()
    }

    /// `n×n` edge-class table (`None` for non-edges and the diagonal).
    pub fn edge_table(&self) -> Vec<Vec<Option<usize>>> {
        let n = self.n();
        let mut t = vec![vec![None; n]; n];
        for &(i, j, c) in &self.edges {
            t[i][j] = Some(c);
            t[j][i] = Some(c);
        }
        t
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n()];
        for &(i, j, _) in &self.edges {
            nb[i].push(j);
            nb[j].push(i);
        }
        nb
    }

    /// True for a non-empty graph with a single connected component.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let nb = self.neighbors();
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &nb[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Applies a node relabelling: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut node_class = vec![0; self.n()];
        for (i, &p) in perm.iter().enumerate() {
            node_class[p] = self.node_class[i];
        }
        let edges = self.edges.iter().map(|&(i, j, c)| (perm[i], perm[j], c)).collect();
        DenseGraph::new(node_class, edges, self.d_n, self.d_e).expect("permutation keeps validity")
    }

    /// Reads one-hot node attributes (`n×d_n`) and one-hot edge attributes
    /// (`m×d_e`) from a symmetric attributed graph.
    pub fn from_attributed<T: Scalar>(g: &AttributedGraph<T>) -> Result<Self, GraphError> {
        let argmax = |row: &[T], what: &str| -> Result<usize, GraphError> {
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == T::one()).map(|(c, _)| c).collect();
            let zeros = row.iter().filter(|&&v| v == T::zero()).count();
            if ones.len() != 1 || zeros + 1 != row.len() {
                return Err(GraphError::Encoding(format!("{what} attribute is not one-hot")));
            }
            Ok(ones[0])
        };
        let node_class = (0..g.n).map(|i| argmax(g.node_attr.row(i), "node")).collect::<Result<Vec<_>, _>>()?;
        let mut edges = Vec::new();
        for (e, &(j, i)) in g.edges.iter().enumerate() {
            let c = argmax(g.edge_attr.row(e), "edge")?;
            if j < i {
                edges.push((j, i, c));
            }
        }
        if !g.is_symmetric() {
            return Err(GraphError::Invalid("molecular graphs must be symmetric".into()));
        }
        DenseGraph::new(node_class, edges, g.node_dim(), g.edge_dim())
    }

    /// Symmetric attributed graph with one-hot node and edge attributes.
    pub fn to_attributed<T: Scalar>(&self) -> AttributedGraph<T> {
        let n = self.n();
        let mut nattr = vec![T::zero(); n * self.d_n];
        for (i, &c) in self.node_class.iter().enumerate() {
            nattr[i * self.d_n + c] = T::one();
        }
        let mut edges = Vec::with_capacity(2 * self.edges.len());
        let mut eattr = Vec::with_capacity(2 * self.edges.len() * self.d_e);
        for &(i, j, c) in &self.edges {
            for (s, d) in [(i, j), (j, i)] {
                edges.push((s, d));
                eattr.extend((0..self.d_e).map(|k| if k == c { T::one() } else { T::zero() }));
            }
        }
        let m = edges.len();
        let mut g = AttributedGraph::new(
            n,
            edges,
            Tensor::new(vec![n, self.d_n], nattr).expect("node attr"),
            Tensor::new(vec![m, self.d_e], eattr).expect("edge attr"),
        )
        .expect("valid graph");
        g.self_attr = Some(vec![T::zero(); self.d_e]);
        g.sort_edges();
        g
    }

    /// Histogram of node classes.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.d_n];
        self.node_class.iter().for_each(|&c| h[c] += 1);
        h
    }
}

/// Probabilistic fully connected graph on `k` nodes: `a` holds node
/// probabilities on the diagonal and edge probabilities elsewhere, `e` the
/// edge class distribution of pair `(a, b)` in row `a·k + b`, `f` the node
/// class distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbGraph<T> {
    pub k: usize,
    pub a: Tensor<T>,
    pub e: Tensor<T>,
    pub f: Tensor<T>,
}

impl<T: Scalar> ProbGraph<T> {
    pub fn d_e(&self) -> usize {
        self.e.cols()
    }

    pub fn d_n(&self) -> usize {
        self.f.cols()
    }

    pub fn node_prob(&self, a: usize) -> T {
        self.a.get2(a, a)
    }

    pub fn edge_prob(&self, a: usize, b: usize) -> T {
        self.a.get2(a, b)
    }

    pub fn edge_dist(&self, a: usize, b: usize) -> &[T] {
        self.e.row(a * self.k + b)
    }

    pub fn node_dist(&self, a: usize) -> &[T] {
        self.f.row(a)
    }

    /// Deterministic version of `g` padded with absent nodes up to `k`.
    /// Pairs without an edge (and padded nodes) get uniform class rows.
    pub fn from_dense(g: &DenseGraph, k: usize) -> Result<Self, GraphError> {
        let n = g.n();
        if n > k {
            return Err(GraphError::Parameter(format!("graph with {n} nodes exceeds k = {k}")));
        }
        let (d_e, d_n) = (g.d_e, g.d_n);
        let mut a = Tensor::zeros(vec![k, k]);
        let mut e = Tensor::full(vec![k * k, d_e], T::one() / T::of_usize(d_e));
        let mut f = Tensor::full(vec![k, d_n], T::one() / T::of_usize(d_n));
        for (i, &c) in g.node_class.iter().enumerate() {
            a.set2(i, i, T::one());
            for l in 0..d_n {
                f.set2(i, l, if l == c { T::one() } else { T::zero() });
            }
        }
        for &(i, j, c) in &g.edges {
            a.set2(i, j, T::one());
            a.set2(j, i, T::one());
            for r in [i * k + j, j * k + i] {
                for l in 0..d_e {
                    e.set2(r, l, if l == c { T::one() } else { T::zero() });
                }
            }
        }
        Ok(ProbGraph { k, a, e, f })
    }

    /// Checks ranges, symmetry and that class rows are distributions.
    pub fn validate(&self, tol: f64) -> Result<(), GraphError> {
        let k = self.k;
        if self.a.shape() != [k, k] || self.e.rows() != k * k || self.f.rows() != k {
            return Err(GraphError::Invalid("probabilistic graph tensor shapes".into()));
        }
        let tol = T::of(tol);
        for x in 0..k {
            for y in 0..k {
                let p = self.a.get2(x, y);
                if !(p >= T::zero() && p <= T::one()) || (p - self.a.get2(y, x)).abs() > tol {
                    return Err(GraphError::Invalid(format!("adjacency entry ({x},{y}) = {p}")));
                }
                let (r, s) = (self.edge_dist(x, y), self.edge_dist(y, x));
                if r.iter().zip(s).any(|(u, v)| (*u - *v).abs() > tol) {
                    return Err(GraphError::Invalid(format!("edge classes of ({x},{y}) not symmetric")));
                }
            }
        }
        let rows_ok = |t: &Tensor<T>| {
            (0..t.rows()).all(|r| {
                let row = t.row(r);
                row.iter().all(|&v| v >= T::zero()) && (row.iter().copied().sum::<T>() - T::one()).abs() <= tol
            })
        };
        if !rows_ok(&self.e) || !rows_ok(&self.f) {
            return Err(GraphError::Invalid("class rows are not distributions".into()));
        }
        Ok(())
    }
}

/// Atom symbols, bond orders and valences used to interpret classes as chemistry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    pub atoms: Vec<String>,
    pub bond_orders: Vec<f64>,
}

impl Default for Alphabet {
    /// Four heavy atoms and four bond types, aromatic last.
    fn default() -> Self {
        Alphabet { atoms: ["C", "N", "O", "F"].map(String::from).to_vec(), bond_orders: vec![1.0, 2.0, 3.0, 1.5] }
    }
}

/// Standard valence of a heavy atom symbol.
pub fn valence(symbol: &str) -> Option<f64> {
    Some(match symbol {
        "C" => 4.0,
        "N" | "P" | "B" => 3.0,
        "O" | "S" => 2.0,
        "F" | "Cl" | "Br" | "I" | "H" => 1.0,
        _ => return None,
    })
}

/// Molecule file record: `{"atoms": [...], "bonds": [[i, j, order], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub atoms: Vec<String>,
    pub bonds: Vec<(usize, usize, f64)>,
}

impl Molecule {
    pub fn from_graph(g: &DenseGraph, alphabet: &Alphabet) -> Result<Self, GraphError> {
        let atoms = g
            .node_class
            .iter()
            .map(|&c| alphabet.atoms.get(c).cloned().ok_or_else(|| GraphError::Encoding(format!("no atom for class {c}"))))
            .collect::<Result<_, _>>()?;
        let bonds = g
            .edges
            .iter()
            .map(|&(i, j, c)| {
                alphabet.bond_orders.get(c).map(|&o| (i, j, o)).ok_or_else(|| GraphError::Encoding(format!("no bond for class {c}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Molecule { atoms, bonds })
    }

    pub fn to_graph(&self, alphabet: &Alphabet) -> Result<DenseGraph, GraphError> {
        let node_class = self
            .atoms
            .iter()
            .map(|a| alphabet.atoms.iter().position(|x| x == a).ok_or_else(|| GraphError::Encoding(format!("unknown atom {a}"))))
            .collect::<Result<_, _>>()?;
        let edges = self
            .bonds
            .iter()
            .map(|&(i, j, o)| {
                alphabet
                    .bond_orders
                    .iter()
                    .position(|&x| x == o)
                    .map(|c| (i, j, c))
                    .ok_or_else(|| GraphError::Encoding(format!("unknown bond order {o}")))
            })
            .collect::<Result<_, _>>()?;
        DenseGraph::new(node_class, edges, alphabet.atoms.len(), alphabet.bond_orders.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("molecule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        Ok(serde_json::from_str(s)?)
    }

    /// One molecule per line.
    pub fn save_lines(mols: &[Molecule], path: &Path) -> Result<(), GraphError> {
        let mut s = String::new();
        for m in mols {
            s.push_str(&m.to_json());
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load_lines(path: &Path) -> Result<Vec<Molecule>, GraphError> {
        std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()).map(Molecule::from_json).collect()
    }
}
