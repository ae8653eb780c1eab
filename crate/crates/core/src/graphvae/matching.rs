use crate::diffcore::Tensor;
use crate::graphcore::GraphError;
use crate::scalar::Scalar;

use super::graph::{DenseGraph, ProbGraph};

/// Default number of max-pooling matching iterations.
pub const MPM_ITERS: usize = 75;

/// Pairwise similarities between node pairs of a discrete graph on `n`
/// nodes and a probabilistic graph on `k` nodes. Only the non-zero part is
/// stored: node pairs `(i,i)×(a,a)` and, per directed edge `(i,j)` of the
/// discrete graph, a `k×k` block over `(a,b)`.
#[derive(Clone, Debug)]
pub struct Similarity<T> {
    pub n: usize,
    pub k: usize,
    /// `n×k`, `S((i,i),(a,a))`.
    pub node: Vec<T>,
    /// Directed edges `(i,j)` of the discrete graph.
    pub edges: Vec<(usize, usize)>,
    /// `edges.len()` blocks of `k×k`.
    pub blocks: Vec<T>,
    /// `nbr[i]` lists `(j, block index)` for the edges leaving `i`.
    pub nbr: Vec<Vec<(usize, usize)>>,
}

impl<T: Scalar> Similarity<T> {
    /// `S((i,j),(a,b))` for any indices; zero outside the stored support.
    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> T {
        if i >= self.n || j >= self.n {
            return T::zero();
        }
        if i == j {
            return if a == b { self.node[i * self.k + a] } else { T::zero() };
        }
        match self.nbr[i].iter().find(|&&(jj, _)| jj == j) {
            Some(&(_, e)) => self.blocks[e * self.k * self.k + a * self.k + b],
            None => T::zero(),
        }
    }

    /// Dense `(n·k)×(n·k)` matrix indexed by `i·k + a`.
    pub fn dense(&self) -> Tensor<T> {
        let (n, k) = (self.n, self.k);
        let mut t = Tensor::zeros(vec![n * k, n * k]);
        for i in 0..n {
            for a in 0..k {
                for j in 0..n {
                    for b in 0..k {
                        t.set2(i * k + a, j * k + b, self.get(i, j, a, b));
                    }
                }
            }
        }
        t
    }
}

/// Node- and edge-pair similarities combining attribute agreement and the
/// existence probabilities of the probabilistic graph.
pub fn similarity<T: Scalar>(g: &DenseGraph, p: &ProbGraph<T>) -> Result<Similarity<T>, GraphError> {
    let (n, k) = (g.n(), p.k);
    if n > k {
        return Err(GraphError::Parameter(format!("graph with {n} nodes exceeds k = {k}")));
    }
    if g.d_n != p.d_n() || g.d_e != p.d_e() {
        return Err(GraphError::Encoding(format!(
            "attribute widths ({}, {}) differ from ({}, {})",
            g.d_n,
            g.d_e,
            p.d_n(),
            p.d_e()
        )));
    }
    let mut node = vec![T::zero(); n * k];
    for (i, &c) in g.node_class.iter().enumerate() {
        for a in 0..k {
            node[i * k + a] = p.node_dist(a)[c] * p.node_prob(a);
        }
    }
    let mut edges = Vec::with_capacity(2 * g.edges.len());
    let mut classes = Vec::with_capacity(2 * g.edges.len());
    for &(i, j, c) in &g.edges {
        edges.extend([(i, j), (j, i)]);
        classes.extend([c, c]);
    }
    let mut blocks = vec![T::zero(); edges.len() * k * k];
    let mut nbr = vec![Vec::new(); n];
    for (e, (&(i, j), &c)) in edges.iter().zip(&classes).enumerate() {
        nbr[i].push((j, e));
        let blk = &mut blocks[e * k * k..(e + 1) * k * k];
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    blk[a * k + b] = p.edge_dist(a, b)[c] * p.edge_prob(a, b) * p.node_prob(a) * p.node_prob(b);
                }
            }
        }
    }
    Ok(Similarity { n, k, node, edges, blocks, nbr })
}

/// Max-pooling matching: starting from uniform correspondences, repeats
/// `x_ia ← x_ia S_ia;ia + Σ_j max_b x_jb S_ia;jb` followed by ℓ2
/// normalization. Returns `X*` as `k×n`.
pub fn mpm_match<T: Scalar>(sim: &Similarity<T>, iters: usize) -> Tensor<T> {
    let (n, k) = (sim.n, sim.k);
    let uniform = T::one() / T::of_usize(n * k).sqrt();
    let mut x = vec![uniform; n * k];
    let mut next = vec![T::zero(); n * k];
    for _ in 0..iters {
        for i in 0..n {
            for a in 0..k {
                let mut v = x[i * k + a] * sim.node[i * k + a];
                for &(j, e) in &sim.nbr[i] {
                    let blk = &sim.blocks[e * k * k + a * k..e * k * k + (a + 1) * k];
                    let xj = &x[j * k..(j + 1) * k];
                    let best = blk.iter().zip(xj).map(|(&s, &xb)| s * xb).fold(T::zero(), T::max);
                    v += best;
                }
                next[i * k + a] = v;
            }
        }
        let norm = next.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            x.iter_mut().zip(&next).for_each(|(xi, &v)| *xi = v / norm);
        } else {
            x.iter_mut().for_each(|xi| *xi = uniform);
        }
    }
    let mut out = Tensor::zeros(vec![k, n]);
    for i in 0..n {
        for a in 0..k {
            out.set2(a, i, x[i * k + a]);
        }
    }
    out
}

/// Discrete one-to-one assignment of `n` graph nodes to `k ≥ n` decoded nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub k: usize,
    /// `perm[i]` is the decoded node assigned to graph node `i`.
    pub perm: Vec<usize>,
}

impl Assignment {
    pub fn identity(n: usize, k: usize) -> Self {
        Assignment { k, perm: (0..n).collect() }
    }

    /// Binary `k×n` matrix.
    pub fn matrix<T: Scalar>(&self) -> Tensor<T> {
        let mut x = Tensor::zeros(vec![self.k, self.perm.len()]);
        for (i, &a) in self.perm.iter().enumerate() {
            x.set2(a, i, T::one());
        }
        x
    }

    /// Graph node assigned to each decoded node, if any.
    pub fn inverse(&self) -> Vec<Option<usize>> {
        let mut inv = vec![None; self.k];
        for (i, &a) in self.perm.iter().enumerate() {
            inv[a] = Some(i);
        }
        inv
    }

    /// `Σ_i X*[perm(i), i]`.
    pub fn score<T: Scalar>(&self, x_star: &Tensor<T>) -> T {
        self.perm.iter().enumerate().map(|(i, &a)| x_star.get2(a, i)).sum()
    }
}

/// Maximum-total-score assignment of the columns of `X*` (`k×n`, `n ≤ k`)
/// to distinct rows (Kuhn–Munkres with potentials, `O(n²k)`).
pub fn hungarian<T: Scalar>(x_star: &Tensor<T>) -> Assignment {
    let (k, n) = (x_star.rows(), x_star.cols());
    assert!(n <= k, "hungarian needs at least as many rows as columns");
    let cost = |i: usize, a: usize| -x_star.get2(a, i).as_f64();
    // 1-based potentials; rows are graph nodes, columns decoded nodes
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=k {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    Assignment { k, perm }
}

/// Similarity, max-pooling matching and Hungarian discretization.
pub fn match_graphs<T: Scalar>(g: &DenseGraph, p: &ProbGraph<T>, iters: usize) -> Result<Assignment, GraphError> {
    let sim = similarity(g, p)?;
    Ok(hungarian(&mpm_match(&sim, iters)))
}
