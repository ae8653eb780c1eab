use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::graphcore::{AttributedGraph, GraphError, PointCloud};
use crate::scalar::Scalar;

use super::maxflow::FlowGraph;

/// Added to edge lengths before inverting them into edge weights.
pub const LENGTH_EPS: f64 = 1e-3;
/// Alternating centroid refinements per binary split.
pub const SPLIT_ROUNDS: usize = 5;

/// Piecewise-constant approximation of per-point features.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition<T> {
    /// Dense component id per point, numbered in order of first point.
    pub component: Vec<usize>,
    /// Constant value per component (the mean of its features).
    pub values: Vec<Vec<T>>,
    pub energy: T,
    /// Energy after every outer iteration, starting with the initial one.
    pub history: Vec<T>,
}

impl<T: Scalar> Partition<T> {
    pub fn num_components(&self) -> usize {
        self.values.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        members_of(&self.component, self.num_components())
    }

    /// Partition given by component ids alone (values left empty).
    pub fn from_ids(ids: Vec<usize>) -> Self {
        let (component, k) = dense_relabel(&ids);
        Partition { component, values: vec![Vec::new(); k], energy: T::zero(), history: Vec::new() }
    }

    /// One component id per line.
    pub fn write_ids<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        for c in &self.component {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    pub fn save_ids(&self, path: &Path) -> Result<(), GraphError> {
        let f = std::fs::File::create(path)?;
        self.write_ids(std::io::BufWriter::new(f))
    }

    pub fn read_ids<R: BufRead>(r: R) -> Result<Vec<usize>, GraphError> {
        let mut ids = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            ids.push(t.parse().map_err(|e| GraphError::Parse { line: lineno + 1, detail: format!("{e}") })?);
        }
        Ok(ids)
    }

    pub fn load_ids(path: &Path) -> Result<Vec<usize>, GraphError> {
        Self::read_ids(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn members_of(comp: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); k];
    for (i, &c) in comp.iter().enumerate() {
        m[c].push(i);
    }
    m
}

/// Renumbers ids densely in order of first appearance.
fn dense_relabel(ids: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = ids
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Edge weights `1 / (‖P_src − P_dst‖ + ε)` aligned with `g.edges`.
pub fn inverse_length_weights<T: Scalar>(g: &AttributedGraph<T>, cloud: &PointCloud<T>) -> Vec<T> {
    let p = &cloud.positions;
    g.edges
        .iter()
        .map(|&(j, i)| {
            let d = crate::graphcore::dist2(&p[j], &p[i]).sqrt();
            T::one() / (d + T::of(LENGTH_EPS))
        })
        .collect()
}

struct Problem {
    n: usize,
    d: usize,
    f: Vec<f64>,
    /// Undirected neighbors with penalty `μ α`.
    nb: Vec<Vec<(usize, f64)>>,
    pairs: Vec<(usize, usize, f64)>,
}

impl Problem {
    fn row(&self, i: usize) -> &[f64] {
        &self.f[i * self.d..(i + 1) * self.d]
    }

    fn mean(&self, idx: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for &i in idx {
            for (a, v) in self.row(i).iter().enumerate() {
                m[a] += v;
            }
        }
        let n = idx.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    fn sq(&self, i: usize, c: &[f64]) -> f64 {
        self.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn fidelity(&self, idx: &[usize]) -> f64 {
        let m = self.mean(idx);
        idx.iter().map(|&i| self.sq(i, &m)).sum()
    }

    fn energy(&self, comp: &[usize], k: usize) -> f64 {
        let fid: f64 = members_of(comp, k).iter().map(|m| self.fidelity(m)).sum();
        let cut: f64 = self.pairs.iter().filter(|&&(a, b, _)| comp[a] != comp[b]).map(|&(_, _, w)| w).sum();
        fid + cut
    }

    /// Principal direction and its variance over `idx`, by power iteration.
    fn principal(&self, idx: &[usize], mean: &[f64]) -> (Vec<f64>, f64) {
        let d = self.d;
        let mut cov = vec![0.0; d * d];
        for &i in idx {
            let r = self.row(i);
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
            }
        }
        let n = idx.len() as f64;
        cov.iter_mut().for_each(|v| *v /= n);
        let trace: f64 = (0..d).map(|a| cov[a * d + a]).sum();
        let mut v: Vec<f64> = (0..d).map(|a| 1.0 + 0.1 * a as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..100 {
            let w: Vec<f64> = (0..d).map(|a| (0..d).map(|b| cov[a * d + b] * v[b]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 1e-300 {
                break;
            }
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        // a start vector orthogonal to the principal axis falls back to the
        // largest-variance coordinate
        if lambda <= 1e-12 * trace {
            let a = (0..d).max_by(|&x, &y| cov[x * d + x].total_cmp(&cov[y * d + y])).unwrap_or(0);
            v = vec![0.0; d];
            v[a] = 1.0;
            lambda = cov[a * d + a];
        }
        (v, lambda)
    }

    /// Best binary split of component `idx` found by alternating min-cuts and
    /// centroid updates; returns the connected pieces and the energy change.
    fn split(&self, idx: &[usize]) -> Option<(Vec<Vec<usize>>, f64)> {
        let m = self.mean(idx);
        let (v, var) = self.principal(idx, &m);
        if !(var > 0.0) {
            return None;
        }
        let s = var.sqrt();
        let mut c1: Vec<f64> = m.iter().zip(&v).map(|(a, b)| a + s * b).collect();
        let mut c2: Vec<f64> = m.iter().zip(&v).map(|(a, b)| a - s * b).collect();
        let mut local = HashMap::with_capacity(idx.len());
        for (l, &i) in idx.iter().enumerate() {
            local.insert(i, l);
        }
        let mut labels: Option<Vec<bool>> = None;
        for _ in 0..SPLIT_ROUNDS {
            let n = idx.len();
            let (src, snk) = (n, n + 1);
            let mut fg = FlowGraph::new(n + 2);
            let mut scale = 0.0f64;
            for (l, &i) in idx.iter().enumerate() {
                let diff = self.sq(i, &c2) - self.sq(i, &c1);
                scale = scale.max(diff.abs());
                if diff > 0.0 {
                    fg.add_edge(src, l, diff, 0.0);
                } else if diff < 0.0 {
                    fg.add_edge(l, snk, -diff, 0.0);
                }
            }
            for (l, &i) in idx.iter().enumerate() {
                for &(j, w) in &self.nb[i] {
                    if let Some(&lj) = local.get(&j) {
                        if l < lj {
                            fg.add_edge(l, lj, w, w);
                        }
                    }
                }
            }
            let eps = 1e-12 * scale.max(1e-300);
            fg.max_flow(src, snk, eps);
            let side = fg.source_side(src, eps);
            let lab: Vec<bool> = side[..n].to_vec();
            let ones: Vec<usize> = idx.iter().zip(&lab).filter(|(_, &b)| b).map(|(&i, _)| i).collect();
            if ones.is_empty() || ones.len() == n {
                break;
            }
            let twos: Vec<usize> = idx.iter().zip(&lab).filter(|(_, &b)| !b).map(|(&i, _)| i).collect();
            let done = labels.as_ref() == Some(&lab);
            labels = Some(lab);
            if done {
                break;
            }
            c1 = self.mean(&ones);
            c2 = self.mean(&twos);
        }
        let lab = labels?;
        let pieces = self.pieces(idx, &lab, &local);
        if pieces.len() < 2 {
            return None;
        }
        let mut piece_of = HashMap::with_capacity(idx.len());
        for (p, members) in pieces.iter().enumerate() {
            for &i in members {
                piece_of.insert(i, p);
            }
        }
        let mut after: f64 = pieces.iter().map(|p| self.fidelity(p)).sum();
        for &i in idx {
            for &(j, w) in &self.nb[i] {
                if i < j && piece_of.get(&j).is_some_and(|&pj| pj != piece_of[&i]) {
                    after += w;
                }
            }
        }
        Some((pieces, after - self.fidelity(idx)))
    }

    /// Connected pieces of `idx` where edges only join equal labels.
    fn pieces(&self, idx: &[usize], lab: &[bool], local: &HashMap<usize, usize>) -> Vec<Vec<usize>> {
        let mut seen = vec![false; idx.len()];
        let mut out = Vec::new();
        for start in 0..idx.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut piece = vec![idx[start]];
            let mut stack = vec![start];
            while let Some(l) = stack.pop() {
                for &(j, _) in &self.nb[idx[l]] {
                    if let Some(&lj) = local.get(&j) {
                        if !seen[lj] && lab[lj] == lab[l] {
                            seen[lj] = true;
                            piece.push(j);
                            stack.push(lj);
                        }
                    }
                }
            }
            piece.sort_unstable();
            out.push(piece);
        }
        out
    }
}

/// Approximate minimizer of `Σ‖G_i − F_i‖² + μ Σ α_ij [G_i ≠ G_j]` over
/// piecewise-constant `G`, by greedy binary splits (ℓ0 cut pursuit).
///
/// Each unordered neighbor pair of `g` is penalized once; when both
/// directions are stored, the weight of the first stored one is used.
/// Components are connected in `g` and their value is the feature mean.
pub fn cut_pursuit_l0<T: Scalar>(
    g: &AttributedGraph<T>,
    features: &Tensor<T>,
    mu: T,
    alpha: &[T],
) -> Result<Partition<T>, GraphError> {
    let n = g.n;
    if features.rows() != n {
        return Err(GraphError::Invalid(format!("{} feature rows for {n} points", features.rows())));
    }
    if alpha.len() != g.num_edges() {
        return Err(GraphError::Parameter(format!("{} edge weights for {} edges", alpha.len(), g.num_edges())));
    }
    if !(mu >= T::zero()) || alpha.iter().any(|a| !(*a > T::zero())) {
        return Err(GraphError::Parameter("μ must be ≥ 0 and edge weights positive".into()));
    }
    let d = features.cols();
    let mut seen = HashMap::new();
    for (e, &(a, b)) in g.edges.iter().enumerate() {
        if a != b {
            seen.entry((a.min(b), a.max(b))).or_insert((mu * alpha[e]).as_f64());
        }
    }
    let mut pairs: Vec<(usize, usize, f64)> = seen.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut nb = vec![Vec::new(); n];
    for &(a, b, w) in &pairs {
        nb[a].push((b, w));
        nb[b].push((a, w));
    }
    let prob = Problem { n, d, f: features.data().iter().map(|v| v.as_f64()).collect(), nb, pairs };

    let mut comp = g.connected_components();
    let mut k = comp.iter().max().map_or(0, |m| m + 1);
    let mut energy = prob.energy(&comp, k);
    let mut history = vec![energy];
    loop {
        let members = members_of(&comp, k);
        let mut changed = false;
        for idx in members.iter().filter(|m| m.len() > 1) {
            let Some((pieces, delta)) = prob.split(idx) else { continue };
            if delta < -1e-12 * (1.0 + energy.abs()) {
                changed = true;
                let keep = comp[idx[0]];
                for (p, piece) in pieces.iter().enumerate() {
                    let id = if p == 0 { keep } else { k + p - 1 };
                    piece.iter().for_each(|&i| comp[i] = id);
                }
                k += pieces.len() - 1;
            }
        }
        if !changed {
            break;
        }
        let next = prob.energy(&comp, k);
        assert!(next <= energy + 1e-9 * (1.0 + energy.abs()), "cut pursuit energy increased: {energy} -> {next}");
        energy = next;
        history.push(energy);
    }
    let (component, k) = dense_relabel(&comp);
    let values = members_of(&component, k)
        .iter()
        .map(|m| prob.mean(m).into_iter().map(T::of).collect())
        .collect();
    debug_assert_eq!(prob.n, component.len());
    Ok(Partition { component, values, energy: T::of(energy), history: history.into_iter().map(T::of).collect() })
}
