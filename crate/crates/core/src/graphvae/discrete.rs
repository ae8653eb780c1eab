use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Tensor, TensorError};
use crate::graphcore::GraphError;
use crate::scalar::{total_cmp, Scalar};

use super::graph::{valence, Alphabet, DenseGraph, Molecule, ProbGraph};
use super::model::{standard_normal, GraphVae};

/// Valence tolerance absorbing aromatic half-orders.
pub const VALENCE_TOLERANCE: f64 = 0.5;
/// Largest graph accepted by [`canonical_form`] by default.
pub const CANONICAL_NODE_BOUND: usize = 9;

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter().enumerate().max_by(|a, b| total_cmp(a.1, b.1).then(b.0.cmp(&a.0))).map_or(0, |(i, _)| i)
}

/// Discrete graph from node- and edge-wise thresholds and argmax classes.
/// With `mst_fix`, the edges of a maximum spanning tree over the probable
/// nodes (weighted by edge probability) are always included.
pub fn point_estimate<T: Scalar>(p: &ProbGraph<T>, mst_fix: bool) -> DenseGraph {
    let half = T::of(0.5);
    let nodes: Vec<usize> = (0..p.k).filter(|&a| p.node_prob(a) >= half).collect();
    let m = nodes.len();
    let mut keep = vec![vec![false; m]; m];
    for x in 0..m {
        for y in x + 1..m {
            keep[x][y] = p.edge_prob(nodes[x], nodes[y]) >= half;
        }
    }
    if mst_fix && m > 1 {
        // Prim on the complete graph over probable nodes
        let mut in_tree = vec![false; m];
        let mut best = vec![T::neg_infinity(); m];
        let mut parent = vec![0usize; m];
        in_tree[0] = true;
        for y in 1..m {
            best[y] = p.edge_prob(nodes[0], nodes[y]);
        }
        for _ in 1..m {
            let y = (0..m)
                .filter(|&y| !in_tree[y])
                .max_by(|&u, &v| total_cmp(&best[u], &best[v]).then(v.cmp(&u)))
                .expect("node left");
            in_tree[y] = true;
            let x = parent[y];
            keep[x.min(y)][x.max(y)] = true;
            for z in 0..m {
                let w = p.edge_prob(nodes[y], nodes[z]);
                if !in_tree[z] && total_cmp(&w, &best[z]) == Ordering::Greater {
                    best[z] = w;
                    parent[z] = y;
                }
            }
        }
    }
    let mut edges = Vec::new();
    for x in 0..m {
        for y in x + 1..m {
            if keep[x][y] {
                edges.push((x, y, argmax(p.edge_dist(nodes[x], nodes[y]))));
            }
        }
    }
    let classes = nodes.iter().map(|&a| argmax(p.node_dist(a))).collect();
    DenseGraph::new(classes, edges, p.d_n(), p.d_e()).expect("point estimate is a valid graph")
}

/// Replaces each node probability by that of its most probable edge.
pub fn implicit_node_probs<T: Scalar>(p: &ProbGraph<T>) -> ProbGraph<T> {
    let mut out = p.clone();
    if p.k < 2 {
        return out;
    }
    for a in 0..p.k {
        let m = (0..p.k).filter(|&b| b != a).map(|b| p.edge_prob(a, b)).fold(T::zero(), T::max);
        out.a.set2(a, a, m);
    }
    out
}

/// Connected, and no atom's bond-order sum exceeds its valence (the rest is
/// implicit hydrogen).
pub fn valence_valid(g: &DenseGraph, alphabet: &Alphabet) -> Result<bool, GraphError> {
    let mol = Molecule::from_graph(g, alphabet)?;
    molecule_valid(&mol)
}

pub fn molecule_valid(mol: &Molecule) -> Result<bool, GraphError> {
    let cap = mol
        .atoms
        .iter()
        .map(|a| valence(a).ok_or_else(|| GraphError::Encoding(format!("no valence for atom {a}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let n = mol.atoms.len();
    let mut load = vec![0.0; n];
    let mut nb = vec![Vec::new(); n];
    for &(i, j, o) in &mol.bonds {
        if i >= n || j >= n || i == j {
            return Err(GraphError::Invalid(format!("bond ({i},{j}) invalid for {n} atoms")));
        }
        load[i] += o;
        load[j] += o;
        nb[i].push(j);
        nb[j].push(i);
    }
    if n == 0 || load.iter().zip(&cap).any(|(l, c)| *l > c + VALENCE_TOLERANCE) {
        return Ok(false);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &nb[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    Ok(seen.iter().all(|&s| s))
}

/// Isomorphism-invariant code of a small attributed graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalForm(pub Vec<u16>);

/// Node colours refined from classes by neighbourhood multisets until stable.
fn refine_colors(g: &DenseGraph, table: &[Vec<Option<usize>>]) -> Vec<usize> {
    let n = g.n();
    let nb = g.neighbors();
    let mut color = g.node_class.clone();
    let mut count = color.iter().collect::<HashSet<_>>().len();
    loop {
        let sigs: Vec<(usize, Vec<(usize, usize)>)> = (0..n)
            .map(|v| {
                let mut m: Vec<(usize, usize)> = nb[v].iter().map(|&u| (table[v][u].expect("edge"), color[u])).collect();
                m.sort_unstable();
                (color[v], m)
            })
            .collect();
        let mut uniq = sigs.clone();
        uniq.sort();
        uniq.dedup();
        let next: Vec<usize> = sigs.iter().map(|s| uniq.binary_search(s).expect("present")).collect();
        let c = uniq.len();
        color = next;
        if c == count {
            return color;
        }
        count = c;
    }
}

struct Search<'a> {
    table: &'a [Vec<Option<usize>>],
    class: &'a [usize],
    slots: Vec<usize>,
    color: Vec<usize>,
    used: Vec<bool>,
    order: Vec<usize>,
    cur: Vec<u16>,
    best: Option<Vec<u16>>,
}

impl Search<'_> {
    fn segment(&self, v: usize) -> Vec<u16> {
        let mut seg = vec![self.class[v] as u16];
        seg.extend(self.order.iter().map(|&u| self.table[u][v].map_or(0, |c| c as u16 + 1)));
        seg
    }

    /// `tight`: the current prefix equals the best code's prefix.
    fn run(&mut self, tight: bool) {
        let t = self.order.len();
        if t == self.slots.len() {
            if self.best.as_ref().is_none_or(|b| self.cur < *b) {
                self.best = Some(self.cur.clone());
            }
            return;
        }
        for v in 0..self.slots.len() {
            if self.used[v] || self.color[v] != self.slots[t] {
                continue;
            }
            let seg = self.segment(v);
            let start = self.cur.len();
            let mut still_tight = false;
            if tight {
                if let Some(b) = &self.best {
                    match seg.as_slice().cmp(&b[start..start + seg.len()]) {
                        Ordering::Greater => continue,
                        Ordering::Equal => still_tight = true,
                        Ordering::Less => {}
                    }
                }
            }
            self.used[v] = true;
            self.order.push(v);
            self.cur.extend(&seg);
            self.run(still_tight || (tight && self.best.is_none()));
            self.cur.truncate(start);
            self.order.pop();
            self.used[v] = false;
        }
    }
}

/// Lexicographically minimal node-class / adjacency code over all node
/// orders consistent with a refined colouring. Refuses graphs above `bound`
/// nodes.
pub fn canonical_form(g: &DenseGraph, bound: usize) -> Result<CanonicalForm, GraphError> {
    let n = g.n();
    if n > bound {
        return Err(GraphError::Parameter(format!("canonical form limited to {bound} nodes, got {n}")));
    }
    let table = g.edge_table();
    let color = refine_colors(g, &table);
    let mut slots = color.clone();
    slots.sort_unstable();
    let mut search = Search {
        table: &table,
        class: &g.node_class,
        slots,
        color,
        used: vec![false; n],
        order: Vec::with_capacity(n),
        cur: vec![n as u16],
        best: None,
    };
    search.run(true);
    Ok(CanonicalForm(search.best.unwrap_or_else(|| vec![0])))
}

/// Anything that maps latent rows (and an optional label) to probabilistic graphs.
pub trait GraphSource<T> {
    fn latent_dim(&self) -> usize;
    fn decode_batch(&self, z: &Tensor<T>, y: Option<&[T]>) -> Result<Vec<ProbGraph<T>>, TensorError>;
}

/// A trained model together with its parameters.
pub struct TrainedDecoder<'a, T> {
    pub vae: &'a GraphVae,
    pub store: &'a ParamStore<T>,
}

impl<T: Scalar> GraphSource<T> for TrainedDecoder<'_, T> {
    fn latent_dim(&self) -> usize {
        self.vae.config.c
    }

    fn decode_batch(&self, z: &Tensor<T>, y: Option<&[T]>) -> Result<Vec<ProbGraph<T>>, TensorError> {
        let ys = y.map(|y| vec![y.to_vec(); z.rows()]);
        let input = self.vae.decoder_input(z, ys.as_deref())?;
        self.vae.decoder.decode(self.store, &input)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Draws per label.
    pub n_samples: usize,
    pub batch: usize,
    pub mst_fix: bool,
    /// Take node probabilities from the most probable incident edge.
    pub implicit_nodes: bool,
    pub canonical_bound: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { n_samples: 10_000, batch: 256, mst_fix: false, implicit_nodes: false, canonical_bound: CANONICAL_NODE_BOUND }
    }
}

/// Draws `z ~ N(0, I)` and returns point estimates of the decoded graphs.
pub fn sample_graphs<T: Scalar, R: Rng>(
    src: &dyn GraphSource<T>,
    y: Option<&[T]>,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<DenseGraph>, TensorError> {
    let mut out = Vec::with_capacity(cfg.n_samples);
    while out.len() < cfg.n_samples {
        let b = cfg.batch.max(1).min(cfg.n_samples - out.len());
        let z = standard_normal(rng, b, src.latent_dim());
        for p in src.decode_batch(&z, y)? {
            let p = if cfg.implicit_nodes { implicit_node_probs(&p) } else { p };
            out.push(point_estimate(&p, cfg.mst_fix));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub valid: f64,
    pub accurate: f64,
    pub unique: f64,
    pub novel: f64,
}

/// Ratios for one label from its drawn graphs. `target` is the expected node
/// class histogram (none for unconditional models, where every valid graph
/// counts as correct).
pub fn label_metrics(
    graphs: &[DenseGraph],
    target: Option<&[usize]>,
    dataset: &HashSet<CanonicalForm>,
    alphabet: &Alphabet,
    bound: usize,
) -> Result<SampleMetrics, GraphError> {
    let n_s = graphs.len();
    if n_s == 0 {
        return Ok(SampleMetrics::default());
    }
    let mut valid = 0usize;
    let mut correct = Vec::new();
    for g in graphs {
        if !valence_valid(g, alphabet)? {
            continue;
        }
        valid += 1;
        if target.is_none_or(|h| g.class_histogram() == h) {
            correct.push(canonical_form(g, bound)?);
        }
    }
    let c = correct.len();
    let set: HashSet<CanonicalForm> = correct.into_iter().collect();
    let (unique, novel) = if c == 0 {
        (0.0, 0.0)
    } else {
        let known = set.iter().filter(|f| dataset.contains(f)).count();
        (set.len() as f64 / c as f64, 1.0 - known as f64 / set.len() as f64)
    };
    Ok(SampleMetrics { valid: valid as f64 / n_s as f64, accurate: c as f64 / n_s as f64, unique, novel })
}

/// Valid, Accurate, Unique and Novel ratios. Conditional models pass labels
/// `(y, histogram, frequency)`; per-label ratios are averaged by frequency.
/// Unconditional models are evaluated as a single label accepting every
/// valid graph, so Valid equals Accurate.
pub fn sample_metrics<T: Scalar, R: Rng>(
    src: &dyn GraphSource<T>,
    labels: Option<&[(Vec<T>, Vec<usize>, f64)]>,
    dataset: &HashSet<CanonicalForm>,
    alphabet: &Alphabet,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<SampleMetrics, GraphError> {
    match labels {
        None => {
            let graphs = sample_graphs(src, None, cfg, rng)?;
            label_metrics(&graphs, None, dataset, alphabet, cfg.canonical_bound)
        }
        Some(labels) => {
            let total: f64 = labels.iter().map(|l| l.2).sum();
            let mut acc = SampleMetrics::default();
            for (y, hist, freq) in labels {
                let graphs = sample_graphs(src, Some(y), cfg, rng)?;
                let m = label_metrics(&graphs, Some(hist), dataset, alphabet, cfg.canonical_bound)?;
                let w = if total > 0.0 { freq / total } else { 0.0 };
                acc.valid += w * m.valid;
                acc.accurate += w * m.accurate;
                acc.unique += w * m.unique;
                acc.novel += w * m.novel;
            }
            Ok(acc)
        }
    }
}

/// Canonical forms of a dataset, for novelty checks.
pub fn canonical_set(graphs: &[DenseGraph], bound: usize) -> Result<HashSet<CanonicalForm>, GraphError> {
    graphs.iter().map(|g| canonical_form(g, bound)).collect()
}
