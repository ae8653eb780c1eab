use rand::Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::graphcore::GraphError;
use crate::scalar::Scalar;

use super::graph::{valence, Alphabet, DenseGraph, ProbGraph};
use super::matching::{match_graphs, Assignment, MPM_ITERS};

/// Relative frequencies of C, N, O, F.
const ATOM_WEIGHTS: [f64; 4] = [0.7, 0.12, 0.13, 0.05];

/// Random connected molecule-like graph on `n` atoms of the default alphabet
/// that respects valences: a random tree, a few ring closures and
/// occasional bond upgrades.
pub fn random_molecule<R: Rng>(n: usize, rng: &mut R) -> DenseGraph {
    let alpha = Alphabet::default();
    let cap: Vec<f64> = alpha.atoms.iter().map(|a| valence(a).expect("known atom")).collect();
    let orders = &alpha.bond_orders;
    let pick = WeightedIndex::new(ATOM_WEIGHTS).expect("weights");
    loop {
        let mut atoms: Vec<usize> = Vec::with_capacity(n);
        let mut load: Vec<f64> = Vec::with_capacity(n);
        let mut bonds: Vec<(usize, usize, usize)> = Vec::new();
        let mut ok = true;
        for t in 0..n {
            let mut c = pick.sample(rng);
            if t == 0 && n > 1 && cap[c] < 2.0 {
                c = 0;
            }
            let parents: Vec<usize> = (0..t).filter(|&p| cap[atoms[p]] - load[p] >= 1.0).collect();
            atoms.push(c);
            load.push(0.0);
            if t > 0 {
                if parents.is_empty() {
                    ok = false;
                    break;
                }
                let p = parents[rng.gen_range(0..parents.len())];
                bonds.push((p, t, 0));
                load[p] += 1.0;
                load[t] += 1.0;
            }
        }
        if !ok {
            continue;
        }
        let free = |i: usize, load: &[f64], atoms: &[usize]| cap[atoms[i]] - load[i];
        // ring closures
        let rings = if n >= 5 { rng.gen_range(0..=2usize.min(n / 5)) } else { 0 };
        for _ in 0..rings {
            for _try in 0..20 {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                let (i, j) = (i.min(j), i.max(j));
                if j - i < 2 || bonds.iter().any(|&(a, b, _)| (a, b) == (i, j)) {
                    continue;
                }
                if free(i, &load, &atoms) >= 1.0 && free(j, &load, &atoms) >= 1.0 {
                    bonds.push((i, j, 0));
                    load[i] += 1.0;
                    load[j] += 1.0;
                    break;
                }
            }
        }
        // bond upgrades
        for b in 0..bonds.len() {
            let (i, j, _) = bonds[b];
            let u: f64 = rng.gen();
            let target = if u < 0.12 {
                1
            } else if u < 0.15 {
                2
            } else if u < 0.2 {
                3
            } else {
                continue;
            };
            let extra = orders[target] - orders[0];
            if free(i, &load, &atoms) >= extra && free(j, &load, &atoms) >= extra {
                bonds[b].2 = target;
                load[i] += extra;
                load[j] += extra;
            }
        }
        return DenseGraph::new(atoms, bonds, alpha.atoms.len(), orders.len()).expect("generated graph is valid");
    }
}

/// Standard deviations of the Gaussian noise added to each tensor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub a: f64,
    pub e: f64,
    pub f: f64,
}

fn renormalize<T: Scalar>(row: &mut [T]) {
    let s: T = row.iter().copied().sum();
    if s > T::zero() {
        row.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = T::one() / T::of_usize(row.len());
        row.iter_mut().for_each(|v| *v = u);
    }
}

/// `g` padded to `k` nodes with symmetric Gaussian noise on every tensor,
/// truncated to `[0, 1]` and renormalized to distributions.
pub fn noisy_prob_graph<T: Scalar, R: Rng>(g: &DenseGraph, k: usize, eps: NoiseLevels, rng: &mut R) -> Result<ProbGraph<T>, GraphError> {
    let mut p = ProbGraph::<T>::from_dense(g, k)?;
    let noise = |sd: f64, rng: &mut R| if sd > 0.0 { T::of(Normal::new(0.0, sd).expect("sd").sample(rng)) } else { T::zero() };
    let clip = |v: T| v.max(T::zero()).min(T::one());
    let (d_e, d_n) = (p.d_e(), p.d_n());
    for a in 0..k {
        for b in a..k {
            let v = clip(p.a.get2(a, b) + noise(eps.a, rng));
            p.a.set2(a, b, v);
            p.a.set2(b, a, v);
            let mut row: Vec<T> = p.edge_dist(a, b).iter().map(|&x| clip(x + noise(eps.e, rng))).collect();
            renormalize(&mut row);
            for l in 0..d_e {
                p.e.set2(a * k + b, l, row[l]);
                p.e.set2(b * k + a, l, row[l]);
            }
        }
        let mut row: Vec<T> = p.node_dist(a).iter().map(|&x| clip(x + noise(eps.f, rng))).collect();
        renormalize(&mut row);
        for l in 0..d_n {
            p.f.set2(a, l, row[l]);
        }
    }
    Ok(p)
}

/// Agreement of `g` with itself transported through the assignment: the
/// adjacency rate averages diagonal and off-diagonal agreement, the node and
/// edge rates count matched classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchAccuracy {
    pub a: f64,
    pub f: f64,
    pub e: f64,
}

impl MatchAccuracy {
    pub fn mean(&self) -> f64 {
        (self.a + self.f + self.e) / 3.0
    }
}

pub fn self_match_accuracy(g: &DenseGraph, x: &Assignment) -> MatchAccuracy {
    match_accuracy(g, g, x).expect("n ≤ k")
}

/// Agreement between `g` mapped through `x` and `target` laid out on the
/// first nodes of `k`.
pub fn match_accuracy(g: &DenseGraph, target: &DenseGraph, x: &Assignment) -> Result<MatchAccuracy, GraphError> {
    let k = x.k;
    let n = g.n();
    if x.perm.len() != n {
        return Err(GraphError::Parameter(format!("assignment of {} nodes for a graph of {n}", x.perm.len())));
    }
    if g.d_n != target.d_n || g.d_e != target.d_e {
        return Err(GraphError::Encoding("attribute widths differ".into()));
    }
    let truth = ProbGraph::<f64>::from_dense(target, k)?;
    let mapped: Tensor<f64> = super::loss::mapped_adjacency(g, x);
    let diag = (0..k).filter(|&a| mapped.get2(a, a) == truth.a.get2(a, a)).count() as f64 / k as f64;
    let off = if k > 1 {
        let hits = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).filter(|&(a, b)| a != b && mapped.get2(a, b) == truth.a.get2(a, b)).count();
        hits as f64 / (k * (k - 1)) as f64
    } else {
        1.0
    };
    let f = if n == 0 {
        1.0
    } else {
        g.node_class.iter().zip(&x.perm).filter(|(&c, &a)| truth.node_dist(a)[c] == 1.0).count() as f64 / n as f64
    };
    let e = if g.edges.is_empty() {
        1.0
    } else {
        let hits: usize = g
            .edges
            .iter()
            .map(|&(i, j, c)| {
                let (a, b) = (x.perm[i], x.perm[j]);
                (truth.edge_dist(a, b)[c] == 1.0) as usize + (truth.edge_dist(b, a)[c] == 1.0) as usize
            })
            .sum();
        hits as f64 / (2 * g.edges.len()) as f64
    };
    Ok(MatchAccuracy { a: (diag + off) / 2.0, f, e })
}

/// Mean self-matching accuracy over `count` random molecules on
/// `⌈k/2⌉..=k` atoms matched against noisy copies of themselves.
pub fn matching_benchmark<R: Rng>(k: usize, count: usize, eps: NoiseLevels, rng: &mut R) -> Result<MatchAccuracy, GraphError> {
    let mut sum = MatchAccuracy { a: 0.0, f: 0.0, e: 0.0 };
    for _ in 0..count {
        let n = rng.gen_range(k.div_ceil(2).max(1)..=k);
        let g = random_molecule(n, rng);
        let p = noisy_prob_graph::<f64, R>(&g, k, eps, rng)?;
        let x = match_graphs(&g, &p, MPM_ITERS)?;
        let acc = self_match_accuracy(&g, &x);
        sum.a += acc.a;
        sum.f += acc.f;
        sum.e += acc.e;
    }
    let c = count.max(1) as f64;
    Ok(MatchAccuracy { a: sum.a / c, f: sum.f / c, e: sum.e / c })
}
