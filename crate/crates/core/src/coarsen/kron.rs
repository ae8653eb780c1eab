use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graphcore::{AttributedGraph, GraphError};
use crate::scalar::{Field, Scalar};

use super::graclus::undirected_weights;

/// Dense symmetric graph Laplacian `L = D − A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian<F> {
    pub n: usize,
    /// Row-major `n × n` entries.
    pub data: Vec<F>,
}

impl<F: Field> Laplacian<F> {
    pub fn zeros(n: usize) -> Self {
        Laplacian { n, data: vec![F::zero(); n * n] }
    }

    /// From undirected weighted pairs; repeated pairs accumulate.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, F)]) -> Result<Self, GraphError> {
        let mut l = Self::zeros(n);
        for (a, b, w) in pairs {
            let (a, b) = (*a, *b);
            if a >= n || b >= n {
                return Err(GraphError::Invalid(format!("pair ({a},{b}) out of range {n}")));
            }
            if a == b {
                continue;
            }
            l.data[a * n + a] = l.data[a * n + a].clone() + w.clone();
            l.data[b * n + b] = l.data[b * n + b].clone() + w.clone();
            l.data[a * n + b] = l.data[a * n + b].clone() - w.clone();
            l.data[b * n + a] = l.data[b * n + a].clone() - w.clone();
        }
        Ok(l)
    }

    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.data[i * self.n + j]
    }

    /// Undirected weighted pairs `(a, b, −L_ab)` for `a < b` with `L_ab < 0`.
    pub fn pairs(&self) -> Vec<(usize, usize, F)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                let v = self.get(a, b).clone();
                if v < F::zero() {
                    out.push((a, b, -v));
                }
            }
        }
        out
    }

    pub fn row_sum(&self, i: usize) -> F {
        self.data[i * self.n..(i + 1) * self.n].iter().cloned().fold(F::zero(), |a, b| a + b)
    }
}

impl<T: Scalar + Field> Laplacian<T> {
    /// Laplacian of a weighted graph (first edge-attribute column, or unit
    /// weights); each undirected pair is counted once.
    pub fn from_graph(g: &AttributedGraph<T>) -> Self {
        let pairs: Vec<_> = undirected_weights(g).into_iter().map(|((a, b), w)| (a, b, w)).collect();
        Self::from_pairs(g.n, &pairs).expect("edges in range")
    }

    /// Laplacian of the graph with every weight replaced by 1.
    pub fn unweighted(g: &AttributedGraph<T>) -> Self {
        let pairs: Vec<_> = undirected_weights(g).into_keys().map(|(a, b)| (a, b, T::one())).collect();
        Self::from_pairs(g.n, &pairs).expect("edges in range")
    }
}

/// Schur complement `L_kk − L_kr L_rr⁻¹ L_rk` onto the nodes `keep` (in the
/// given order). Works over any [`Field`], exactly for rationals.
pub fn kron_reduce<F: Field>(l: &Laplacian<F>, keep: &[usize]) -> Result<Laplacian<F>, GraphError> {
    let n = l.n;
    let mut is_kept = vec![false; n];
    for &k in keep {
        if k >= n || is_kept[k] {
            return Err(GraphError::Parameter(format!("invalid or repeated kept index {k}")));
        }
        is_kept[k] = true;
    }
    let rem: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let (nk, nr) = (keep.len(), rem.len());
    // Augmented system [L_rr | L_rk], eliminated in place.
    let w = nr + nk;
    let mut m: Vec<F> = Vec::with_capacity(nr * w);
    for &r in &rem {
        for &c in rem.iter().chain(keep) {
            m.push(l.get(r, c).clone());
        }
    }
    let scale = l.data.iter().map(|v| v.abs()).fold(F::zero(), |a, b| if b > a { b } else { a });
    for col in 0..nr {
        let piv = (col..nr)
            .max_by(|&a, &b| m[a * w + col].abs().partial_cmp(&m[b * w + col].abs()).expect("ordered").then(b.cmp(&a)))
            .expect("nonempty");
        if F::negligible(&m[piv * w + col], &scale) {
            return Err(GraphError::Reduction(format!(
                "interior block is singular (removed node {} has no path to a kept node)",
                rem[col]
            )));
        }
        if piv != col {
            for c in 0..w {
                m.swap(piv * w + c, col * w + c);
            }
        }
        let p = m[col * w + col].clone();
        for c in col..w {
            m[col * w + c] = m[col * w + c].clone() / p.clone();
        }
        for r in 0..nr {
            if r == col {
                continue;
            }
            let f = m[r * w + col].clone();
            if f.is_zero() {
                continue;
            }
            for c in col..w {
                let v = m[r * w + c].clone() - f.clone() * m[col * w + c].clone();
                m[r * w + c] = v;
            }
        }
    }
    // m[:, nr..] now holds X = L_rr⁻¹ L_rk.
    let mut out = Laplacian::zeros(nk);
    for (a, &ka) in keep.iter().enumerate() {
        for (b, &kb) in keep.iter().enumerate() {
            let mut v = l.get(ka, kb).clone();
            for (r, &rr) in rem.iter().enumerate() {
                v = v - l.get(ka, rr).clone() * m[r * w + nr + b].clone();
            }
            out.data[a * nk + b] = v;
        }
    }
    Ok(out)
}

/// Result of [`eigvec_split`].
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// Nodes with a nonnegative eigenvector entry, ascending.
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    /// Eigenvector estimate, normalized and sign-canonicalized (entry 0 ≥ 0).
    pub vector: Vec<f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
}

pub const POWER_ITERATIONS: usize = 200;
pub const POWER_TOLERANCE: f64 = 1e-8;

/// Splits nodes by the sign of the eigenvector of the largest Laplacian
/// eigenvalue, found by power iteration from a fixed seeded start.
pub fn eigvec_split<T: Scalar + Field>(l: &Laplacian<T>) -> Result<Split, GraphError> {
    let n = l.n;
    if n < 2 {
        return Err(GraphError::Parameter(format!("eigvec_split needs at least 2 nodes, got {n}")));
    }
    let a: Vec<f64> = l.data.iter().map(|v| v.as_f64()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    let mut iterations = 0;
    for it in 1..=POWER_ITERATIONS {
        iterations = it;
        let mut lv = matvec(&a, &v, n);
        lambda = dot(&v, &lv);
        let res = lv.iter().zip(&v).map(|(x, y)| (x - lambda * y).powi(2)).sum::<f64>().sqrt();
        if res < POWER_TOLERANCE {
            break;
        }
        if normalize(&mut lv) == 0.0 {
            break;
        }
        v = lv;
    }
    if v[0] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let positive = (0..n).filter(|&i| v[i] >= 0.0).collect();
    let negative = (0..n).filter(|&i| v[i] < 0.0).collect();
    Ok(Split { positive, negative, vector: v, eigenvalue: lambda, iterations })
}

fn matvec(a: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&a[i * n..(i + 1) * n], v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
