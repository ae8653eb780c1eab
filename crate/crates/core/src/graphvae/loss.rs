use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, TensorError, Var};
use crate::scalar::Scalar;

use super::graph::{DenseGraph, ProbGraph};
use super::matching::Assignment;
use super::model::ProbGraphVars;

type Result<T> = std::result::Result<T, TensorError>;

/// Weights of the adjacency, node and edge terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub a: f64,
    pub f: f64,
    pub e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { a: 1.0, f: 1.0, e: 1.0 }
    }
}

/// Log-likelihood terms and the weighted negative total, as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct ReconVars {
    pub log_pa: Var,
    pub log_pf: Var,
    pub log_pe: Var,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconLoss<T> {
    pub log_pa: T,
    pub log_pf: T,
    pub log_pe: T,
    pub total: T,
}

impl ReconVars {
    pub fn value<T: Scalar>(&self, s: &Tape<T>) -> ReconLoss<T> {
        ReconLoss {
            log_pa: s.value(self.log_pa).item(),
            log_pf: s.value(self.log_pf).item(),
            log_pe: s.value(self.log_pe).item(),
            total: s.value(self.total).item(),
        }
    }
}

/// `A' = X A Xᵀ` with nodes on the diagonal, as a `k×k` tensor.
pub fn mapped_adjacency<T: Scalar>(g: &DenseGraph, x: &Assignment) -> Tensor<T> {
    let k = x.k;
    let mut a = Tensor::zeros(vec![k, k]);
    for &p in &x.perm {
        a.set2(p, p, T::one());
    }
    for &(i, j, _) in &g.edges {
        a.set2(x.perm[i], x.perm[j], T::one());
        a.set2(x.perm[j], x.perm[i], T::one());
    }
    a
}

/// Safe logarithm: probabilities are floored at the smallest positive value.
fn safe_log<T: Scalar>(s: &mut Tape<T>, p: Var) -> Result<Var> {
    let c = s.clamp(p, T::min_positive_value(), T::one());
    s.log(c)
}

/// Averaged cross-entropies between `g` and the decoded graph under the
/// assignment `x`. Unmatched decoded nodes enter only through the adjacency
/// term; a graph without edges has an edge term of zero.
pub fn recon_loglik_var<T: Scalar>(
    s: &mut Tape<T>,
    g: &DenseGraph,
    p: &ProbGraphVars,
    x: &Assignment,
    w: LossWeights,
) -> Result<ReconVars> {
    let k = x.k;
    let n = g.n();
    if x.perm.len() != n || s.value(p.a).shape() != [k, k] {
        return Err(TensorError::Shape { op: "recon_loglik", detail: format!("assignment of {} nodes onto {k}", x.perm.len()) });
    }
    let (d_n, d_e) = (s.value(p.f).cols(), s.value(p.e).cols());
    if d_n != g.d_n || d_e != g.d_e {
        return Err(TensorError::Shape { op: "recon_loglik", detail: "attribute widths differ".into() });
    }

    // Q = A'Ã + (1−A')(1−Ã) = (1−A') + (2A'−1)⊙Ã
    let at = mapped_adjacency::<T>(g, x);
    let off = if k > 1 { T::one() / T::of_usize(k * (k - 1)) } else { T::zero() };
    let diag = T::one() / T::of_usize(k);
    let mut wt = Tensor::full(vec![k, k], off);
    (0..k).for_each(|a| wt.set2(a, a, diag));
    let q0 = s.constant(at.map(|v| T::one() - v));
    let q1 = s.constant(at.map(|v| T::of(2.0) * v - T::one()));
    let sa = s.mul(q1, p.a)?;
    let q = s.add(q0, sa)?;
    let lq = safe_log(s, q)?;
    let wt = s.constant(wt);
    let la = s.mul(lq, wt)?;
    let log_pa = s.sum(la);

    let log_pf = if n == 0 {
        s.constant(Tensor::scalar(T::zero()))
    } else {
        let idx: Vec<usize> = g.node_class.iter().zip(&x.perm).map(|(&c, &a)| a * d_n + c).collect();
        let fv = s.gather_elems(p.f, &idx)?;
        let lf = safe_log(s, fv)?;
        s.mean(lf)
    };

    let log_pe = if g.edges.is_empty() {
        s.constant(Tensor::scalar(T::zero()))
    } else {
        let mut idx = Vec::with_capacity(2 * g.edges.len());
        for &(i, j, c) in &g.edges {
            let (a, b) = (x.perm[i], x.perm[j]);
            idx.push((a * k + b) * d_e + c);
            idx.push((b * k + a) * d_e + c);
        }
        let ev = s.gather_elems(p.e, &idx)?;
        let le = safe_log(s, ev)?;
        s.mean(le)
    };

    let ta = s.scale(log_pa, T::of(-w.a));
    let tf = s.scale(log_pf, T::of(-w.f));
    let te = s.scale(log_pe, T::of(-w.e));
    let t = s.add(ta, tf)?;
    let total = s.add(t, te)?;
    Ok(ReconVars { log_pa, log_pf, log_pe, total })
}

/// Value-only reconstruction likelihood of a fixed probabilistic graph.
pub fn recon_loglik<T: Scalar>(g: &DenseGraph, p: &ProbGraph<T>, x: &Assignment, w: LossWeights) -> Result<ReconLoss<T>> {
    let mut s = Tape::new();
    let vars = ProbGraphVars::constant(&mut s, p);
    Ok(recon_loglik_var(&mut s, g, &vars, x, w)?.value(&s))
}
