use rand::Rng;

use crate::diffcore::{Session, Tensor, TensorError, Var};
use crate::graphcore::AttributedGraph;
use crate::scalar::Scalar;

use super::graph::DenseGraph;
use super::loss::{recon_loglik_var, LossWeights, ReconLoss};
use super::matching::{match_graphs, Assignment};
use super::model::{kl_normal_var, GraphVae};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboOptions {
    pub weights: LossWeights,
    /// Multiplier of the KL term.
    pub kl_weight: f64,
    /// Decode the posterior mean instead of a sample (plain autoencoder).
    pub deterministic: bool,
    pub mpm_iters: usize,
}

impl Default for ElboOptions {
    fn default() -> Self {
        ElboOptions { weights: LossWeights::default(), kl_weight: 1.0, deterministic: false, mpm_iters: super::matching::MPM_ITERS }
    }
}

/// Batch-averaged loss on the tape together with per-graph diagnostics.
#[derive(Clone, Debug)]
pub struct ElboVars<T> {
    pub recon: Var,
    pub kl: Var,
    pub total: Var,
    pub terms: Vec<ReconLoss<T>>,
    pub assignments: Vec<Assignment>,
}

/// Single-sample reconstruction loss plus the weighted KL term, averaged
/// over the batch. Assignments are computed on values and held fixed.
pub fn elbo_batch<T: Scalar, R: Rng>(
    vae: &GraphVae,
    s: &mut Session<T>,
    graphs: &[&DenseGraph],
    ys: Option<&[Vec<T>]>,
    opts: &ElboOptions,
    rng: &mut R,
) -> Result<ElboVars<T>> {
    let b = graphs.len();
    if b == 0 {
        return Err(TensorError::Shape { op: "elbo", detail: "empty batch".into() });
    }
    let attributed: Vec<AttributedGraph<T>> = graphs.iter().map(|g| g.to_attributed()).collect();
    let refs: Vec<&AttributedGraph<T>> = attributed.iter().collect();
    let (mu, log_sigma) = vae.encoder.forward(s, &refs, ys)?;
    let z = if opts.deterministic {
        mu
    } else {
        let eps = super::model::standard_normal(rng, b, vae.config.c);
        super::model::Encoder::reparameterize(s, mu, log_sigma, eps)?
    };
    let input = match ys {
        Some(ys) => {
            let y = s.constant(Tensor::from_rows(ys)?);
            s.concat_cols(&[z, y])?
        }
        None => z,
    };
    let decoded = vae.decoder.forward(s, input)?;
    let k = vae.config.k;
    let mut recon_terms = Vec::with_capacity(b);
    let mut terms = Vec::with_capacity(b);
    let mut assignments = Vec::with_capacity(b);
    for (g, p) in graphs.iter().zip(&decoded) {
        let pv = p.value(s, k);
        let x = match_graphs(g, &pv, opts.mpm_iters).map_err(|e| TensorError::Domain { op: "elbo", detail: e.to_string() })?;
        let r = recon_loglik_var(s, g, p, &x, opts.weights)?;
        terms.push(r.value(s));
        recon_terms.push(r.total);
        assignments.push(x);
    }
    let mut acc = recon_terms[0];
    for &v in &recon_terms[1..] {
        acc = s.add(acc, v)?;
    }
    let recon = s.scale(acc, T::one() / T::of_usize(b));
    let kl = kl_normal_var(s, mu, log_sigma)?;
    let kl = s.scale(kl, T::one() / T::of_usize(b));
    let total = if opts.kl_weight == 0.0 {
        recon
    } else {
        let w = s.scale(kl, T::of(opts.kl_weight));
        s.add(recon, w)?
    };
    Ok(ElboVars { recon, kl, total, terms, assignments })
}
