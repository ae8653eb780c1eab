//! Graph variational autoencoder: ECC encoder with a Gaussian posterior, an
//! MLP decoder emitting probabilistic graphs on `k` nodes, a reconstruction
//! likelihood made permutation-free by max-pooling graph matching, and
//! sampling with molecule-quality metrics.

mod discrete;
mod elbo;
mod graph;
mod loss;
mod matching;
mod model;
mod synth;

pub use discrete::{
    canonical_form, canonical_set, implicit_node_probs, label_metrics, molecule_valid, point_estimate, sample_graphs,
    sample_metrics, valence_valid, CanonicalForm, GraphSource, SampleMetrics, SamplingConfig, TrainedDecoder,
    CANONICAL_NODE_BOUND, VALENCE_TOLERANCE,
};
pub use elbo::{elbo_batch, ElboOptions, ElboVars};
pub use graph::{valence, Alphabet, DenseGraph, Molecule, ProbGraph};
pub use loss::{mapped_adjacency, recon_loglik, recon_loglik_var, LossWeights, ReconLoss, ReconVars};
pub use matching::{hungarian, match_graphs, mpm_match, similarity, Assignment, Similarity, MPM_ITERS};
pub use model::{
    kl_normal, kl_normal_var, standard_normal, tri_index, Decoder, Encoder, GraphVae, LatentCode, Posterior,
    ProbGraphVars, VaeConfig,
};
pub use synth::{matching_benchmark, match_accuracy, noisy_prob_graph, random_molecule, self_match_accuracy, MatchAccuracy, NoiseLevels};
