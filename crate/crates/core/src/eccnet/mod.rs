//! Edge-conditioned convolutions (ECC, ECC-id, ECC-f), filter-generating
//! networks, the gated recurrent propagation used for superpoint graphs,
//! CRF-style mean-field inference and global pooling.

mod checkpoint;
mod crf;
mod ecc;
mod gru;
mod mlp;
mod pool;

pub use checkpoint::{load_params, params_from_json, params_to_json, save_params, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use crf::CrfEcc;
pub use ecc::{
    batch_graphs, grid_equiv_graph, grid_equiv_graph_2d, linear_filter_matrix, Aggregation, EccFLayer, EccIdLayer,
    EccLayer, EdgeBatch,
};
pub use gru::{GruCell, GruConfig};
pub use mlp::{Activation, Arity, FilterNet, FilterNetConfig, Init, Linear, Mlp, MlpConfig};
pub use pool::{global_pool, GatedPool, PoolMode};
