//! Attributed graphs, point clouds, neighborhood graph construction and
//! attribute encodings.

mod build;
mod cloud;
mod graph;
mod spatial;

use thiserror::Error;

pub use build::{
    add_degree_attrs, knn_graph, knn_lists, offset_attr, one_hot_edges, radius_graph, symmetrize, DegreeVariant,
    OFFSET_ATTR_DIM,
};
pub use cloud::{PointCloud, GEOMETRIC_FEATURES};
pub(crate) use cloud::dist2;
pub use graph::{AttributedGraph, GraphDocument};
pub use spatial::GridIndex;

use crate::diffcore::TensorError;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("reduction error: {0}")]
    Reduction(String),
    #[error("parse error on line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
