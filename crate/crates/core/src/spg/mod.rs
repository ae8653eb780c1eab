//! Superpoint graphs for large point clouds: geometric features, ℓ0 cut
//! pursuit partitioning, superedge attributes and a small PointNet embedder.

mod cutpursuit;
mod features;
mod maxflow;
mod pipeline;
mod pointnet;
mod superpoint;

pub use cutpursuit::{cut_pursuit_l0, inverse_length_weights, Partition, LENGTH_EPS, SPLIT_ROUNDS};
pub use features::{covariance, geometric_features, shape_features, sym_eigen3, GeometricFeatures, FEATURE_KNN};
pub use maxflow::FlowGraph;
pub use pipeline::{partition_cloud, Partitioned};
pub use pointnet::{
    sample_superpoint, sample_width, PointNetConfig, PointNetLite, Stn, SuperpointSample, MIN_POINTS, SAMPLE_POINTS,
};
pub use superpoint::{build_spg, superedge_attrs, superpoints, Superpoint, SuperpointGraph, SHAPE_EPS, SUPEREDGE_ATTRS};
