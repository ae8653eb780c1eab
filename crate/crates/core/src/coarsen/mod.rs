//! Multiresolution structures: VoxelGrid subsampling, pooling maps, Graclus
//! matching, Kron reduction with largest-eigenvector splits, pyramids and
//! randomized edge dropping.

mod graclus;
mod kron;
mod pyramid;
mod sparsify;
mod voxel;

pub use graclus::{edge_weights, graclus_coarsen, weighted_graph};
pub use kron::{eigvec_split, kron_reduce, Laplacian, Split, POWER_ITERATIONS, POWER_TOLERANCE};
pub use pyramid::{graph_pyramid, kron_coarsen, voxel_pyramid, CoarsenMethod, Level, Pyramid};
pub use sparsify::random_sparsify;
pub use voxel::{nearest_assign, pool_cloud, pool_signal, voxel_grid, PoolingMap};
