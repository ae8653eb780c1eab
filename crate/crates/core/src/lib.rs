//! Graph learning toolkit: edge-conditioned convolutions, multiresolution
//! graph coarsening, superpoint graphs for point-cloud segmentation, and a
//! matching-based variational graph autoencoder.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pin the `f64` instantiation used by the CLI and the tests.
//! Kron reduction additionally accepts exact rationals, see [`Rational`].

pub mod coarsen;
pub mod diffcore;
pub mod eccnet;
pub mod graphcore;
pub mod graphvae;
pub mod harness;
pub mod scalar;
pub mod spg;

pub use scalar::{Field, Scalar};

/// Exact rational type accepted by [`coarsen::kron_reduce`].
pub type Rational = num_rational::Ratio<i64>;

pub type Tensor = diffcore::Tensor<f64>;
pub type TensorF32 = diffcore::Tensor<f32>;
pub type Tape = diffcore::Tape<f64>;
pub type ParamStore = diffcore::ParamStore<f64>;
pub type Session = diffcore::Session<f64>;
pub type AttributedGraph = graphcore::AttributedGraph<f64>;
pub type AttributedGraphF32 = graphcore::AttributedGraph<f32>;
pub type PointCloud = graphcore::PointCloud<f64>;
pub type ProbGraph = graphvae::ProbGraph<f64>;
pub type Laplacian = coarsen::Laplacian<f64>;
pub type LaplacianExact = coarsen::Laplacian<Rational>;
