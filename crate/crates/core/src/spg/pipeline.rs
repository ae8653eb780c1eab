use crate::diffcore::Tensor;
use crate::graphcore::{knn_graph, symmetrize, AttributedGraph, GraphError, PointCloud, GEOMETRIC_FEATURES};
use crate::scalar::Scalar;

use super::cutpursuit::{cut_pursuit_l0, inverse_length_weights, Partition};
use super::features::{geometric_features, FEATURE_KNN};

/// Output of [`partition_cloud`]: the cloud with its features filled in, the
/// symmetric neighbor graph and the partition.
pub struct Partitioned<T> {
    pub cloud: PointCloud<T>,
    pub graph: AttributedGraph<T>,
    pub partition: Partition<T>,
}

/// Geometric features, symmetrized k-NN graph and cut pursuit with
/// inverse-length edge weights. Observations, when present, are appended to
/// the partition features.
pub fn partition_cloud<T: Scalar>(cloud: &PointCloud<T>, k_nn: usize, mu: T) -> Result<Partitioned<T>, GraphError> {
    let feats = geometric_features(cloud, FEATURE_KNN.min(cloud.len().saturating_sub(1)))?;
    let mut cloud = cloud.clone();
    cloud.features = Some(feats.rows);
    let graph = symmetrize(&knn_graph(&cloud, k_nn)?, &cloud);
    let alpha = inverse_length_weights(&graph, &cloud);
    let od = cloud.observation_dim();
    let mut data = Vec::with_capacity(cloud.len() * (GEOMETRIC_FEATURES + od));
    for i in 0..cloud.len() {
        data.extend_from_slice(&cloud.features.as_ref().expect("features")[i]);
        if let Some(o) = &cloud.observations {
            data.extend_from_slice(&o[i]);
        }
    }
    let f = Tensor::new(vec![cloud.len(), GEOMETRIC_FEATURES + od], data)?;
    let partition = cut_pursuit_l0(&graph, &f, mu, &alpha)?;
    Ok(Partitioned { cloud, graph, partition })
}
