//! Datasets, optimizers, training loops and the command-line driver.

mod augment;
pub mod cli;
mod config;
mod data;
mod metrics;
mod optim;
mod sampling;
mod train;

pub use augment::{Augmentation, Transform};
pub use config::{RunConfig, Task};
pub use data::{load_digits, synthetic_scene, Digit, DIGIT_LEVELS, SCENE_CLASSES};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter};
pub use optim::{clip_gradients, sgd_step, Adam, AdamConfig, Sgd, StepSchedule};
pub use sampling::{subgraph_nodes, subgraph_sample, SUBGRAPH_HOPS, SUBGRAPH_MAX_NODES};
pub use train::{
    cross_entropy, grid_check, train_classifier, train_segmenter, train_vae, GridBatch, GridClassifier, Scene,
    SpgSegmenter, TrainOptions, VaeTrainOptions,
};
