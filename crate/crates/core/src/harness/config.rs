use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graphcore::GraphError;
use crate::graphvae::LossWeights;

use super::augment::Augmentation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Segment,
    Vae,
    Partition,
    Match,
    Gridcheck,
}

/// Hyperparameters and file locations of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Reconstruction term weights `λ_A, λ_F, λ_E`.
    pub weights: LossWeights,
    pub kl_weight: f64,
    /// Partition regularization strength.
    pub mu: f64,
    /// Neighborhood radius of point-cloud graphs.
    pub rho: f64,
    /// Voxel resolution.
    pub r: f64,
    /// Neighbors per point for k-NN graphs.
    pub k_nn: usize,
    /// Maximum decoded graph size.
    pub k: usize,
    /// Latent size.
    pub c: usize,
    /// Recurrent propagation steps.
    pub steps: usize,
    /// Clamp gradients into `[-clip, clip]`.
    pub clip: Option<f64>,
    pub augment: Augmentation,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Classify,
            seed: 0,
            lr: 1e-3,
            batch_size: 32,
            epochs: 20,
            weights: LossWeights::default(),
            kl_weight: 1.0,
            mu: 0.05,
            rho: 1.5,
            r: 0.05,
            k_nn: 10,
            k: 9,
            c: 40,
            steps: 10,
            clip: None,
            augment: Augmentation::default(),
            train: None,
            test: None,
            output: None,
            metrics: None,
        }
    }
}

impl RunConfig {
    pub fn new(task: Task) -> Self {
        RunConfig { task, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let positive = [("lr", self.lr), ("rho", self.rho), ("r", self.r)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GraphError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [("mu", self.mu), ("kl_weight", self.kl_weight), ("weights.a", self.weights.a), ("weights.f", self.weights.f), ("weights.e", self.weights.e)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GraphError::Parameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        let counts = [("batch_size", self.batch_size), ("epochs", self.epochs), ("k_nn", self.k_nn), ("k", self.k), ("c", self.c)];
        for (name, v) in counts {
            if v == 0 {
                return Err(GraphError::Parameter(format!("{name} must be positive")));
            }
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(GraphError::Parameter(format!("clip must be positive, got {c}")));
            }
        }
        self.augment.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
