use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graphcore::{GraphError, PointCloud};
use crate::scalar::Scalar;

/// A single seeded point-cloud transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Uniform random rotation about the vertical axis.
    RotateUp,
    /// Isotropic scale drawn from `[1 − s, 1 + s]`.
    ScaleJitter(f64),
    /// Mirror `x` with probability one half.
    Mirror,
    /// Delete each point with the given probability.
    DropPoints(f64),
}

/// Transforms applied in order; empty (off) by default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub transforms: Vec<Transform>,
}

impl Augmentation {
    pub fn is_off(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for t in &self.transforms {
            match *t {
                Transform::ScaleJitter(s) if !(0.0..1.0).contains(&s) => {
                    return Err(GraphError::Parameter(format!("scale jitter {s} outside [0, 1)")))
                }
                Transform::DropPoints(p) if !(0.0..1.0).contains(&p) => {
                    return Err(GraphError::Parameter(format!("drop probability {p} outside [0, 1)")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn apply<T: Scalar, R: Rng>(&self, cloud: &PointCloud<T>, rng: &mut R) -> PointCloud<T> {
        self.transforms.iter().fold(cloud.clone(), |c, t| t.apply(&c, rng))
    }
}

impl Transform {
    pub fn apply<T: Scalar, R: Rng>(&self, cloud: &PointCloud<T>, rng: &mut R) -> PointCloud<T> {
        let mut out = cloud.clone();
        match *self {
            Transform::RotateUp => {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (s, c) = (T::of(th.sin()), T::of(th.cos()));
                for p in &mut out.positions {
                    let (x, y) = (p[0], p[1]);
                    p[0] = c * x - s * y;
                    p[1] = s * x + c * y;
                }
            }
            Transform::ScaleJitter(j) => {
                let f = T::of(if j > 0.0 { rng.gen_range(1.0 - j..=1.0 + j) } else { 1.0 });
                out.positions.iter_mut().for_each(|p| p.iter_mut().for_each(|v| *v *= f));
            }
            Transform::Mirror => {
                if rng.gen_bool(0.5) {
                    out.positions.iter_mut().for_each(|p| p[0] = -p[0]);
                }
            }
            Transform::DropPoints(q) => {
                let keep: Vec<usize> = (0..cloud.len()).filter(|_| !rng.gen_bool(q)).collect();
                out = cloud.select(&keep);
            }
        }
        out
    }
}
