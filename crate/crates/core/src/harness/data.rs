use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graphcore::{GraphError, PointCloud};
use crate::scalar::Scalar;

/// Class ids of [`synthetic_scene`].
pub const SCENE_CLASSES: [&str; 4] = ["ground", "wall", "roof", "pole"];

/// A toy outdoor scene: a ground plane, a vertical wall, a raised flat roof
/// and a vertical pole, with isotropic Gaussian noise of standard deviation
/// `noise`. Labels follow [`SCENE_CLASSES`].
pub fn synthetic_scene<T: Scalar, R: Rng>(n: usize, noise: f64, rng: &mut R) -> PointCloud<T> {
    let shares = [0.4, 0.25, 0.2, 0.15];
    let mut counts: Vec<usize> = shares.iter().map(|s| (s * n as f64) as usize).collect();
    counts[0] += n - counts.iter().sum::<usize>();
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("noise");
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (class, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let p: [f64; 3] = match class {
                0 => [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0), 0.0],
                1 => [4.0, rng.gen_range(0.0..4.0), rng.gen_range(0.0..2.0)],
                2 => [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), 1.5],
                _ => [3.0, 3.0, rng.gen_range(0.0..2.5)],
            };
            pts.push(p.map(|v| T::of(v + jitter.sample(rng))));
            labels.push(class);
        }
    }
    let mut cloud = PointCloud::new(pts).expect("finite scene");
    cloud.labels = Some(labels);
    cloud
}

/// A grayscale image with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct Digit {
    /// Row-major intensities scaled into `[0, 1]`.
    pub pixels: Vec<f64>,
    pub label: usize,
}

/// Maximum raw intensity of the 8×8 digits files.
pub const DIGIT_LEVELS: f64 = 16.0;

/// Reads a CSV with a header, a `label` column followed by `side²` raw
/// intensities in `0..=16`.
pub fn load_digits(path: &Path, side: usize) -> Result<Vec<Digit>, GraphError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| GraphError::Parse { line: 0, detail: e.to_string() })?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| GraphError::Parse { line, detail: e.to_string() })?;
        if rec.len() != side * side + 1 {
            return Err(GraphError::Parse { line, detail: format!("expected {} columns, got {}", side * side + 1, rec.len()) });
        }
        let label = rec[0].trim().parse().map_err(|e| GraphError::Parse { line, detail: format!("label: {e}") })?;
        let pixels = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map(|x| x / DIGIT_LEVELS))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GraphError::Parse { line, detail: e.to_string() })?;
        out.push(Digit { pixels, label });
    }
    Ok(out)
}
