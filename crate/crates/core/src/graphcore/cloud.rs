use std::io::{BufRead, Write};
use std::path::Path;

use crate::scalar::Scalar;

use super::GraphError;

/// Number of per-point geometric features (linearity, planarity, scattering,
/// verticality, elevation).
pub const GEOMETRIC_FEATURES: usize = 5;

/// 3D point cloud with optional observations, geometric features and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    pub positions: Vec<[T; 3]>,
    /// Per-point observation rows (RGB in 0..1, intensity), all of equal width.
    pub observations: Option<Vec<Vec<T>>>,
    pub features: Option<Vec<[T; GEOMETRIC_FEATURES]>>,
    pub labels: Option<Vec<usize>>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(positions: Vec<[T; 3]>) -> Result<Self, GraphError> {
        let c = PointCloud { positions, observations: None, features: None, labels: None };
        c.validate()?;
        Ok(c)
    }

    pub fn from_f64(points: &[[f64; 3]]) -> Result<Self, GraphError> {
        Self::new(points.iter().map(|p| [T::of(p[0]), T::of(p[1]), T::of(p[2])]).collect())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn observation_dim(&self) -> usize {
        self.observations.as_ref().and_then(|o| o.first()).map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GraphError::Invalid("non-finite coordinate".into()));
        }
        if let Some(o) = &self.observations {
            if o.len() != self.len() {
                return Err(GraphError::Invalid(format!("{} observation rows for {} points", o.len(), self.len())));
            }
            let w = self.observation_dim();
            if o.iter().any(|r| r.len() != w) {
                return Err(GraphError::Invalid("ragged observations".into()));
            }
        }
        if let Some(f) = &self.features {
            if f.len() != self.len() {
                return Err(GraphError::Invalid("feature row count".into()));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.len() {
                return Err(GraphError::Invalid("label count".into()));
            }
        }
        Ok(())
    }

    /// Points at `idx`, carrying observations, features and labels along.
    pub fn select(&self, idx: &[usize]) -> Self {
        PointCloud {
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            observations: self.observations.as_ref().map(|o| idx.iter().map(|&i| o[i].clone()).collect()),
            features: self.features.as_ref().map(|f| idx.iter().map(|&i| f[i]).collect()),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn bounds(&self) -> Option<([T; 3], [T; 3])> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(mut lo, mut hi), p| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            (lo, hi)
        }))
    }

    /// Reads the whitespace-separated text format. A `#fields` header names
    /// the columns (`x y z` required; `r g b`, `intensity`, `label` optional);
    /// without a header the columns are `x y z`.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut fields: Vec<String> = vec!["x".into(), "y".into(), "z".into()];
        let mut positions = Vec::new();
        let mut obs = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix("#fields") {
                fields = rest.split_whitespace().map(str::to_lowercase).collect();
                for req in ["x", "y", "z"] {
                    if !fields.iter().any(|f| f == req) {
                        return Err(GraphError::Parse { line: lineno + 1, detail: format!("missing field {req}") });
                    }
                }
                continue;
            }
            if t.starts_with('#') {
                continue;
            }
            let vals: Vec<&str> = t.split_whitespace().collect();
            if vals.len() != fields.len() {
                return Err(GraphError::Parse {
                    line: lineno + 1,
                    detail: format!("expected {} columns, got {}", fields.len(), vals.len()),
                });
            }
            let mut p = [T::zero(); 3];
            let mut o = Vec::new();
            for (f, v) in fields.iter().zip(&vals) {
                let parse = || -> Result<f64, GraphError> {
                    v.parse::<f64>().map_err(|e| GraphError::Parse { line: lineno + 1, detail: format!("{f}: {e}") })
                };
                match f.as_str() {
                    "x" => p[0] = T::of(parse()?),
                    "y" => p[1] = T::of(parse()?),
                    "z" => p[2] = T::of(parse()?),
                    "label" => {
                        labels.push(v.parse::<usize>().map_err(|e| GraphError::Parse {
                            line: lineno + 1,
                            detail: format!("label: {e}"),
                        })?)
                    }
                    _ => o.push(T::of(parse()?)),
                }
            }
            positions.push(p);
            obs.push(o);
        }
        let has_obs = fields.iter().any(|f| !matches!(f.as_str(), "x" | "y" | "z" | "label"));
        let has_labels = fields.iter().any(|f| f == "label");
        let cloud = PointCloud {
            positions,
            observations: has_obs.then_some(obs),
            features: None,
            labels: has_labels.then_some(labels),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Writes the text format; observation columns are named `r g b` when
    /// there are three, `intensity` when one, and `o0 o1 ...` otherwise.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        let od = self.observation_dim();
        let mut header = vec!["x", "y", "z"].into_iter().map(String::from).collect::<Vec<_>>();
        match od {
            0 => {}
            1 => header.push("intensity".into()),
            3 => header.extend(["r", "g", "b"].map(String::from)),
            _ => header.extend((0..od).map(|k| format!("o{k}"))),
        }
        if self.labels.is_some() {
            header.push("label".into());
        }
        writeln!(w, "#fields {}", header.join(" "))?;
        for (i, p) in self.positions.iter().enumerate() {
            let mut cols: Vec<String> = p.iter().map(|v| format!("{}", v.as_f64())).collect();
            if let Some(o) = &self.observations {
                cols.extend(o[i].iter().map(|v| format!("{}", v.as_f64())));
            }
            if let Some(l) = &self.labels {
                cols.push(l[i].to_string());
            }
            writeln!(w, "{}", cols.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }
}

pub(crate) fn sub3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm3<T: Scalar>(a: &[T; 3]) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn dist2<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let d = sub3(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}
