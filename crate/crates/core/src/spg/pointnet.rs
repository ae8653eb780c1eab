use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Reduce, Session, Tensor, TensorError, Var};
use crate::eccnet::{Activation, Init, Mlp, MlpConfig};
use crate::graphcore::PointCloud;
use crate::scalar::Scalar;

type Result<T> = std::result::Result<T, TensorError>;

pub const SAMPLE_POINTS: usize = 128;
pub const MIN_POINTS: usize = 40;

/// Fixed-size point sample of one superpoint, rescaled into the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpointSample<T> {
    /// Sampled point indices into the cloud (empty when `zero`).
    pub indices: Vec<usize>,
    /// One row per sampled point: normalized position, then geometric
    /// features and observations when the cloud has them.
    pub points: Tensor<T>,
    /// Bounding-box diagonal of the whole superpoint, in cloud units.
    pub diameter: T,
    /// Too few points: the embedding is forced to zero.
    pub zero: bool,
}

/// Row width of [`sample_superpoint`] samples drawn from `cloud`.
pub fn sample_width<T: Scalar>(cloud: &PointCloud<T>) -> usize {
    3 + cloud.features.as_ref().map_or(0, |_| crate::graphcore::GEOMETRIC_FEATURES) + cloud.observation_dim()
}

/// Draws `n_p` points of a superpoint: distinct ones when it is large enough,
/// otherwise every point once plus uniform repeats. Superpoints below `n_minp`
/// points are flagged for a zero embedding.
pub fn sample_superpoint<T: Scalar, R: Rng>(
    cloud: &PointCloud<T>,
    members: &[usize],
    n_p: usize,
    n_minp: usize,
    rng: &mut R,
) -> SuperpointSample<T> {
    let p = &cloud.positions;
    let mut lo = [T::zero(); 3];
    let mut hi = [T::zero(); 3];
    if let Some(&first) = members.first() {
        lo = p[first];
        hi = p[first];
        for &i in members {
            for a in 0..3 {
                lo[a] = lo[a].min(p[i][a]);
                hi[a] = hi[a].max(p[i][a]);
            }
        }
    }
    let diameter = (0..3).map(|a| (hi[a] - lo[a]) * (hi[a] - lo[a])).sum::<T>().sqrt();
    let width = sample_width(cloud);
    if members.len() < n_minp.max(1) {
        return SuperpointSample { indices: Vec::new(), points: Tensor::zeros(vec![n_p, width]), diameter, zero: true };
    }
    let indices: Vec<usize> = if members.len() >= n_p {
        rand::seq::index::sample(rng, members.len(), n_p).into_iter().map(|k| members[k]).collect()
    } else {
        let mut v = members.to_vec();
        v.shuffle(rng);
        while v.len() < n_p {
            v.push(members[rng.gen_range(0..members.len())]);
        }
        v
    };
    let half = diameter / T::of(2.0);
    let scale = if half > T::zero() { half } else { T::one() };
    let centre = [0, 1, 2].map(|a| (lo[a] + hi[a]) / T::of(2.0));
    let mut data = Vec::with_capacity(n_p * width);
    for &i in &indices {
        data.extend((0..3).map(|a| (p[i][a] - centre[a]) / scale));
        if let Some(f) = &cloud.features {
            data.extend_from_slice(&f[i]);
        }
        if let Some(o) = &cloud.observations {
            data.extend_from_slice(&o[i]);
        }
    }
    SuperpointSample { indices, points: Tensor::new(vec![n_p, width], data).expect("sample shape"), diameter, zero: false }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointNetConfig {
    pub in_dim: usize,
    /// Per-point widths before max pooling.
    pub point: Vec<usize>,
    /// Widths after pooling; the last one is the embedding size.
    pub head: Vec<usize>,
    pub stn: bool,
    pub stn_point: Vec<usize>,
    pub stn_head: Vec<usize>,
}

impl PointNetConfig {
    pub fn new(in_dim: usize) -> Self {
        PointNetConfig {
            in_dim,
            point: vec![64, 64, 128, 128, 256],
            head: vec![256, 64, 32],
            stn: true,
            stn_point: vec![64, 64, 128],
            stn_head: vec![128, 64],
        }
    }

    /// Hidden widths divided by `factor`; the embedding size is kept.
    pub fn scaled(mut self, factor: usize) -> Self {
        let f = factor.max(1);
        let shrink = |v: &mut Vec<usize>| v.iter_mut().for_each(|w| *w = (*w / f).max(1));
        shrink(&mut self.point);
        shrink(&mut self.stn_point);
        shrink(&mut self.stn_head);
        let last = self.head.len().saturating_sub(1);
        for w in &mut self.head[..last] {
            *w = (*w / f).max(1);
        }
        self
    }

    pub fn out_dim(&self) -> usize {
        *self.head.last().expect("non-empty head")
    }
}

/// Spatial transformer regressing a 2×2 residual for the XY coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stn {
    pub point: Mlp,
    pub head: Mlp,
}

/// Shallow PointNet embedding a superpoint sample into a vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointNetLite {
    pub stn: Option<Stn>,
    pub point: Mlp,
    pub head: Mlp,
}

fn relu_mlp<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, widths: Vec<usize>, out: Activation) -> Mlp {
    let cfg = MlpConfig { widths, hidden: Activation::Relu, output: out, last_bias: true, init: Init::Glorot, norm_after: None };
    Mlp::new(store, rng, name, &cfg)
}

impl PointNetLite {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, cfg: &PointNetConfig) -> Self {
        let stn = cfg.stn.then(|| {
            let mut pw = vec![cfg.in_dim];
            pw.extend(&cfg.stn_point);
            let pooled = *pw.last().expect("widths");
            let point = relu_mlp(store, rng, &format!("{name}.stn.point"), pw, Activation::Relu);
            let mut hw = vec![pooled];
            hw.extend(&cfg.stn_head);
            hw.push(4);
            let head = relu_mlp(store, rng, &format!("{name}.stn.head"), hw, Activation::Identity);
            // start from the identity transform
            let last = head.layers.last().expect("layers");
            *store.get_mut(last.w) = Tensor::zeros(store.get(last.w).shape().to_vec());
            Stn { point, head }
        });
        let mut pw = vec![cfg.in_dim];
        pw.extend(&cfg.point);
        let pooled = *pw.last().expect("widths");
        let point = relu_mlp(store, rng, &format!("{name}.point"), pw, Activation::Relu);
        let mut hw = vec![pooled + 1];
        hw.extend(&cfg.head);
        let head = relu_mlp(store, rng, &format!("{name}.head"), hw, Activation::Identity);
        PointNetLite { stn, point, head }
    }

    pub fn in_dim(&self) -> usize {
        self.point.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    /// Embeds every sample; rows of flagged samples are zero. Samples may
    /// have different row counts.
    pub fn embed<T: Scalar>(&self, s: &mut Session<T>, samples: &[SuperpointSample<T>]) -> Result<Var> {
        let n_s = samples.len();
        let d = self.in_dim();
        let mut data = Vec::new();
        let mut seg = Vec::new();
        for (k, smp) in samples.iter().enumerate() {
            if smp.points.cols() != d {
                return Err(TensorError::Shape {
                    op: "pointnet_embed",
                    detail: format!("sample width {} != {d}", smp.points.cols()),
                });
            }
            data.extend_from_slice(smp.points.data());
            seg.extend(std::iter::repeat(k).take(smp.points.rows()));
        }
        if let Some(k) = samples.iter().position(|m| m.points.rows() == 0) {
            return Err(TensorError::Shape { op: "pointnet_embed", detail: format!("sample {k} has no points") });
        }
        let x = s.constant(Tensor::new(vec![seg.len(), d], data)?);
        let x = match &self.stn {
            Some(stn) => self.transform(s, stn, x, &seg, n_s)?,
            None => x,
        };
        let h = self.point.forward(s, x)?;
        let pooled = s.segment_reduce(h, &seg, n_s, Reduce::Max)?;
        let diam = s.constant(Tensor::new(vec![n_s, 1], samples.iter().map(|m| m.diameter).collect())?);
        let z = s.concat_cols(&[pooled, diam])?;
        let z = self.head.forward(s, z)?;
        let mask = s.constant(Tensor::vector(samples.iter().map(|m| if m.zero { T::zero() } else { T::one() }).collect()));
        s.mul_col(z, mask)
    }

    /// Applies `(I + Φ)` per sample to the XY columns.
    fn transform<T: Scalar>(&self, s: &mut Session<T>, stn: &Stn, x: Var, seg: &[usize], n_s: usize) -> Result<Var> {
        let h = stn.point.forward(s, x)?;
        let pooled = s.segment_reduce(h, seg, n_s, Reduce::Max)?;
        let phi = stn.head.forward(s, pooled)?;
        let eye = s.constant(Tensor::vector(vec![T::one(), T::zero(), T::zero(), T::one()]));
        let t = s.add_row(phi, eye)?;
        let t = s.gather_rows(t, seg)?;
        let px = s.slice_cols(x, 0, 1)?;
        let py = s.slice_cols(x, 1, 1)?;
        let entry = |s: &mut Session<T>, c| s.slice_cols(t, c, 1);
        let (t00, t01, t10, t11) = (entry(s, 0)?, entry(s, 1)?, entry(s, 2)?, entry(s, 3)?);
        let a = s.mul(px, t00)?;
        let b = s.mul(py, t10)?;
        let nx = s.add(a, b)?;
        let a = s.mul(px, t01)?;
        let b = s.mul(py, t11)?;
        let ny = s.add(a, b)?;
        let rest = s.value(x).cols() - 2;
        let tail = s.slice_cols(x, 2, rest)?;
        s.concat_cols(&[nx, ny, tail])
    }
}
