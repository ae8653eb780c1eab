use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::diffcore::{ParamStore, Reduce, Session, Tape, Tensor, TensorError, Var};
use crate::eccnet::{
    batch_graphs, grid_equiv_graph, grid_equiv_graph_2d, linear_filter_matrix, Activation, Aggregation, EccLayer,
    EdgeBatch, FilterNetConfig, GruCell, GruConfig, Init, Linear,
};
use crate::graphcore::{GraphError, PointCloud};
use crate::graphvae::{elbo_batch, DenseGraph, ElboOptions, GraphVae};
use crate::spg::{
    build_spg, partition_cloud, sample_superpoint, sample_width, PointNetConfig, PointNetLite, SuperpointGraph, MIN_POINTS,
    SAMPLE_POINTS, SUPEREDGE_ATTRS,
};

use super::data::Digit;
use super::metrics::MetricsRow;
use super::optim::{clip_gradients, Adam, AdamConfig};

type Result<T> = std::result::Result<T, GraphError>;

/// `−mean_i log softmax(logits_i)[label_i]`.
pub fn cross_entropy(s: &mut Tape<f64>, logits: Var, labels: &[usize]) -> std::result::Result<Var, TensorError> {
    let c = s.value(logits).cols();
    let ls = s.log_softmax(logits);
    let idx: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| i * c + l).collect();
    let picked = s.gather_elems(ls, &idx)?;
    let m = s.mean(picked);
    Ok(s.scale(m, -1.0))
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

/// Cached edge batches and pooling maps for `b` images on an `h × w` grid.
pub struct GridBatch {
    pub b: usize,
    fine: EdgeBatch<f64>,
    pool1: Vec<usize>,
    coarse: EdgeBatch<f64>,
    pool2: Vec<usize>,
}

/// 2×2 max-pooling map of `b` stacked `h × w` grids.
fn pool_map(h: usize, w: usize, b: usize) -> Vec<usize> {
    let (ph, pw) = (h / 2, w / 2);
    let mut m = Vec::with_capacity(b * h * w);
    for g in 0..b {
        for y in 0..h {
            for x in 0..w {
                m.push(g * ph * pw + (y / 2) * pw + x / 2);
            }
        }
    }
    m
}

/// Radius-1.5 neighborhoods of a pixel grid, with the offset as a one-hot
/// edge attribute, repeated for `b` images.
fn grid_batch(h: usize, w: usize, b: usize) -> Result<EdgeBatch<f64>> {
    let g = grid_equiv_graph_2d::<f64>(h, w, 3, 3)?;
    let copies: Vec<_> = std::iter::repeat(&g).take(b).collect();
    let (batched, _) = batch_graphs(&copies)?;
    Ok(EdgeBatch::new(&batched, true))
}

impl GridBatch {
    pub fn new(h: usize, w: usize, b: usize) -> Result<Self> {
        Ok(GridBatch {
            b,
            fine: grid_batch(h, w, b)?,
            pool1: pool_map(h, w, b),
            coarse: grid_batch(h / 2, w / 2, b)?,
            pool2: pool_map(h / 2, w / 2, b),
        })
    }
}

/// Two ECC layers with linear filters on one-hot offsets, each followed by
/// 2×2 max pooling, then a linear classifier over the flattened map.
pub struct GridClassifier {
    pub h: usize,
    pub w: usize,
    pub conv1: EccLayer,
    pub conv2: EccLayer,
    pub fc: Linear,
}

impl GridClassifier {
    pub fn new<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, side: usize, widths: [usize; 2], classes: usize) -> Result<Self> {
        if side % 4 != 0 || side < 4 {
            return Err(GraphError::Parameter(format!("image side {side} must be a positive multiple of 4")));
        }
        let lin = FilterNetConfig::linear();
        let conv1 = EccLayer::new(store, rng, "cls.conv1", 9, 1, widths[0], &lin, true);
        let conv2 = EccLayer::new(store, rng, "cls.conv2", 9, widths[0], widths[1], &lin, true);
        let flat = (side / 4) * (side / 4) * widths[1];
        let fc = Linear::new(store, rng, "cls.fc", flat, classes, true, Init::Glorot);
        Ok(GridClassifier { h: side, w: side, conv1, conv2, fc })
    }

    pub fn batch(&self, b: usize) -> Result<GridBatch> {
        GridBatch::new(self.h, self.w, b)
    }

    /// `x` holds the stacked pixels as a `(b·h·w) × 1` column.
    pub fn logits(&self, s: &mut Session<f64>, gb: &GridBatch, x: Var) -> std::result::Result<Var, TensorError> {
        let (h, w) = (self.h, self.w);
        let a = self.conv1.forward(s, &gb.fine, x)?;
        let a = s.segment_reduce(a, &gb.pool1, gb.b * h * w / 4, Reduce::Max)?;
        let a = self.conv2.forward(s, &gb.coarse, a)?;
        let a = s.segment_reduce(a, &gb.pool2, gb.b * h * w / 16, Reduce::Max)?;
        let a = s.reshape(a, vec![gb.b, h * w / 16 * self.conv2.dout])?;
        self.fc.forward(s, a)
    }

    fn input(&self, s: &mut Session<f64>, items: &[&Digit]) -> std::result::Result<Var, TensorError> {
        let data: Vec<f64> = items.iter().flat_map(|d| d.pixels.iter().copied()).collect();
        Ok(s.constant(Tensor::new(vec![items.len() * self.h * self.w, 1], data)?))
    }

    pub fn accuracy(&self, store: &ParamStore<f64>, data: &[Digit], batch: usize) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for chunk in data.chunks(batch.max(1)) {
            let gb = self.batch(chunk.len())?;
            let mut s = Session::frozen(store);
            let refs: Vec<&Digit> = chunk.iter().collect();
            let x = self.input(&mut s, &refs)?;
            let y = self.logits(&mut s, &gb, x)?;
            let v = s.value(y);
            hits += chunk.iter().enumerate().filter(|(i, d)| argmax(v.row(*i)) == d.label).count();
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub batch: usize,
    pub epochs: usize,
    pub clip: Option<f64>,
}

/// Trains a [`GridClassifier`] with Adam and reports test accuracy after
/// every epoch.
pub fn train_classifier<R: Rng>(
    train: &[Digit],
    test: &[Digit],
    side: usize,
    classes: usize,
    opts: &TrainOptions,
    rng: &mut R,
    on_row: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<f64> {
    if let Some(d) = train.iter().chain(test).find(|d| d.pixels.len() != side * side || d.label >= classes) {
        return Err(GraphError::Invalid(format!("image with {} pixels and label {}", d.pixels.len(), d.label)));
    }
    let mut store = ParamStore::new();
    let net = GridClassifier::new(&mut store, rng, side, [16, 32], classes)?;
    let mut adam = Adam::new(&store, opts.adam);
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cache: Option<GridBatch> = None;
    let mut acc = 0.0;
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch.max(1)) {
            if cache.as_ref().is_none_or(|c| c.b != chunk.len()) {
                cache = Some(net.batch(chunk.len())?);
            }
            let gb = cache.as_ref().expect("cached batch");
            let items: Vec<&Digit> = chunk.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = items.iter().map(|d| d.label).collect();
            let mut s = Session::new(&store);
            let x = net.input(&mut s, &items)?;
            let y = net.logits(&mut s, gb, x)?;
            let loss = cross_entropy(&mut s, y, &labels)?;
            total += s.value(loss).item() * chunk.len() as f64;
            let mut g = s.param_grads(&store, loss)?;
            if let Some(c) = opts.clip {
                clip_gradients(&mut g, c);
            }
            adam.step_store(&mut store, &g)?;
        }
        acc = net.accuracy(&store, test, 100)?;
        on_row(&MetricsRow {
            epoch,
            loss: Some(total / train.len().max(1) as f64),
            accuracy: Some(acc),
            wall_time: start.elapsed().as_secs_f64(),
            ..Default::default()
        })?;
    }
    Ok(acc)
}

/// A labelled cloud cut into superpoints, with the majority label of each.
pub struct Scene {
    pub cloud: PointCloud<f64>,
    pub spg: SuperpointGraph<f64>,
    pub labels: Vec<usize>,
    pub sp_labels: Vec<usize>,
    eb: EdgeBatch<f64>,
}

impl Scene {
    pub fn new(cloud: &PointCloud<f64>, k_nn: usize, mu: f64, classes: usize) -> Result<Self> {
        let labels = cloud.labels.clone().ok_or_else(|| GraphError::Invalid("scene has no labels".into()))?;
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(GraphError::Invalid(format!("label {l} outside {classes} classes")));
        }
        let p = partition_cloud(cloud, k_nn, mu)?;
        let spg = build_spg(&p.partition, &p.graph, &p.cloud)?;
        let sp_labels = spg
            .superpoints
            .iter()
            .map(|sp| {
                let mut count = vec![0usize; classes];
                sp.members.iter().for_each(|&i| count[labels[i]] += 1);
                (0..classes).fold(0, |b, c| if count[c] > count[b] { c } else { b })
            })
            .collect();
        let eb = EdgeBatch::new(&spg.graph, false);
        Ok(Scene { cloud: p.cloud, spg, labels, sp_labels, eb })
    }

    /// Share of points whose superpoint majority label is their own.
    pub fn purity(&self) -> f64 {
        self.point_accuracy(&self.sp_labels)
    }

    /// Share of points whose superpoint prediction matches their label.
    pub fn point_accuracy(&self, sp_pred: &[usize]) -> f64 {
        let hits: usize =
            self.spg.superpoints.iter().zip(sp_pred).map(|(sp, &p)| sp.members.iter().filter(|&&i| self.labels[i] == p).count()).sum();
        hits as f64 / self.labels.len().max(1) as f64
    }
}

/// PointNet embeddings refined by gated recurrent propagation over the
/// superpoint graph.
pub struct SpgSegmenter {
    pub pointnet: PointNetLite,
    pub gru: GruCell,
}

impl SpgSegmenter {
    pub fn new<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, in_dim: usize, classes: usize, steps: usize) -> Self {
        let pcfg = PointNetConfig::new(in_dim).scaled(4);
        let pointnet = PointNetLite::new(store, rng, "seg.pn", &pcfg);
        let gru = GruCell::new(store, rng, "seg.gru", GruConfig::new(pcfg.out_dim(), SUPEREDGE_ATTRS, classes, steps));
        SpgSegmenter { pointnet, gru }
    }

    pub fn logits<R: Rng>(&self, s: &mut Session<f64>, scene: &Scene, rng: &mut R) -> std::result::Result<Var, TensorError> {
        let samples: Vec<_> = scene
            .spg
            .superpoints
            .iter()
            .map(|sp| sample_superpoint(&scene.cloud, &sp.members, SAMPLE_POINTS, MIN_POINTS, rng))
            .collect();
        let z = self.pointnet.embed(s, &samples)?;
        self.gru.forward(s, &scene.eb, z)
    }

    pub fn predict<R: Rng>(&self, store: &ParamStore<f64>, scene: &Scene, rng: &mut R) -> Result<Vec<usize>> {
        let mut s = Session::frozen(store);
        let y = self.logits(&mut s, scene, rng)?;
        let v = s.value(y);
        Ok((0..v.rows()).map(|i| argmax(v.row(i))).collect())
    }
}

/// Trains an [`SpgSegmenter`] one scene at a time and reports the mean
/// point accuracy on `test` after every epoch.
pub fn train_segmenter<R: Rng>(
    train: &[Scene],
    test: &[Scene],
    classes: usize,
    steps: usize,
    opts: &TrainOptions,
    rng: &mut R,
    on_row: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<f64> {
    let mut store = ParamStore::new();
    let Some(first) = train.first() else {
        return Err(GraphError::Invalid("no training scenes".into()));
    };
    let net = SpgSegmenter::new(&mut store, rng, sample_width(&first.cloud), classes, steps);
    let mut adam = Adam::new(&store, opts.adam);
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut acc = 0.0;
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for &i in &order {
            let mut s = Session::new(&store);
            let y = net.logits(&mut s, &train[i], rng)?;
            let loss = cross_entropy(&mut s, y, &train[i].sp_labels)?;
            total += s.value(loss).item();
            let mut g = s.param_grads(&store, loss)?;
            if let Some(c) = opts.clip {
                clip_gradients(&mut g, c);
            }
            adam.step_store(&mut store, &g)?;
        }
        let mut sum = 0.0;
        for sc in test {
            sum += sc.point_accuracy(&net.predict(&store, sc, rng)?);
        }
        acc = sum / test.len().max(1) as f64;
        on_row(&MetricsRow {
            epoch,
            loss: Some(total / train.len().max(1) as f64),
            accuracy: Some(acc),
            wall_time: start.elapsed().as_secs_f64(),
            ..Default::default()
        })?;
    }
    Ok(acc)
}

#[derive(Clone, Debug)]
pub struct VaeTrainOptions {
    pub adam: AdamConfig,
    pub elbo: ElboOptions,
    pub batch: usize,
    pub steps: usize,
    /// Stop once the batch reconstruction loss falls below this value.
    pub target: Option<f64>,
    pub clip: Option<f64>,
}

/// Adam on the ELBO over shuffled minibatches. Returns the reconstruction
/// loss of every step, measured before its update.
pub fn train_vae<R: Rng>(
    vae: &GraphVae,
    store: &mut ParamStore<f64>,
    data: &[DenseGraph],
    opts: &VaeTrainOptions,
    rng: &mut R,
    on_row: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(GraphError::Invalid("empty training set".into()));
    }
    let mut adam = Adam::new(store, opts.adam);
    let start = Instant::now();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(opts.steps);
    let batch = opts.batch.clamp(1, data.len());
    let mut cursor = data.len();
    for step in 0..opts.steps {
        if cursor + batch > data.len() {
            if batch < data.len() {
                order.shuffle(rng);
            }
            cursor = 0;
        }
        let refs: Vec<&DenseGraph> = order[cursor..cursor + batch].iter().map(|&i| &data[i]).collect();
        cursor += batch;
        let mut s = Session::new(store);
        let out = elbo_batch(vae, &mut s, &refs, None, &opts.elbo, rng)?;
        let recon = s.value(out.recon).item();
        history.push(recon);
        on_row(&MetricsRow {
            epoch: step,
            loss: Some(s.value(out.total).item()),
            recon: Some(recon),
            kl: Some(s.value(out.kl).item()),
            wall_time: start.elapsed().as_secs_f64(),
            ..Default::default()
        })?;
        if opts.target.is_some_and(|t| recon < t) {
            break;
        }
        let mut g = s.param_grads(store, out.total)?;
        if let Some(c) = opts.clip {
            clip_gradients(&mut g, c);
        }
        adam.step_store(store, &g)?;
    }
    Ok(history)
}

/// Direct zero-padded correlation `out_i = Σ_d W_d x_{i+d}` on a grid.
fn grid_correlation(x: &Tensor<f64>, w: &[Vec<Vec<f64>>], h: usize, wd: usize, kh: usize, kw: usize) -> Vec<f64> {
    let (din, dout) = (x.cols(), w[0].len());
    let mut out = vec![0.0; h * wd * dout];
    for y in 0..h as i64 {
        for xx in 0..wd as i64 {
            let i = (y * wd as i64 + xx) as usize;
            for dy in -(kh as i64 / 2)..=kh as i64 / 2 {
                for dx in -(kw as i64 / 2)..=kw as i64 / 2 {
                    let (sy, sx) = (y + dy, xx + dx);
                    if sy < 0 || sx < 0 || sy >= h as i64 || sx >= wd as i64 {
                        continue;
                    }
                    let j = (sy * wd as i64 + sx) as usize;
                    let class = ((dy + kh as i64 / 2) * kw as i64 + dx + kw as i64 / 2) as usize;
                    for o in 0..dout {
                        out[i * dout + o] += (0..din).map(|c| w[class][o][c] * x.get2(j, c)).sum::<f64>();
                    }
                }
            }
        }
    }
    out
}

/// Maximum absolute deviation between sum-aggregated ECC on one-hot offset
/// graphs and direct convolution, over `trials` random 1D (`n = 32`,
/// kernels 3 and 5) and 2D (8×8, 3×3) instances.
pub fn grid_check<R: Rng>(trials: usize, rng: &mut R) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let (h, w, kh, kw) = match t % 3 {
            0 => (1, 32, 1, 3),
            1 => (1, 32, 1, 5),
            _ => (8, 8, 3, 3),
        };
        let g = if h == 1 { grid_equiv_graph::<f64>(w, kw)? } else { grid_equiv_graph_2d::<f64>(h, w, kh, kw)? };
        let (din, dout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let mut store = ParamStore::new();
        let layer = EccLayer::new(&mut store, rng, "grid", kh * kw, din, dout, &FilterNetConfig::linear(), false)
            .with_aggregation(Aggregation::Sum)
            .with_activation(Activation::Identity);
        let x = Tensor::new(vec![h * w, din], (0..h * w * din).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let eb = EdgeBatch::new(&g, true);
        let mut s = Session::frozen(&store);
        let xv = s.constant(x.clone());
        let y = layer.forward(&mut s, &eb, xv)?;
        let filters: Vec<_> = (0..kh * kw).map(|c| linear_filter_matrix(&store, &layer, c)).collect();
        let direct = grid_correlation(&x, &filters, h, w, kh, kw);
        for (a, b) in s.value(y).data().iter().zip(&direct) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
