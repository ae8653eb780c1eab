//! `grapht` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation failure, 64 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::ParamStore;
use crate::eccnet::{params_from_json, params_to_json};
use crate::graphcore::{GraphError, PointCloud};
use crate::graphvae::{
    canonical_set, label_metrics, match_accuracy, match_graphs, random_molecule, sample_graphs, Alphabet,
    DenseGraph, ElboOptions, GraphVae, Molecule, ProbGraph, SampleMetrics, SamplingConfig, TrainedDecoder, VaeConfig,
    CANONICAL_NODE_BOUND, MPM_ITERS,
};
use crate::spg::{build_spg, partition_cloud};

use super::config::{RunConfig, Task};
use super::data::{load_digits, synthetic_scene, SCENE_CLASSES};
use super::metrics::{MetricsRow, MetricsWriter};
use super::optim::AdamConfig;
use super::train::{grid_check, train_classifier, train_segmenter, train_vae, Scene, TrainOptions, VaeTrainOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Tolerance of the `gridcheck` self-test.
pub const GRID_TOLERANCE: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(name = "grapht", version, about = "Graph convolutions, superpoint graphs and graph generation")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check that ECC on offset graphs reproduces grid convolution.
    Gridcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Cut a point cloud into components; writes one id per point.
    Partition(CloudArgs),
    /// Partition a cloud and write its superpoint graph.
    Spg(CloudArgs),
    /// Run the task described by a configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw graphs from a VAE and write them as molecule lines.
    Sample {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Checkpoint written by `train`; a freshly initialized model otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Molecule lines used for the Novel ratio.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = false)]
        mst_fix: bool,
    },
    /// Match the first molecule of one file onto the first of another.
    Match {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Decoded size; defaults to the larger graph.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = MPM_ITERS)]
        iters: usize,
    },
    /// Valid/Unique/Novel ratios of molecule lines, written as CSV.
    Metrics {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct CloudArgs {
    /// Point cloud text file; a synthetic scene when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Points of the synthetic scene.
    #[arg(long, default_value_t = 5000)]
    pub points: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 10)]
    pub knn: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// VAE configuration and parameters in one JSON document.
#[derive(Serialize, Deserialize)]
struct VaeCheckpoint {
    config: VaeConfig,
    params: serde_json::Value,
}

fn save_vae(path: &Path, config: &VaeConfig, store: &ParamStore<f64>) -> Result<(), GraphError> {
    let doc = VaeCheckpoint { config: config.clone(), params: serde_json::from_str(&params_to_json(store))? };
    std::fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

fn load_vae(path: &Path, rng: &mut ChaCha8Rng) -> Result<(GraphVae, ParamStore<f64>), GraphError> {
    let doc: VaeCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let mut store = ParamStore::new();
    let vae = GraphVae::new(&mut store, rng, &doc.config);
    params_from_json(&mut store, &doc.params.to_string())?;
    Ok((vae, store))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("grapht: {e}");
            match e {
                GraphError::Io(_) => EXIT_IO,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match &cli.command {
        Command::Gridcheck { trials } => gridcheck(*trials, &mut rng, out),
        Command::Partition(a) => {
            let cloud = load_cloud(a, &mut rng)?;
            partition(&cloud, a.knn, a.mu, a.output.as_deref(), out)
        }
        Command::Spg(a) => {
            let cloud = load_cloud(a, &mut rng)?;
            spg(&cloud, a.knn, a.mu, a.output.as_deref(), out)
        }
        Command::Train { config } => {
            let mut cfg = RunConfig::load(config)?;
            cfg.seed = cli.seed;
            train(&cfg, out)
        }
        Command::Sample { n, checkpoint, dataset, output, mst_fix } => {
            let (vae, store) = match checkpoint {
                Some(p) => load_vae(p, &mut rng)?,
                None => {
                    let mut store = ParamStore::new();
                    let vae = GraphVae::new(&mut store, &mut rng, &VaeConfig::new(9, 4, 4, 40));
                    (vae, store)
                }
            };
            let cfg = SamplingConfig { n_samples: *n, batch: 256, mst_fix: *mst_fix, ..Default::default() };
            let src = TrainedDecoder { vae: &vae, store: &store };
            let graphs = sample_graphs(&src, None, &cfg, &mut rng)?;
            let alphabet = Alphabet::default();
            let mols = graphs.iter().map(|g| Molecule::from_graph(g, &alphabet)).collect::<Result<Vec<_>, _>>()?;
            Molecule::save_lines(&mols, output)?;
            let m = molecule_metrics(&graphs, dataset.as_deref(), &alphabet)?;
            writeln!(out, "{}", serde_json::to_string(&m)?)?;
            Ok(EXIT_OK)
        }
        Command::Match { a, b, k, iters } => {
            let alphabet = Alphabet::default();
            let ga = first_graph(a, &alphabet)?;
            let gb = first_graph(b, &alphabet)?;
            match_pair(&ga, &gb, *k, *iters, out)
        }
        Command::Metrics { samples, dataset, output } => {
            let alphabet = Alphabet::default();
            let graphs = read_graphs(samples, &alphabet)?;
            let m = molecule_metrics(&graphs, dataset.as_deref(), &alphabet)?;
            let mut w = MetricsWriter::create(output)?;
            w.write(&MetricsRow {
                valid: Some(m.valid),
                accurate: Some(m.accurate),
                unique: Some(m.unique),
                novel: Some(m.novel),
                ..Default::default()
            })?;
            writeln!(out, "{}", w.path().display())?;
            Ok(EXIT_OK)
        }
    }
}

fn gridcheck(trials: usize, rng: &mut ChaCha8Rng, out: &mut dyn Write) -> Result<i32, GraphError> {
    let dev = grid_check(trials, rng)?;
    writeln!(out, "max deviation {dev:.3e}")?;
    Ok(if dev < GRID_TOLERANCE { EXIT_OK } else { EXIT_INVALID })
}

fn load_cloud(a: &CloudArgs, rng: &mut ChaCha8Rng) -> Result<PointCloud<f64>, GraphError> {
    match &a.input {
        Some(p) => PointCloud::load(p),
        None => Ok(synthetic_scene(a.points, 0.01, rng)),
    }
}

fn partition(cloud: &PointCloud<f64>, knn: usize, mu: f64, output: Option<&Path>, out: &mut dyn Write) -> Result<i32, GraphError> {
    let p = partition_cloud(cloud, knn, mu)?;
    match output {
        Some(path) => p.partition.save_ids(path)?,
        None => p.partition.write_ids(&mut *out)?,
    }
    writeln!(out, "components {}", p.partition.num_components())?;
    Ok(EXIT_OK)
}

fn spg(cloud: &PointCloud<f64>, knn: usize, mu: f64, output: Option<&Path>, out: &mut dyn Write) -> Result<i32, GraphError> {
    let p = partition_cloud(cloud, knn, mu)?;
    let g = build_spg(&p.partition, &p.graph, &p.cloud)?;
    match output {
        Some(path) => g.save(path)?,
        None => writeln!(out, "{}", g.graph.to_json())?,
    }
    writeln!(out, "superpoints {} superedges {}", g.len(), g.graph.num_edges())?;
    Ok(EXIT_OK)
}

fn read_graphs(path: &Path, alphabet: &Alphabet) -> Result<Vec<DenseGraph>, GraphError> {
    Molecule::load_lines(path)?.iter().map(|m| m.to_graph(alphabet)).collect()
}

fn first_graph(path: &Path, alphabet: &Alphabet) -> Result<DenseGraph, GraphError> {
    read_graphs(path, alphabet)?.into_iter().next().ok_or_else(|| GraphError::Invalid(format!("{} holds no molecule", path.display())))
}

fn molecule_metrics(graphs: &[DenseGraph], dataset: Option<&Path>, alphabet: &Alphabet) -> Result<SampleMetrics, GraphError> {
    let known = match dataset {
        Some(p) => canonical_set(&read_graphs(p, alphabet)?, CANONICAL_NODE_BOUND)?,
        None => Default::default(),
    };
    label_metrics(graphs, None, &known, alphabet, CANONICAL_NODE_BOUND)
}

fn match_pair(ga: &DenseGraph, gb: &DenseGraph, k: Option<usize>, iters: usize, out: &mut dyn Write) -> Result<i32, GraphError> {
    let k = k.unwrap_or(ga.n().max(gb.n()));
    if gb.n() > k {
        return Err(GraphError::Parameter(format!("target of {} nodes exceeds k = {k}", gb.n())));
    }
    let p = ProbGraph::<f64>::from_dense(gb, k)?;
    let x = match_graphs(ga, &p, iters)?;
    let acc = match_accuracy(ga, gb, &x)?;
    writeln!(out, "assignment {}", x.perm.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))?;
    writeln!(out, "accuracy a {:.4} f {:.4} e {:.4} mean {:.4}", acc.a, acc.f, acc.e, acc.mean())?;
    Ok(EXIT_OK)
}

fn metrics_sink(cfg: &RunConfig) -> Result<Option<MetricsWriter>, GraphError> {
    cfg.metrics.as_deref().map(MetricsWriter::create).transpose()
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, GraphError> {
    p.as_deref().ok_or_else(|| GraphError::Parameter(format!("configuration needs `{what}`")))
}

/// Runs the task of `cfg`.
pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, GraphError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sink = metrics_sink(cfg)?;
    let mut emit = |row: &MetricsRow| -> Result<(), GraphError> {
        if let Some(w) = sink.as_mut() {
            w.write(row)?;
        }
        Ok(())
    };
    let adam = AdamConfig { lr: cfg.lr, ..Default::default() };
    let opts = TrainOptions { adam, batch: cfg.batch_size, epochs: cfg.epochs, clip: cfg.clip };
    match cfg.task {
        Task::Classify => {
            let train = load_digits(required(&cfg.train, "train")?, 8)?;
            let test = load_digits(required(&cfg.test, "test")?, 8)?;
            let acc = train_classifier(&train, &test, 8, 10, &opts, &mut rng, &mut emit)?;
            writeln!(out, "test accuracy {acc:.4}")?;
        }
        Task::Segment => {
            let classes = SCENE_CLASSES.len();
            let mut scenes = Vec::new();
            for _ in 0..5 {
                let cloud = cfg.augment.apply(&synthetic_scene(5000, 0.01, &mut rng), &mut rng);
                scenes.push(Scene::new(&cloud, cfg.k_nn, cfg.mu, classes)?);
            }
            let acc = train_segmenter(&scenes[..4], &scenes[4..], classes, cfg.steps, &opts, &mut rng, &mut emit)?;
            writeln!(out, "point accuracy {acc:.4}")?;
        }
        Task::Vae => {
            let alphabet = Alphabet::default();
            let data = match &cfg.train {
                Some(p) => read_graphs(p, &alphabet)?,
                None => (0..50).map(|_| random_molecule(rand::Rng::gen_range(&mut rng, 4.min(cfg.k)..=cfg.k), &mut rng)).collect(),
            };
            let vcfg = VaeConfig::new(cfg.k, alphabet.atoms.len(), alphabet.bond_orders.len(), cfg.c);
            let mut store = ParamStore::new();
            let vae = GraphVae::new(&mut store, &mut rng, &vcfg);
            let vopts = VaeTrainOptions {
                adam: AdamConfig { lr: cfg.lr, beta1: 0.5, ..Default::default() },
                elbo: ElboOptions { weights: cfg.weights, kl_weight: cfg.kl_weight, ..Default::default() },
                batch: cfg.batch_size,
                steps: cfg.epochs,
                target: None,
                clip: cfg.clip,
            };
            let hist = train_vae(&vae, &mut store, &data, &vopts, &mut rng, &mut emit)?;
            if let Some(p) = &cfg.output {
                save_vae(p, &vcfg, &store)?;
            }
            writeln!(out, "reconstruction loss {:.4}", hist.last().copied().unwrap_or(f64::NAN))?;
        }
        Task::Partition => {
            let cloud = PointCloud::load(required(&cfg.train, "train")?)?;
            return partition(&cloud, cfg.k_nn, cfg.mu, cfg.output.as_deref(), out);
        }
        Task::Match => {
            let alphabet = Alphabet::default();
            let ga = first_graph(required(&cfg.train, "train")?, &alphabet)?;
            let gb = first_graph(required(&cfg.test, "test")?, &alphabet)?;
            return match_pair(&ga, &gb, Some(cfg.k), MPM_ITERS, out);
        }
        Task::Gridcheck => return gridcheck(cfg.epochs, &mut rng, out),
    }
    Ok(EXIT_OK)
}
