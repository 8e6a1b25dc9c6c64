//! Batch experiments: configuration, execution and report files.
//!
//! [`run_experiment`] is pure: it returns the report files as strings, so a rerun
//! with the same configuration and seed produces byte-identical output.

mod pointcloud;
mod stats;

pub use pointcloud::{sample_point_cloud_benchmark, PointCloudSpec, PRIMITIVES};
pub use stats::Aggregate;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::dirichlet::{self, ContinuumSpec, Density, DirichletError, TestFunction};
use crate::graph::{self, DistanceMatrix, GraphError, Kernel, Metric, WeightedGraph};
use crate::learn::{self, ComponentPolicy, LearnError, LearnOptions};
use crate::lot::{self, LotError};
use crate::measures::{self, EmpiricalMeasure, GaussianFamilySpec, LabeledDataset, MeasureError};
use crate::rates::{self, RateError, RateReport};
use crate::rng;
use crate::tlp::{self, FunctionOverMeasure, Support, TlpError};
use crate::transport::TransportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Synthetic2d,
    Pointcloud,
    Consistency,
    Rates,
    TlpDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Synthetic2d,
        ExperimentKind::Pointcloud,
        ExperimentKind::Consistency,
        ExperimentKind::Rates,
        ExperimentKind::TlpDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Synthetic2d => "synthetic2d",
            ExperimentKind::Pointcloud => "pointcloud",
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Rates => "rates",
            ExperimentKind::TlpDemo => "tlp_demo",
        }
    }

    fn needs_graph(self) -> bool {
        !matches!(self, ExperimentKind::Rates)
    }

    fn learns(self) -> bool {
        matches!(
            self,
            ExperimentKind::Synthetic2d | ExperimentKind::Pointcloud | ExperimentKind::TlpDemo
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    W2,
    #[default]
    Lot,
}

/// How the ε-graph radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonPolicy {
    /// `factor` times the connectivity radius of the sampled graph.
    Connectivity { factor: f64 },
    Fixed { value: f64 },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

fn default_p() -> f64 {
    2.0
}

fn default_trials() -> usize {
    1
}

fn default_max_iter() -> usize {
    LearnOptions::default().max_iter
}

fn default_tol() -> f64 {
    LearnOptions::default().tol
}

fn default_quadrature() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Number of measures; a list runs each size in turn.
    #[serde(default, deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    /// Atoms per measure (kind-specific default when absent).
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub label_rates: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub k_neighbors: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<EpsilonPolicy>,
    #[serde(default)]
    pub metric: MetricKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Labeled point-cloud file (JSON or binary) for the pointcloud kind.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Index of the LOT reference measure.
    #[serde(default)]
    pub reference_index: usize,
    #[serde(default)]
    pub unlabeled_components: ComponentPolicy,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Shape perturbations for the synthetic point-cloud benchmark.
    #[serde(default)]
    pub pointcloud: PointCloudSpec,
    /// Ambient dimension of the base cloud in the translation-family kinds.
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
    /// Rates kind: dimension of the cube.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub m_values: Vec<usize>,
    /// Rates kind, `k >= 2`: size of the reference sample.
    #[serde(default)]
    pub proxy_m: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Atoms per measure, with the kind's default.
    pub fn atoms(&self) -> usize {
        self.m.unwrap_or(match self.kind {
            ExperimentKind::Synthetic2d => 100,
            ExperimentKind::Pointcloud => 256,
            ExperimentKind::Consistency => 16,
            ExperimentKind::Rates | ExperimentKind::TlpDemo => 8,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(ExperimentError::Config(s));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.atoms() == 0 {
            return bad("m must be positive".into());
        }
        if self.kind == ExperimentKind::Rates {
            if self.k.is_none() || self.m_values.is_empty() {
                return bad("rates needs k and m_values".into());
            }
            return Ok(());
        }
        let from_file = self.kind == ExperimentKind::Pointcloud && self.input.is_some();
        if !from_file && (self.n.is_empty() || self.n.iter().any(|&n| n < 2)) {
            return bad("n must list sizes of at least 2".into());
        }
        if self.kind.needs_graph() {
            match (self.k_neighbors, self.epsilon) {
                (Some(_), None) if self.kind == ExperimentKind::Consistency => {
                    return bad("consistency needs an epsilon policy, not k_neighbors".into())
                }
                (Some(0), None) => return bad("k_neighbors must be positive".into()),
                (Some(_), None) => {}
                (None, Some(EpsilonPolicy::Connectivity { factor })) if !(factor > 0.0 && factor.is_finite()) => {
                    return bad(format!("connectivity factor {factor} must be positive"))
                }
                (None, Some(EpsilonPolicy::Fixed { value })) if !(value > 0.0 && value.is_finite()) => {
                    return bad(format!("epsilon {value} must be positive"))
                }
                (None, Some(_)) => {}
                _ => return bad("set exactly one of k_neighbors and epsilon".into()),
            }
        }
        if self.kind.learns() {
            if self.label_rates.is_empty() || self.label_rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                return bad("label_rates must be a nonempty subset of (0, 1]".into());
            }
            if !(self.p >= 2.0 && self.p.is_finite()) {
                return bad(format!("p = {} must be at least 2", self.p));
            }
        } else if !(self.p >= 1.0 && self.p.is_finite()) {
            return bad(format!("p = {} must be at least 1", self.p));
        }
        if self.quadrature_points < 8 || !self.quadrature_points.is_multiple_of(2) {
            return bad("quadrature_points must be even and at least 8".into());
        }
        if self.ambient_dim == Some(0) {
            return bad("ambient_dim must be positive".into());
        }
        Ok(())
    }

    fn learn_options(&self) -> LearnOptions {
        LearnOptions {
            p: self.p,
            max_iter: self.max_iter,
            tol: self.tol,
            components: self.unlabeled_components,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error at {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Lot(#[from] LotError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Dirichlet(#[from] DirichletError),
    #[error(transparent)]
    Tlp(#[from] TlpError),
    #[error(transparent)]
    Rates(#[from] RateError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

impl ExperimentError {
    /// Process exit code; 1 and 2 are left to the CLI for internal and usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 3,
            ExperimentError::Io { .. } => 4,
            ExperimentError::Measure(_) => 5,
            ExperimentError::Transport(_) => 6,
            ExperimentError::Lot(_) => 7,
            ExperimentError::Graph(_) => 8,
            ExperimentError::Learn(_) => 9,
            ExperimentError::Dirichlet(_) => 10,
            ExperimentError::Tlp(_) => 11,
            ExperimentError::Rates(_) => 12,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Io { .. } => "io",
            ExperimentError::Measure(_) => "measures",
            ExperimentError::Transport(_) => "transport",
            ExperimentError::Lot(_) => "lot",
            ExperimentError::Graph(_) => "graph",
            ExperimentError::Learn(_) => "learn",
            ExperimentError::Dirichlet(_) => "dirichlet",
            ExperimentError::Tlp(_) => "tlp",
            ExperimentError::Rates(_) => "rates",
        }
    }

    /// `{"error": kind, "exit_code": code, "message": text}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

/// Exit codes as listed in the CLI help.
pub const EXIT_CODES: &[(i32, &str)] = &[
    (0, "success"),
    (1, "internal error"),
    (2, "invalid command line"),
    (3, "invalid configuration"),
    (4, "file read or write failure"),
    (5, "invalid or unreadable measure data"),
    (6, "optimal transport failure"),
    (7, "LOT embedding failure"),
    (8, "graph construction failure"),
    (9, "label propagation failure"),
    (10, "energy evaluation failure"),
    (11, "TL^p distance failure"),
    (12, "rate experiment failure"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub n: usize,
    pub label_rate: f64,
    pub trial: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub n: usize,
    pub label_rate: f64,
    pub accuracy: Aggregate,
    /// Solves of `p > 2` that hit `max_iter`; their best iterate was scored.
    pub nonconverged: usize,
    /// Solves that used the majority fallback on some node.
    pub fallback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub n: usize,
    pub trial: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub n: usize,
    pub epsilon: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub trial: usize,
    pub epsilon: f64,
    pub discrete_energy: f64,
    pub continuum_energy: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub n: usize,
    pub epsilon: Aggregate,
    pub relative_error: Aggregate,
    /// `(discrete - continuum) / continuum`, averaged over trials.
    pub signed_relative_error: Aggregate,
    pub continuum_energy: f64,
    pub continuum_error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlpRow {
    pub n: usize,
    pub trial: usize,
    pub tlp_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlpSummary {
    pub n: usize,
    pub tlp_distance: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy: Vec<AccuracySummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<EpsilonSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consistency: Vec<ConsistencySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tlp: Vec<TlpSummary>,
}

impl Summary {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            kind: config.kind,
            config: config.clone(),
            accuracy: Vec::new(),
            epsilons: Vec::new(),
            consistency: Vec::new(),
            rates: None,
            tlp: Vec::new(),
        }
    }

    /// Aggregate accuracy for `(n, label_rate)`.
    pub fn accuracy_at(&self, n: usize, label_rate: f64) -> Option<&AccuracySummary> {
        self.accuracy.iter().find(|a| a.n == n && a.label_rate == label_rate)
    }
}

/// Report files keyed by file name, plus the parsed summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub files: BTreeMap<String, String>,
    pub summary: Summary,
}

impl ExperimentOutput {
    /// Writes every report file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io_err = |path: &Path, e: std::io::Error| ExperimentError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

/// Derives an independent seed for `(trial, tag)`.
fn derive_seed(seed: u64, trial: usize, tag: u64) -> u64 {
    rng::rng_stream(rng::trial_seed(seed, trial as u64), tag).next_u64()
}

const MASK_TAG: u64 = 1 << 40;

fn distances_for(dataset: &LabeledDataset, metric: MetricKind, reference_index: usize) -> Result<DistanceMatrix> {
    Ok(match metric {
        MetricKind::W2 => graph::pairwise_distances(dataset, Metric::W2Exact)?,
        MetricKind::Lot => {
            let emb = lot::lot_embed_with_reference_index(dataset, reference_index)?;
            graph::pairwise_distances(dataset, Metric::Lot(&emb))?
        }
    })
}

/// Builds the configured graph; returns the radius used for ε-graphs.
fn build_graph(config: &ExperimentConfig, distances: &DistanceMatrix, kernel: &Kernel) -> Result<(WeightedGraph, Option<f64>)> {
    match (config.k_neighbors, config.epsilon) {
        (Some(k), _) => Ok((graph::knn_graph(distances, k)?, None)),
        (None, Some(policy)) => {
            let eps = match policy {
                EpsilonPolicy::Connectivity { factor } => factor * graph::connectivity_epsilon(distances)?,
                EpsilonPolicy::Fixed { value } => value,
            };
            Ok((graph::epsilon_graph(distances, eps, kernel)?, Some(eps)))
        }
        (None, None) => Err(ExperimentError::Config("no graph policy".into())),
    }
}

/// Sorted random subset of `round(rate * n)` nodes (at least one).
pub fn choose_labeled(n: usize, rate: f64, seed: u64) -> Vec<usize> {
    let k = ((rate * n as f64).round() as usize).clamp(1, n);
    let mut rng = rng::rng(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

struct Scored {
    accuracy: f64,
    converged: bool,
    fallback: bool,
}

fn learn_and_score(
    config: &ExperimentConfig,
    graph: &WeightedGraph,
    dataset: &LabeledDataset,
    truth: &[usize],
    labeled: &[usize],
) -> Result<Scored> {
    let labels = dataset.labels().masked(labeled);
    let result = match learn::solve(graph, &labels, &config.learn_options()) {
        Ok(r) => r,
        Err(LearnError::MaxIterExceeded(best)) => *best,
        Err(e) => return Err(e.into()),
    };
    let score = learn::predict_and_score(&result, truth, labeled)?;
    Ok(Scored {
        accuracy: score.accuracy,
        converged: result.converged,
        fallback: !result.fallback_nodes.is_empty(),
    })
}

fn truth_of(dataset: &LabeledDataset) -> Result<Vec<usize>> {
    (0..dataset.len())
        .map(|i| {
            dataset.labels().get(i).ok_or_else(|| {
                ExperimentError::Config(format!("measure {i} has no ground-truth label"))
            })
        })
        .collect()
}

struct AccuracyTrial {
    epsilon: Option<f64>,
    scores: Vec<Scored>,
}

fn accuracy_trial(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    distances: &DistanceMatrix,
    graph_and_eps: Option<(&WeightedGraph, Option<f64>)>,
    n: usize,
    trial: usize,
) -> Result<AccuracyTrial> {
    let kernel = Kernel::indicator(1.0, 1.0, 2, false)?;
    let owned;
    let (graph, epsilon) = match graph_and_eps {
        Some(g) => g,
        None => {
            owned = build_graph(config, distances, &kernel)?;
            (&owned.0, owned.1)
        }
    };
    let truth = truth_of(dataset)?;
    let scores = config
        .label_rates
        .iter()
        .enumerate()
        .map(|(r, &rate)| {
            let mask_seed = derive_seed(config.seed, trial, MASK_TAG | ((n as u64) << 8) | r as u64);
            let labeled = choose_labeled(dataset.len(), rate, mask_seed);
            learn_and_score(config, graph, dataset, &truth, &labeled)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyTrial { epsilon, scores })
}

fn push_accuracy(
    config: &ExperimentConfig,
    n: usize,
    trials: &[AccuracyTrial],
    rows: &mut Vec<AccuracyRow>,
    summary: &mut Summary,
) {
    for (r, &rate) in config.label_rates.iter().enumerate() {
        let accs: Vec<f64> = trials.iter().map(|t| t.scores[r].accuracy).collect();
        for (trial, &accuracy) in accs.iter().enumerate() {
            rows.push(AccuracyRow {
                n,
                label_rate: rate,
                trial,
                accuracy,
            });
        }
        summary.accuracy.push(AccuracySummary {
            n,
            label_rate: rate,
            accuracy: Aggregate::of(&accs),
            nonconverged: trials.iter().filter(|t| !t.scores[r].converged).count(),
            fallback: trials.iter().filter(|t| t.scores[r].fallback).count(),
        });
    }
}

fn push_epsilons(n: usize, trials: &[AccuracyTrial], rows: &mut Vec<EpsilonRow>, summary: &mut Summary) {
    let eps: Vec<f64> = trials.iter().filter_map(|t| t.epsilon).collect();
    if eps.is_empty() {
        return;
    }
    for (trial, &epsilon) in eps.iter().enumerate() {
        rows.push(EpsilonRow { n, trial, epsilon });
    }
    summary.epsilons.push(EpsilonSummary {
        n,
        epsilon: Aggregate::of(&eps),
    });
}

fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut s = String::from("n,label_rate,trial,accuracy\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.n, r.label_rate, r.trial, r.accuracy).expect("string write");
    }
    s
}

fn epsilons_csv(rows: &[EpsilonRow]) -> String {
    let mut s = String::from("n,trial,epsilon\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.n, r.trial, r.epsilon).expect("string write");
    }
    s
}

fn run_synthetic2d(config: &ExperimentConfig, files: &mut BTreeMap<String, String>, summary: &mut Summary) -> Result<()> {
    let m = config.atoms();
    let mut rows = Vec::new();
    let mut eps_rows = Vec::new();
    for &n in &config.n {
        let trials = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let spec = GaussianFamilySpec::new(n, m);
                let dataset = measures::sample_gaussian_family(&spec, derive_seed(config.seed, trial, n as u64))?;
                let distances = distances_for(&dataset, config.metric, config.reference_index)?;
                accuracy_trial(config, &dataset, &distances, None, n, trial)
            })
            .collect::<Result<Vec<_>>>()?;
        push_accuracy(config, n, &trials, &mut rows, summary);
        push_epsilons(n, &trials, &mut eps_rows, summary);
    }
    files.insert("accuracy.csv".into(), accuracy_csv(&rows));
    if !eps_rows.is_empty() {
        files.insert("epsilons.csv".into(), epsilons_csv(&eps_rows));
    }
    Ok(())
}

fn run_pointcloud(config: &ExperimentConfig, files: &mut BTreeMap<String, String>, summary: &mut Summary) -> Result<()> {
    let datasets: Vec<LabeledDataset> = match &config.input {
        Some(path) => vec![measures::load_point_cloud_dataset(path)?],
        None => config
            .n
            .iter()
            .map(|&n| sample_point_cloud_benchmark(n, config.atoms(), &config.pointcloud, derive_seed(config.seed, 0, n as u64)))
            .collect::<std::result::Result<_, _>>()?,
    };
    let kernel = Kernel::indicator(1.0, 1.0, 2, false)?;
    let mut rows = Vec::new();
    let mut eps_rows = Vec::new();
    for dataset in &datasets {
        let n = dataset.len();
        let distances = distances_for(dataset, config.metric, config.reference_index)?;
        let (graph, eps) = build_graph(config, &distances, &kernel)?;
        let trials = (0..config.trials)
            .into_par_iter()
            .map(|trial| accuracy_trial(config, dataset, &distances, Some((&graph, eps)), n, trial))
            .collect::<Result<Vec<_>>>()?;
        push_accuracy(config, n, &trials, &mut rows, summary);
        push_epsilons(n, &trials, &mut eps_rows, summary);
    }
    files.insert("accuracy.csv".into(), accuracy_csv(&rows));
    if !eps_rows.is_empty() {
        files.insert("epsilons.csv".into(), epsilons_csv(&eps_rows));
    }
    Ok(())
}

/// Base cloud with `m` standard Gaussian atoms in `R^dim`.
fn gaussian_cloud(m: usize, dim: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let mut rng = rng::rng(seed);
    let coords = (0..m * dim)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Ok(EmpiricalMeasure::from_flat(coords, dim)?)
}

/// Translation family over `theta ~ U[0, 1]` (first coordinate only).
fn translation_sample(config: &ExperimentConfig, n: usize, trial: usize, dim: usize) -> Result<(LabeledDataset, Vec<f64>)> {
    let base = gaussian_cloud(config.atoms(), dim, derive_seed(config.seed, trial, (n as u64) << 1))?;
    let mut rng = rng::rng(derive_seed(config.seed, trial, ((n as u64) << 1) | 1));
    let thetas: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let shifts: Vec<Vec<f64>> = thetas.iter().map(|&t| vec![t]).collect();
    let (dataset, _) = measures::sample_translation_family(&base, &shifts, None, 0)?;
    Ok((dataset, thetas))
}

fn run_consistency(config: &ExperimentConfig, files: &mut BTreeMap<String, String>, summary: &mut Summary) -> Result<()> {
    let kernel = Kernel::indicator(1.0, 1.0, 1, true)?;
    let spec = ContinuumSpec {
        density: Density::uniform_unit(1),
        function: TestFunction::Linear { a: vec![1.0], b: 0.0 },
        kernel: kernel.clone(),
        p: config.p,
    };
    let continuum = dirichlet::continuum_energy(&spec, config.quadrature_points)?;
    let e_inf = continuum.extrapolated;
    let dim = config.ambient_dim.unwrap_or(2);
    let mut rows = Vec::new();
    for &n in &config.n {
        let trial_rows = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let (dataset, thetas) = translation_sample(config, n, trial, dim)?;
                let distances = distances_for(&dataset, config.metric, config.reference_index)?;
                let (graph, eps) = build_graph(config, &distances, &kernel)?;
                let e = dirichlet::graph_dirichlet_energy(&graph, &thetas, config.p)?;
                Ok(ConsistencyRow {
                    n,
                    trial,
                    epsilon: eps.expect("epsilon policy"),
                    discrete_energy: e,
                    continuum_energy: e_inf,
                    relative_error: (e - e_inf).abs() / e_inf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let col = |f: fn(&ConsistencyRow) -> f64| trial_rows.iter().map(f).collect::<Vec<_>>();
        summary.consistency.push(ConsistencySummary {
            n,
            epsilon: Aggregate::of(&col(|r| r.epsilon)),
            relative_error: Aggregate::of(&col(|r| r.relative_error)),
            signed_relative_error: Aggregate::of(&col(|r| (r.discrete_energy - r.continuum_energy) / r.continuum_energy)),
            continuum_energy: e_inf,
            continuum_error_estimate: continuum.error_estimate,
        });
        rows.extend(trial_rows);
    }
    let mut s = String::from("n,trial,epsilon,discrete_energy,continuum_energy,relative_error\n");
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.n, r.trial, r.epsilon, r.discrete_energy, r.continuum_energy, r.relative_error
        )
        .expect("string write");
    }
    files.insert("consistency.csv".into(), s);
    Ok(())
}

fn run_rates(config: &ExperimentConfig, files: &mut BTreeMap<String, String>, summary: &mut Summary) -> Result<()> {
    let k = config.k.expect("validated");
    let proxy = config.proxy_m.unwrap_or(50 * config.m_values.iter().max().copied().unwrap_or(1));
    let report = rates::empirical_w2_rate(k, &config.m_values, config.trials, proxy, config.seed)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).expect("in-memory write");
    files.insert("rates.csv".into(), String::from_utf8(csv).expect("utf8"));
    summary.rates = Some(report);
    Ok(())
}

/// Laplace learning of the step `1{theta >= 1/2}` on a translation family,
/// compared in TL^2 (ground `W_2`) with the step sampled at `n` parameter quantiles.
fn run_tlp_demo(config: &ExperimentConfig, files: &mut BTreeMap<String, String>, summary: &mut Summary) -> Result<()> {
    let kernel = Kernel::indicator(1.0, 1.0, 1, false)?;
    let dim = config.ambient_dim.unwrap_or(1);
    let rate = config.label_rates[0];
    let mut rows = Vec::new();
    for &n in &config.n {
        let trial_rows = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let (dataset, thetas) = translation_sample(config, n, trial, dim)?;
                let classes: Vec<usize> = thetas.iter().map(|&t| usize::from(t >= 0.5)).collect();
                let dataset = dataset.with_labels(measures::Labels::from_classes(&classes))?;
                let distances = distances_for(&dataset, config.metric, config.reference_index)?;
                let (graph, _) = build_graph(config, &distances, &kernel)?;
                let mask_seed = derive_seed(config.seed, trial, MASK_TAG | (n as u64) << 8);
                let labeled = choose_labeled(n, rate, mask_seed);
                let labels = dataset.labels().masked(&labeled);
                let result = match learn::solve(&graph, &labels, &config.learn_options()) {
                    Ok(r) => r,
                    Err(LearnError::MaxIterExceeded(best)) => *best,
                    Err(e) => return Err(e.into()),
                };
                let discrete = FunctionOverMeasure::uniform(
                    Support::Measures(dataset.measures().to_vec()),
                    result.column(result.n_classes() - 1),
                )?;
                let base = dataset.measure(0).translated(&[-thetas[0]])?;
                let quantiles: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
                let reference_measures = quantiles
                    .iter()
                    .map(|&q| base.translated(&[q]))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let step: Vec<f64> = quantiles.iter().map(|&q| f64::from(u8::from(q >= 0.5))).collect();
                let reference = FunctionOverMeasure::uniform(Support::Measures(reference_measures), step)?;
                Ok(TlpRow {
                    n,
                    trial,
                    tlp_distance: tlp::tlp_distance(&discrete, &reference, 2.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d: Vec<f64> = trial_rows.iter().map(|r| r.tlp_distance).collect();
        summary.tlp.push(TlpSummary {
            n,
            tlp_distance: Aggregate::of(&d),
        });
        rows.extend(trial_rows);
    }
    let mut s = String::from("n,trial,tlp_distance\n");
    for r in &rows {
        writeln!(s, "{},{},{}", r.n, r.trial, r.tlp_distance).expect("string write");
    }
    files.insert("tlp.csv".into(), s);
    Ok(())
}

/// Runs one experiment and returns its report files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut files = BTreeMap::new();
    let mut summary = Summary::new(config);
    match config.kind {
        ExperimentKind::Synthetic2d => run_synthetic2d(config, &mut files, &mut summary)?,
        ExperimentKind::Pointcloud => run_pointcloud(config, &mut files, &mut summary)?,
        ExperimentKind::Consistency => run_consistency(config, &mut files, &mut summary)?,
        ExperimentKind::Rates => run_rates(config, &mut files, &mut summary)?,
        ExperimentKind::TlpDemo => run_tlp_demo(config, &mut files, &mut summary)?,
    }
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    files.insert("summary.json".into(), json);
    Ok(ExperimentOutput { files, summary })
}

/// [`run_experiment`] on a dedicated pool of `jobs` worker threads.
///
/// Output does not depend on `jobs`: work is split by trial and merged in order.
pub fn run_experiment_with_jobs(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentOutput> {
    match jobs {
        None => run_experiment(config),
        Some(0) => Err(ExperimentError::Config("jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?
            .install(|| run_experiment(config)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn parses_and_validates() {
        let c = config(r#"{"kind": "synthetic2d", "n": 40, "label_rates": [0.2], "epsilon": {"policy": "connectivity", "factor": 1.1}}"#);
        assert_eq!(c.n, vec![40]);
        assert_eq!(c.atoms(), 100);
        c.validate().unwrap();
        let both = config(r#"{"kind": "pointcloud", "n": [40], "label_rates": [0.2], "k_neighbors": 5, "epsilon": {"policy": "fixed", "value": 1.0}}"#);
        assert!(matches!(both.validate(), Err(ExperimentError::Config(_))));
        let rate = config(r#"{"kind": "pointcloud", "n": [40], "label_rates": [0.0], "k_neighbors": 5}"#);
        assert!(rate.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind": "rates", "bogus": 1}"#).is_err());
        let err = ExperimentConfig::from_json("{").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let v: serde_json::Value = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(v["error"], "config");
    }

    #[test]
    fn labeled_subsets() {
        let a = choose_labeled(100, 0.2, 5);
        assert_eq!(a.len(), 20);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, choose_labeled(100, 0.2, 5));
        assert_eq!(choose_labeled(10, 0.01, 5).len(), 1);
        assert_eq!(choose_labeled(10, 1.0, 5), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn small_runs_are_reproducible() {
        let c = config(
            r#"{"kind": "synthetic2d", "n": [30, 60], "m": 20, "label_rates": [0.3, 0.6], "trials": 2,
                "epsilon": {"policy": "connectivity", "factor": 1.1}, "seed": 9}"#,
        );
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.files, b.files);
        assert_eq!(a.summary.accuracy.len(), 4);
        assert!(a.files["accuracy.csv"].starts_with("n,label_rate,trial,accuracy\n30,0.3,0,"));
        assert_eq!(a.files["epsilons.csv"].lines().count(), 5);
        let parsed: Summary = serde_json::from_str(&a.files["summary.json"]).unwrap();
        assert_eq!(parsed, a.summary);
    }

    #[test]
    fn other_kinds_run() {
        let c = config(r#"{"kind": "consistency", "n": [60], "trials": 2, "epsilon": {"policy": "connectivity", "factor": 2.0}}"#);
        let out = run_experiment(&c).unwrap();
        assert!((out.summary.consistency[0].continuum_energy - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(out.files["consistency.csv"].lines().count(), 3);

        let c = config(r#"{"kind": "rates", "k": 1, "m_values": [10, 20, 40], "trials": 3}"#);
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.files["rates.csv"].lines().count(), 4);

        let c = config(r#"{"kind": "tlp_demo", "n": [20], "label_rates": [0.5], "trials": 1, "epsilon": {"policy": "connectivity", "factor": 2.0}}"#);
        let out = run_experiment(&c).unwrap();
        assert!(out.summary.tlp[0].tlp_distance.mean.is_finite());

        let c = config(r#"{"kind": "pointcloud", "n": [24], "m": 16, "label_rates": [0.5], "trials": 2, "k_neighbors": 4}"#);
        let out = run_experiment(&c).unwrap();
        assert!(!out.files.contains_key("epsilons.csv"));
        assert_eq!(out.summary.accuracy[0].accuracy.count, 2);
    }
}
