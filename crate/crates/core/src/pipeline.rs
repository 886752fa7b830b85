//! End-to-end orchestration: ingest → spatial graph → k-hop lift →
//! hyperedge features → wavelets → probe, Vendi and clustering.
//!
//! Outputs are staged in a hidden directory and moved into place only after
//! every stage succeeds. Features and representations are cached under a
//! digest of the inputs and the niche and wavelet settings, so evaluation
//! and clustering reruns skip the expensive stages.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{DiffusionError, DiffusionOperator};
use crate::eval::{
    linear_probe, spectral_cluster, standardize_columns, vendi_score, ClusterConfig, EvalConfig, EvalError,
    ProbeReport, VendiKernel,
};
use crate::io::{self, IoError};
use crate::niche::{
    build_spatial_graph, hyperedge_features, khop_lift, lognormalize, niche_representations, FeatureColumn,
    Granularity, JitterRecord, NicheConfig, NicheError, SpatialDataset,
};
use crate::wavelets::{ScaleSequence, WaveletError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CACHE_ENV: &str = "HYPERWAVE_CACHE_DIR";

pub const FEATURES_FILE: &str = "niche_features.csv";
pub const REPRESENTATIONS_FILE: &str = "representations.bin";
pub const REPRESENTATIONS_CSV_FILE: &str = "representations.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
            ErrorKind::Io => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: &'static str,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { stage, kind, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

fn io_kind(err: &IoError) -> ErrorKind {
    match err {
        IoError::Io { .. } => ErrorKind::Io,
        _ => ErrorKind::Data,
    }
}

fn diffusion_kind(err: &DiffusionError) -> ErrorKind {
    match err {
        DiffusionError::EigenSolverFailure => ErrorKind::Numerical,
        DiffusionError::SizeCapExceeded { .. } | DiffusionError::NotTwoUniform { .. } => ErrorKind::Config,
        DiffusionError::DimensionMismatch { .. } => ErrorKind::Data,
    }
}

fn niche_kind(err: &NicheError) -> ErrorKind {
    match err {
        NicheError::InvalidConfig(_) | NicheError::InvalidGenePair { .. } => ErrorKind::Config,
        NicheError::Wavelet(WaveletError::InvalidJ(_) | WaveletError::InvalidScales { .. }) => ErrorKind::Config,
        NicheError::Diffusion(e) => diffusion_kind(e),
        NicheError::Signal(_) => ErrorKind::Numerical,
        _ => ErrorKind::Data,
    }
}

fn eval_kind(err: &EvalError) -> ErrorKind {
    match err {
        EvalError::InvalidConfig(_) | EvalError::InvalidClusterCount { .. } => ErrorKind::Config,
        EvalError::SingleClass | EvalError::ClassTooSmall { .. } | EvalError::Empty => ErrorKind::Data,
        EvalError::DimensionMismatch { .. } => ErrorKind::Data,
        EvalError::ZeroRow { .. } | EvalError::EigenSolverFailure => ErrorKind::Numerical,
    }
}

trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, PipelineError>;
}

macro_rules! stage_context {
    ($err:ty, $kind:expr) => {
        impl<T> StageContext<T> for Result<T, $err> {
            fn stage(self, stage: &'static str) -> Result<T, PipelineError> {
                self.map_err(|e| PipelineError::new(stage, $kind(&e), e.to_string()))
            }
        }
    };
}

stage_context!(IoError, io_kind);
stage_context!(NicheError, niche_kind);
stage_context!(EvalError, eval_kind);

/// Which label the probe predicts for each niche (taken from its anchor cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeLabel {
    #[default]
    Condition,
    CellType,
    Subclass,
    Supertype,
}

impl ProbeLabel {
    fn name(self) -> &'static str {
        match self {
            ProbeLabel::Condition => "condition",
            ProbeLabel::CellType => "cell_type",
            ProbeLabel::Subclass => "subclass",
            ProbeLabel::Supertype => "supertype",
        }
    }

    fn categorical(self, dataset: &SpatialDataset) -> &crate::niche::Categorical {
        match self {
            ProbeLabel::Condition => &dataset.condition,
            ProbeLabel::CellType => dataset.labels(Granularity::CellType),
            ProbeLabel::Subclass => dataset.labels(Granularity::Subclass),
            ProbeLabel::Supertype => dataset.labels(Granularity::Supertype),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub cells: PathBuf,
    pub expression: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write `representations.csv`. Large for big inputs.
    pub csv_mirror: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, csv_mirror: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletConfig {
    pub scales: ScaleSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub label: ProbeLabel,
    pub vendi_kernel: VendiKernel,
    /// Also probe log-normalized anchor-cell expression.
    pub baseline: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { label: ProbeLabel::Condition, vendi_kernel: VendiKernel::Cosine, baseline: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub niche: NicheConfig,
    #[serde(default)]
    pub wavelets: WaveletConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.niche.validate().stage("config")?;
        self.eval.validate().stage("config")?;
        if self.cluster.n_clusters < 2 {
            return Err(PipelineError::new("config", ErrorKind::Config, "cluster.n_clusters must be at least 2"));
        }
        if self.cluster.n_neighbors == 0 {
            return Err(PipelineError::new("config", ErrorKind::Config, "cluster.n_neighbors must be positive"));
        }
        if let VendiKernel::Rbf { bandwidth } = self.metrics.vendi_kernel {
            if !(bandwidth > 0.0) {
                return Err(PipelineError::new("config", ErrorKind::Config, "rbf bandwidth must be positive"));
            }
        }
        Ok(())
    }

    /// Makes relative paths relative to `base`.
    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.input.cells);
        join(&mut self.input.expression);
        if let Some(dir) = self.output.dir.as_mut() {
            join(dir);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRegistry {
    pub eval_split_seeds: Vec<u64>,
    pub cluster_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheInfo {
    pub key: String,
    pub dir: Option<PathBuf>,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n_clusters: usize,
    pub inertia: f64,
    pub eigenvalues: Vec<f64>,
    pub degenerate_eigenspace: bool,
    pub eigen_converged: bool,
}

/// Everything needed to trace and reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stage_timings: Vec<StageTiming>,
    pub seeds: SeedRegistry,
    pub threads: Option<usize>,
    pub jitter: Vec<JitterRecord>,
    pub cache: CacheInfo,
    pub clustering: Option<ClusterSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every output file.
    Run,
    /// `metrics.json` only.
    EvalOnly,
    /// `clusters.csv` only.
    ClusterOnly,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::EvalOnly => "eval-only",
            Mode::ClusterOnly => "cluster-only",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
    /// Replaces the split seeds with `seed, seed+1, …` and the cluster seed with `seed`.
    pub seed: Option<u64>,
    /// Overrides the cache location (otherwise `HYPERWAVE_CACHE_DIR`, then `<out>/.cache`).
    pub cache_dir: Option<PathBuf>,
    pub no_cache: bool,
    /// Recorded in the manifest.
    pub threads: Option<usize>,
}

/// Metrics for one embedding. Skipped entries carry the reason instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMetrics {
    pub dim: usize,
    pub probe: Option<ProbeReport>,
    pub probe_skipped: Option<String>,
    pub vendi: Option<f64>,
    pub vendi_skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub class_names: Vec<String>,
    pub n_niches: usize,
    pub representations: EmbeddingMetrics,
    pub baseline: Option<EmbeddingMetrics>,
    pub clustering: Option<ClusterSummary>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub metrics: Option<MetricsReport>,
    pub clusters: Option<Vec<usize>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(role: &str, path: &Path) -> Result<FileDigest, PipelineError> {
    let bytes = fs::read(path).map_err(|e| {
        PipelineError::new("ingest", ErrorKind::Data, format!("{}: {e}", path.display()))
    })?;
    Ok(FileDigest { role: role.to_owned(), path: path.to_owned(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// A configuration plus, when loaded from a manifest, the input digests to verify.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub expected_inputs: Vec<FileDigest>,
}

/// Reads a TOML pipeline config, or a `manifest.json` from an earlier run.
pub fn load_config(path: &Path) -> Result<LoadedConfig, PipelineError> {
    let bad = |m: String| PipelineError::new("config", ErrorKind::Config, m);
    let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let is_manifest = path.extension().is_some_and(|e| e == "json");
    let loaded = if is_manifest {
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        LoadedConfig { config: manifest.config, expected_inputs: manifest.inputs }
    } else {
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        config.resolve_paths(base);
        LoadedConfig { config, expected_inputs: Vec::new() }
    };
    loaded.config.validate()?;
    Ok(loaded)
}

struct Timer {
    timings: Vec<StageTiming>,
}

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming { stage: stage.to_owned(), seconds: start.elapsed().as_secs_f64() });
        out
    }
}

/// Features, representations and their provenance for one input digest.
struct Stages {
    features: Array2<f64>,
    schema: Vec<FeatureColumn>,
    representations: Array2<f64>,
    jitter: Vec<JitterRecord>,
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    version: String,
    schema: Vec<FeatureColumn>,
    jitter: Vec<JitterRecord>,
}

fn cache_key(config: &PipelineConfig, inputs: &[FileDigest]) -> String {
    let mut h = Sha256::new();
    h.update(VERSION.as_bytes());
    for d in inputs {
        h.update(d.role.as_bytes());
        h.update(d.sha256.as_bytes());
    }
    h.update(serde_json::to_vec(&config.niche).expect("serializable"));
    h.update(serde_json::to_vec(&config.wavelets).expect("serializable"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn load_cached(dir: &Path) -> Option<Stages> {
    let meta: CacheMeta = serde_json::from_slice(&fs::read(dir.join("meta.json")).ok()?).ok()?;
    if meta.version != VERSION {
        return None;
    }
    let features = io::read_matrix(&dir.join("features.bin")).ok()?;
    let representations = io::read_matrix(&dir.join(REPRESENTATIONS_FILE)).ok()?;
    if features.ncols() != meta.schema.len() || representations.nrows() != features.nrows() {
        return None;
    }
    Some(Stages { features, schema: meta.schema, representations, jitter: meta.jitter })
}

fn store_cached(dir: &Path, stages: &Stages) -> Result<(), PipelineError> {
    let fail = |e: String| PipelineError::new("cache", ErrorKind::Io, e);
    let parent = dir.parent().expect("cache entry has a parent");
    fs::create_dir_all(parent).map_err(|e| fail(format!("{}: {e}", parent.display())))?;
    let tmp = parent.join(format!(".tmp-{}-{}", std::process::id(), dir.file_name().unwrap().to_string_lossy()));
    let _ = fs::remove_dir_all(&tmp);
    fs::create_dir_all(&tmp).map_err(|e| fail(format!("{}: {e}", tmp.display())))?;
    let meta = CacheMeta { version: VERSION.to_owned(), schema: stages.schema.clone(), jitter: stages.jitter.clone() };
    let write = || -> Result<(), IoError> {
        io::write_matrix(&tmp.join("features.bin"), stages.features.view())?;
        io::write_matrix(&tmp.join(REPRESENTATIONS_FILE), stages.representations.view())?;
        io::write_bytes(&tmp.join("meta.json"), &serde_json::to_vec(&meta).expect("serializable"))
    };
    if let Err(e) = write() {
        let _ = fs::remove_dir_all(&tmp);
        return Err(fail(e.to_string()));
    }
    let _ = fs::remove_dir_all(dir);
    fs::rename(&tmp, dir).map_err(|e| fail(format!("{}: {e}", dir.display())))
}

fn compute_stages(dataset: &SpatialDataset, config: &PipelineConfig, timer: &mut Timer) -> Result<Stages, PipelineError> {
    let spatial = timer.time("graph", || build_spatial_graph(dataset.coords.view(), &config.niche)).stage("graph")?;
    let lifted = timer.time("lift", || khop_lift(&spatial.graph, config.niche.hop_k)).stage("lift")?;
    let feats = timer
        .time("featurize", || {
            let norm = lognormalize(dataset.expression.view())?;
            let op = DiffusionOperator::new(&lifted);
            hyperedge_features(&lifted, norm.view(), dataset, &config.niche, &op)
        })
        .stage("featurize")?;
    let representations = timer
        .time("wavelets", || niche_representations(&lifted, feats.values.view(), &config.wavelets.scales))
        .stage("wavelets")?;
    if representations.iter().any(|v| !v.is_finite()) {
        return Err(PipelineError::new("wavelets", ErrorKind::Numerical, "representations contain non-finite values"));
    }
    Ok(Stages { features: feats.values, schema: feats.column_schema, representations, jitter: spatial.jitter })
}

fn embedding_metrics(features: ArrayView2<'_, f64>, labels: &[usize], config: &PipelineConfig) -> Result<EmbeddingMetrics, PipelineError> {
    let (probe, probe_skipped) = match linear_probe(features, labels, &config.eval) {
        Ok(report) => (Some(report), None),
        Err(e @ (EvalError::SingleClass | EvalError::ClassTooSmall { .. })) => (None, Some(e.to_string())),
        Err(e) => return Err(e).stage("eval"),
    };
    let standardized = standardize_columns(features);
    let (vendi, vendi_skipped) = match vendi_score(standardized.view(), &config.metrics.vendi_kernel) {
        Ok(v) => (Some(v), None),
        Err(e @ EvalError::ZeroRow { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e).stage("eval"),
    };
    Ok(EmbeddingMetrics { dim: features.ncols(), probe, probe_skipped, vendi, vendi_skipped })
}

fn representation_headers(schema: &[FeatureColumn], dataset: &SpatialDataset, j: usize) -> Vec<String> {
    let base: Vec<String> = schema.iter().map(|c| c.header(dataset)).collect();
    let mut out = Vec::with_capacity(base.len() * (j + 1));
    for b in 0..=j {
        let prefix = if b < j { format!("psi{b}") } else { "phi".to_owned() };
        out.extend(base.iter().map(|h| format!("{prefix}:{h}")));
    }
    out
}

struct Staging {
    dir: PathBuf,
    files: Vec<&'static str>,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, PipelineError> {
        let fail = |e: std::io::Error| PipelineError::new("output", ErrorKind::Io, format!("{}: {e}", out.display()));
        fs::create_dir_all(out).map_err(fail)?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).map_err(fail)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn path(&mut self, name: &'static str) -> PathBuf {
        self.files.push(name);
        self.dir.join(name)
    }

    fn commit(self, out: &Path) -> Result<(), PipelineError> {
        for name in &self.files {
            fs::rename(self.dir.join(name), out.join(name))
                .map_err(|e| PipelineError::new("output", ErrorKind::Io, format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// Runs the pipeline described by `config_path` (TOML config or manifest).
pub fn run_pipeline(config_path: &Path, mode: Mode, opts: &RunOptions) -> Result<PipelineOutcome, PipelineError> {
    let loaded = load_config(config_path)?;
    run_with_config(loaded, mode, opts)
}

pub fn run_with_config(loaded: LoadedConfig, mode: Mode, opts: &RunOptions) -> Result<PipelineOutcome, PipelineError> {
    let mut config = loaded.config;
    if let Some(seed) = opts.seed {
        let n = config.eval.seeds.len() as u64;
        config.eval.seeds = (0..n).map(|i| seed.wrapping_add(i)).collect();
        config.cluster.seed = seed;
    }
    let out_dir = opts.out.clone().or_else(|| config.output.dir.clone()).ok_or_else(|| {
        PipelineError::new("config", ErrorKind::Config, "no output directory: set output.dir or pass --out")
    })?;
    let mut timer = Timer { timings: Vec::new() };

    let inputs = vec![digest_file("cells", &config.input.cells)?, digest_file("expression", &config.input.expression)?];
    for expected in &loaded.expected_inputs {
        if let Some(actual) = inputs.iter().find(|d| d.role == expected.role) {
            if actual.sha256 != expected.sha256 {
                return Err(PipelineError::new(
                    "ingest",
                    ErrorKind::Data,
                    format!("{} changed since the manifest was written (sha256 {} != {})", actual.path.display(), actual.sha256, expected.sha256),
                ));
            }
        }
    }
    let dataset = timer.time("ingest", || io::ingest(&config.input.cells, &config.input.expression)).stage("ingest")?;
    dataset.validate().stage("ingest")?;

    let key = cache_key(&config, &inputs);
    let cache_root = if opts.no_cache {
        None
    } else {
        Some(
            opts.cache_dir
                .clone()
                .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
                .unwrap_or_else(|| out_dir.join(".cache")),
        )
    };
    let cache_dir = cache_root.map(|r| r.join(&key));
    let cached = cache_dir.as_deref().and_then(load_cached);
    let hit = cached.is_some();
    let stages = match cached {
        Some(s) => s,
        None => {
            let s = compute_stages(&dataset, &config, &mut timer)?;
            if let Some(dir) = &cache_dir {
                store_cached(dir, &s)?;
            }
            s
        }
    };
    let m = stages.representations.nrows();
    if m != dataset.n_cells() {
        return Err(PipelineError::new("wavelets", ErrorKind::Data, format!("{m} niches for {} cells", dataset.n_cells())));
    }

    let mut staging = Staging::new(&out_dir)?;
    let mut metrics = None;
    let mut clusters = None;
    let mut summary = None;

    if mode == Mode::Run {
        let headers: Vec<String> = stages.schema.iter().map(|c| c.header(&dataset)).collect();
        timer
            .time("write", || -> Result<(), IoError> {
                io::write_labeled_csv(&staging.path(FEATURES_FILE), "anchor", &dataset.cell_ids, &headers, stages.features.view())?;
                io::write_matrix(&staging.path(REPRESENTATIONS_FILE), stages.representations.view())?;
                if config.output.csv_mirror {
                    let rep_headers = representation_headers(&stages.schema, &dataset, config.wavelets.scales.j());
                    io::write_labeled_csv(
                        &staging.path(REPRESENTATIONS_CSV_FILE),
                        "anchor",
                        &dataset.cell_ids,
                        &rep_headers,
                        stages.representations.view(),
                    )?;
                }
                Ok(())
            })
            .stage("output")?;
    }

    if matches!(mode, Mode::Run | Mode::ClusterOnly) {
        let standardized = standardize_columns(stages.representations.view());
        let result = timer.time("cluster", || spectral_cluster(standardized.view(), &config.cluster)).stage("cluster")?;
        let path = staging.path(CLUSTERS_FILE);
        io::write_rows(
            &path,
            &["cell_id", "cluster"],
            dataset.cell_ids.iter().zip(&result.labels).map(|(id, c)| [id.clone(), c.to_string()]),
        )
        .stage("output")?;
        summary = Some(ClusterSummary {
            n_clusters: config.cluster.n_clusters,
            inertia: result.inertia,
            eigenvalues: result.eigenvalues,
            degenerate_eigenspace: result.degenerate_eigenspace,
            eigen_converged: result.eigen_converged,
        });
        clusters = Some(result.labels);
    }

    if matches!(mode, Mode::Run | Mode::EvalOnly) {
        let label = config.metrics.label.categorical(&dataset);
        let report = timer.time("eval", || -> Result<MetricsReport, PipelineError> {
            let representations = embedding_metrics(stages.representations.view(), label.codes(), &config)?;
            let baseline = if config.metrics.baseline {
                let raw = lognormalize(dataset.expression.view()).stage("eval")?;
                Some(embedding_metrics(raw.view(), label.codes(), &config)?)
            } else {
                None
            };
            Ok(MetricsReport {
                label: config.metrics.label.name().to_owned(),
                class_names: label.vocabulary().to_vec(),
                n_niches: m,
                representations,
                baseline,
                clustering: summary.clone(),
            })
        })?;
        let body = serde_json::to_vec_pretty(&report).expect("serializable");
        io::write_bytes(&staging.path(METRICS_FILE), &body).stage("output")?;
        metrics = Some(report);
    }

    let outputs = staging
        .files
        .clone()
        .into_iter()
        .map(|name| {
            let bytes = fs::read(staging.dir.join(name))
                .map_err(|e| PipelineError::new("output", ErrorKind::Io, format!("{name}: {e}")))?;
            Ok(FileDigest { role: name.to_owned(), path: out_dir.join(name), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let manifest = RunManifest {
        version: VERSION.to_owned(),
        command: mode.name().to_owned(),
        config: PipelineConfig {
            output: OutputConfig { dir: Some(out_dir.clone()), ..config.output.clone() },
            ..config.clone()
        },
        inputs,
        outputs,
        stage_timings: timer.timings,
        seeds: SeedRegistry { eval_split_seeds: config.eval.seeds.clone(), cluster_seed: config.cluster.seed },
        threads: opts.threads,
        jitter: stages.jitter.clone(),
        cache: CacheInfo { key, dir: cache_dir, hit },
        clustering: summary,
    };
    let body = serde_json::to_vec_pretty(&manifest).expect("serializable");
    io::write_bytes(&staging.path(MANIFEST_FILE), &body).stage("output")?;
    staging.commit(&out_dir)?;
    Ok(PipelineOutcome { out_dir, manifest, metrics, clusters })
}

/// Summary printed by `ingest-check`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub cells: usize,
    pub genes: usize,
    pub expression_format: String,
    pub vocabulary_sizes: Vec<(String, usize)>,
}

pub fn ingest_check(config_path: &Path) -> Result<IngestSummary, PipelineError> {
    let config = load_config(config_path)?.config;
    let format = io::detect_expression_format(&config.input.expression).stage("ingest")?;
    let dataset = io::ingest(&config.input.cells, &config.input.expression).stage("ingest")?;
    dataset.validate().stage("ingest")?;
    lognormalize(dataset.expression.view()).stage("ingest")?;
    let mut vocabulary_sizes: Vec<(String, usize)> = Granularity::ALL
        .iter()
        .map(|&g| (g.name().to_owned(), dataset.labels(g).vocabulary().len()))
        .collect();
    vocabulary_sizes.push(("condition".to_owned(), dataset.condition.vocabulary().len()));
    Ok(IngestSummary {
        cells: dataset.n_cells(),
        genes: dataset.n_genes(),
        expression_format: format!("{format:?}").to_lowercase(),
        vocabulary_sizes,
    })
}
