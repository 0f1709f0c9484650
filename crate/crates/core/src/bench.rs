//! Experiment harness: ef sweeps with Recall@1 and speedup figures, and
//! trajectory histograms of where the search spends its evaluations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datasets::truth::scan_top_k;
use crate::datasets::{
    brute_force_knn, generate_uniform, load_dataset, GroundTruth, TimedGroundTruth,
};
use crate::diversify::{add_reverse_edges, dpg_prune, gd_prune};
use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, Neighbor};
use crate::hnsw::{hnsw_build, HnswIndex, HnswParams};
use crate::metric::{Metric, VectorSet};
use crate::nndescent::{build_knn_graph, NnDescentParams};
use crate::search::{
    bucket_trace, default_edges, query_rng, FlatSearchParams, RangeHistogram, SearchOutcome,
    SearchTrace, Searcher,
};

pub const CSV_HEADER: &str =
    "dataset,algo,ef,k,recall_at_1,mean_evals,eval_speedup,wall_speedup,query_count,build_seconds";
pub const DEFAULT_EF_SWEEP: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "HNSW")]
    Hnsw,
    #[serde(rename = "flat-HNSW")]
    FlatHnsw,
    #[serde(rename = "KGraph")]
    KGraph,
    #[serde(rename = "KGraph+GD")]
    KGraphGd,
    #[serde(rename = "DPG")]
    Dpg,
    #[serde(rename = "brute")]
    Brute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Hnsw,
        Algorithm::FlatHnsw,
        Algorithm::KGraph,
        Algorithm::KGraphGd,
        Algorithm::Dpg,
        Algorithm::Brute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Hnsw => "HNSW",
            Algorithm::FlatHnsw => "flat-HNSW",
            Algorithm::KGraph => "KGraph",
            Algorithm::KGraphGd => "KGraph+GD",
            Algorithm::Dpg => "DPG",
            Algorithm::Brute => "brute",
        }
    }

    /// File-name friendly form.
    pub fn slug(self) -> &'static str {
        match self {
            Algorithm::Hnsw => "hnsw",
            Algorithm::FlatHnsw => "flat-hnsw",
            Algorithm::KGraph => "kgraph",
            Algorithm::KGraphGd => "kgraph-gd",
            Algorithm::Dpg => "dpg",
            Algorithm::Brute => "brute",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s) || a.slug() == s)
            .ok_or_else(|| Error::usage(format!("unknown algorithm `{s}`")))
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub dataset: String,
    pub algo: Algorithm,
    pub ef: usize,
    pub k: usize,
    pub recall_at_1: f64,
    pub mean_evals: f64,
    pub eval_speedup: f64,
    pub wall_speedup: f64,
    pub query_count: usize,
    pub build_seconds: f64,
}

pub fn write_records_csv(records: &[BenchRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    for r in records {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
    let header = r
        .headers()
        .map_err(csv_io)?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::format(0, format!("unexpected header `{header}`")));
    }
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let offset = e.position().map_or(0, |p| p.byte());
                Error::format(offset, e.to_string())
            })
        })
        .collect()
}

fn csv_io(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        let offset = e.position().map_or(0, |p| p.byte());
        Error::format(offset, e.to_string())
    }
}

/// Fraction of queries whose top result is the true nearest neighbor, by
/// id or by distance within 1e-6 relative.
pub fn compute_recall_at_1(results: &[Neighbor], truth: &GroundTruth) -> Result<f64> {
    if results.len() != truth.len() {
        return Err(Error::usage(format!(
            "{} results for {} queries",
            results.len(),
            truth.len()
        )));
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let hits = results
        .iter()
        .enumerate()
        .filter(|(q, r)| {
            let (id, d) = (truth.ids(*q)[0], truth.dists(*q)[0] as f64);
            r.id == id || (r.dist as f64 - d).abs() <= 1e-6 * d.abs().max(f64::MIN_POSITIVE)
        })
        .count();
    Ok(hits as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Synthetic uniform data: `n`, `d` and `seed`.
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub seed: Option<u64>,
    /// File data: base and query `.fvecs`, optional ground-truth prefix.
    pub base: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HnswSection {
    pub m: usize,
    pub ef_construction: usize,
}

impl Default for HnswSection {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KGraphSection {
    pub k: usize,
    pub rho: f64,
    pub delta: f64,
    pub max_iterations: usize,
}

impl Default for KGraphSection {
    fn default() -> Self {
        let p = NnDescentParams::default();
        Self {
            k: 40,
            rho: p.rho,
            delta: p.delta,
            max_iterations: p.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub queries: usize,
    pub ef: usize,
    pub buckets: usize,
    /// Explicit descending bucket edges; derived from the traces if absent.
    pub edges: Option<Vec<f64>>,
    pub algorithms: Vec<Algorithm>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            queries: 50,
            ef: 128,
            buckets: 10,
            edges: None,
            algorithms: vec![Algorithm::Hnsw, Algorithm::FlatHnsw, Algorithm::KGraphGd],
        }
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_ef() -> Vec<usize> {
    DEFAULT_EF_SWEEP.to_vec()
}

fn default_one() -> usize {
    1
}

fn default_queries() -> usize {
    1000
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Everything that determines a run. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub k: usize,
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default = "default_ef")]
    pub ef: Vec<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Workers for ground truth and KGraph audit scans. Timed query loops
    /// are always sequential.
    #[serde(default = "default_one")]
    pub threads: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub hnsw: HnswSection,
    #[serde(default)]
    pub kgraph: KGraphSection,
    #[serde(default)]
    pub trajectory: TrajectorySection,
}

impl ExperimentConfig {
    /// Synthetic uniform config with defaults everywhere else.
    pub fn synthetic(name: &str, n: usize, d: usize, seed: u64) -> Self {
        Self {
            name: name.to_owned(),
            metric: None,
            seed,
            k: 1,
            queries: default_queries(),
            ef: default_ef(),
            output_dir: default_output(),
            threads: 1,
            algorithms: default_algorithms(),
            dataset: DatasetSpec {
                n: Some(n),
                d: Some(d),
                seed: Some(seed),
                base: None,
                query: None,
                truth: None,
            },
            hnsw: HnswSection::default(),
            kgraph: KGraphSection::default(),
            trajectory: TrajectorySection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start as u64);
            Error::format(offset, e.message().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::usage(e.to_string()))
    }

    /// Reads a config file; relative paths resolve against its directory,
    /// and referenced input files must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        for p in [&mut cfg.dataset.base, &mut cfg.dataset.query]
            .into_iter()
            .flatten()
        {
            fix(p);
            if !p.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} does not exist", p.display()),
                )));
            }
        }
        if let Some(p) = &mut cfg.dataset.truth {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::usage("name must be a non-empty file-name fragment"));
        }
        if self.ef.is_empty() || self.ef[0] == 0 || self.ef.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::usage(
                "ef sweep must be positive and strictly ascending",
            ));
        }
        if self.k == 0 || self.k > self.ef[0] {
            return Err(Error::usage("k must be in 1..=smallest ef"));
        }
        if self.queries == 0 || self.threads == 0 {
            return Err(Error::usage("queries and threads must be at least 1"));
        }
        let ds = &self.dataset;
        let synthetic = ds.n.is_some() || ds.d.is_some();
        let files = ds.base.is_some() || ds.query.is_some();
        if synthetic == files {
            return Err(Error::usage(
                "dataset needs either n and d, or base and query paths",
            ));
        }
        if synthetic && (ds.n.is_none() || ds.d.is_none()) {
            return Err(Error::usage("synthetic dataset needs both n and d"));
        }
        if files && (ds.base.is_none() || ds.query.is_none()) {
            return Err(Error::usage("file dataset needs both base and query"));
        }
        if self.trajectory.queries == 0 || self.trajectory.ef == 0 {
            return Err(Error::usage("trajectory queries and ef must be at least 1"));
        }
        Ok(())
    }
}

/// Base vectors, queries and exhaustive ground truth for one dataset.
#[derive(Debug, Clone)]
pub struct Workload {
    pub name: String,
    pub base: VectorSet,
    pub queries: VectorSet,
    pub truth: GroundTruth,
    /// Wall time of the in-process exhaustive scan over all queries.
    pub exhaustive: Duration,
}

impl Workload {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let ds = &cfg.dataset;
        let (base, queries, given) = if let (Some(n), Some(d)) = (ds.n, ds.d) {
            let seed = ds.seed.unwrap_or(cfg.seed);
            let mut base = generate_uniform(n, d, seed)?;
            let mut queries = generate_uniform(cfg.queries, d, query_seed(seed))?;
            if let Some(m) = cfg.metric {
                base = base.with_metric(m);
                queries = queries.with_metric(m);
                if m == Metric::Cosine {
                    base.normalize()?;
                    queries.normalize()?;
                }
            }
            (base, queries, None)
        } else {
            let (base, _) = load_dataset(ds.base.as_deref().unwrap(), cfg.metric)?;
            let (queries, _) = load_dataset(ds.query.as_deref().unwrap(), Some(base.metric()))?;
            let take: Vec<usize> = (0..queries.len().min(cfg.queries)).collect();
            let given = ds.truth.as_deref().map(GroundTruth::load).transpose()?;
            (base, queries.select(&take), given)
        };
        let TimedGroundTruth { truth, elapsed } = brute_force_knn(&base, &queries, cfg.k, 1)?;
        let truth = match given {
            Some(g) if g.len() >= queries.len() && g.k() >= 1 => {
                let k = g.k();
                let q = queries.len();
                GroundTruth::new(k, g_ids(&g, q), g_dists(&g, q))?
            }
            Some(_) => return Err(Error::usage("ground truth has fewer rows than queries")),
            None => truth,
        };
        Ok(Self {
            name: cfg.name.clone(),
            base,
            queries,
            truth,
            exhaustive: elapsed,
        })
    }

    pub fn subset_queries(&self, count: usize) -> Result<Self> {
        let count = count.min(self.queries.len());
        let take: Vec<usize> = (0..count).collect();
        let k = self.truth.k();
        Ok(Self {
            name: self.name.clone(),
            base: self.base.clone(),
            queries: self.queries.select(&take),
            truth: GroundTruth::new(k, g_ids(&self.truth, count), g_dists(&self.truth, count))?,
            exhaustive: self
                .exhaustive
                .mul_f64(count as f64 / self.queries.len() as f64),
        })
    }
}

fn g_ids(g: &GroundTruth, rows: usize) -> Vec<u32> {
    (0..rows).flat_map(|q| g.ids(q).iter().copied()).collect()
}

fn g_dists(g: &GroundTruth, rows: usize) -> Vec<f32> {
    (0..rows).flat_map(|q| g.dists(q).iter().copied()).collect()
}

fn query_seed(seed: u64) -> u64 {
    seed ^ 0x5155_4552_5953_4554
}

/// A searchable artifact.
#[derive(Debug, Clone)]
pub enum Built {
    Hierarchical(HnswIndex),
    Flat(AdjacencyGraph),
    Exhaustive,
}

#[derive(Debug, Clone)]
pub struct BuiltMethod {
    pub algo: Algorithm,
    pub built: Built,
    pub build_seconds: f64,
}

/// Builds the requested methods, sharing the HNSW index between HNSW and
/// flat-HNSW and the NN-Descent graph between KGraph, KGraph+GD and DPG.
/// Build time of derived graphs includes their source. Failures are
/// reported per method.
pub fn build_methods(
    cfg: &ExperimentConfig,
    data: &VectorSet,
    algos: &[Algorithm],
) -> Vec<(Algorithm, Result<BuiltMethod>)> {
    let wants = |a: Algorithm| algos.contains(&a);
    let hnsw = (wants(Algorithm::Hnsw) || wants(Algorithm::FlatHnsw)).then(|| {
        timed(|| {
            hnsw_build(
                data,
                HnswParams {
                    m: cfg.hnsw.m,
                    ef_construction: cfg.hnsw.ef_construction,
                    seed: cfg.seed,
                },
            )
        })
    });
    let kgraph = [Algorithm::KGraph, Algorithm::KGraphGd, Algorithm::Dpg]
        .into_iter()
        .any(wants)
        .then(|| {
            timed(|| {
                let p = NnDescentParams {
                    rho: cfg.kgraph.rho,
                    delta: cfg.kgraph.delta,
                    max_iterations: cfg.kgraph.max_iterations,
                };
                build_knn_graph(data, cfg.kgraph.k, p, cfg.seed).map(|g| g.into_graph())
            })
        });

    let mut out = Vec::new();
    for &algo in algos {
        let built = match algo {
            Algorithm::Brute => Ok((Built::Exhaustive, 0.0)),
            Algorithm::Hnsw | Algorithm::FlatHnsw => match hnsw.as_ref().unwrap() {
                (Ok(index), secs) => Ok(if algo == Algorithm::Hnsw {
                    (Built::Hierarchical(index.clone()), *secs)
                } else {
                    (Built::Flat(index.bottom_layer(data)), *secs)
                }),
                (Err(e), _) => Err(e.clone_lossy()),
            },
            Algorithm::KGraph | Algorithm::KGraphGd | Algorithm::Dpg => {
                match kgraph.as_ref().unwrap() {
                    (Ok(g), secs) => {
                        let (derived, extra) = timed(|| derive_graph(algo, g, data));
                        derived.map(|g| (Built::Flat(g), secs + extra))
                    }
                    (Err(e), _) => Err(e.clone_lossy()),
                }
            }
        };
        out.push((
            algo,
            built.map(|(built, build_seconds)| BuiltMethod {
                algo,
                built,
                build_seconds,
            }),
        ));
    }
    out
}

/// KGraph as is, or diversified with reverse edges added.
pub fn derive_graph(
    algo: Algorithm,
    knn: &AdjacencyGraph,
    data: &VectorSet,
) -> Result<AdjacencyGraph> {
    match algo {
        Algorithm::KGraph => Ok(knn.clone()),
        Algorithm::KGraphGd => Ok(add_reverse_edges(gd_prune(knn, data)?)?.graph),
        Algorithm::Dpg => Ok(add_reverse_edges(dpg_prune(knn, data)?)?.graph),
        other => Err(Error::usage(format!(
            "{other} is not derived from a k-NN graph"
        ))),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

impl Error {
    fn clone_lossy(&self) -> Error {
        match self {
            Error::Usage(m) => Error::Usage(m.clone()),
            Error::Domain(m) => Error::Domain(m.clone()),
            Error::Format { offset, msg } => Error::Format {
                offset: *offset,
                msg: msg.clone(),
            },
            Error::Resource(m) => Error::Resource(m.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}

#[allow(clippy::too_many_arguments)]
/// Runs one query against a built method. Flat methods start from `ef`
/// random seeds drawn from the per-query generator.
pub fn query_method(
    method: &Built,
    searcher: &mut Searcher,
    data: &VectorSet,
    query: &[f32],
    query_index: usize,
    ef: usize,
    k: usize,
    seed: u64,
    record_trace: bool,
) -> Result<SearchOutcome> {
    match method {
        Built::Hierarchical(index) => index.search_with(searcher, data, query, ef, k, record_trace),
        Built::Flat(graph) => {
            let mut params = FlatSearchParams::new(ef.min(graph.len()), k.min(graph.len()));
            params.seed_count = params.ef;
            let mut rng = query_rng(seed, query_index);
            searcher.flat(graph, data, query, params, &mut rng, record_trace)
        }
        Built::Exhaustive => {
            data.check_query(query)?;
            Ok(SearchOutcome {
                neighbors: scan_top_k(data, query, k, None),
                evaluations: data.len(),
                trace: None,
            })
        }
    }
}

/// Aggregate figures of one (method, ef) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub recall_at_1: f64,
    pub mean_evals: f64,
    pub wall: Duration,
}

/// Runs every query sequentially at one ef.
pub fn measure(
    method: &Built,
    work: &Workload,
    ef: usize,
    k: usize,
    seed: u64,
) -> Result<Measurement> {
    let mut searcher = Searcher::new(work.base.len());
    let mut tops = Vec::with_capacity(work.queries.len());
    let mut evals = 0u64;
    let start = Instant::now();
    for q in 0..work.queries.len() {
        let out = query_method(
            method,
            &mut searcher,
            &work.base,
            work.queries.row(q),
            q,
            ef,
            k,
            seed,
            false,
        )?;
        evals += out.evaluations as u64;
        tops.push(out.neighbors[0]);
    }
    let wall = start.elapsed();
    Ok(Measurement {
        recall_at_1: compute_recall_at_1(&tops, &work.truth)?,
        mean_evals: evals as f64 / work.queries.len() as f64,
        wall,
    })
}

/// Sweep results plus any methods that failed to build.
#[derive(Debug, Default)]
pub struct SweepReport {
    pub records: Vec<BenchRecord>,
    pub failures: Vec<(Algorithm, String)>,
    pub csv_path: PathBuf,
}

/// Sweeps every configured method over every configured ef, then writes
/// `<name>_sweep.csv` and `plot.py` under the output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let work = Workload::prepare(cfg)?;
    let methods = build_methods(cfg, &work.base, &cfg.algorithms);
    let mut report = SweepReport::default();
    for (algo, built) in methods {
        match built {
            Ok(m) => report.records.extend(sweep_method(cfg, &work, &m)?),
            Err(e) => report.failures.push((algo, e.to_string())),
        }
    }
    fs::create_dir_all(&cfg.output_dir)?;
    report.csv_path = cfg.output_dir.join(format!("{}_sweep.csv", cfg.name));
    write_records_csv(&report.records, &report.csv_path)?;
    write_plot_script(&cfg.output_dir)?;
    Ok(report)
}

/// One record per configured ef (a single row for brute force).
pub fn sweep_method(
    cfg: &ExperimentConfig,
    work: &Workload,
    m: &BuiltMethod,
) -> Result<Vec<BenchRecord>> {
    let efs: Vec<usize> = if m.algo == Algorithm::Brute {
        vec![cfg.k]
    } else {
        cfg.ef.clone()
    };
    let n = work.base.len() as f64;
    let exhaustive = work.exhaustive.as_secs_f64().max(1e-9);
    efs.into_iter()
        .map(|ef| {
            let r = measure(&m.built, work, ef, cfg.k, cfg.seed)?;
            Ok(BenchRecord {
                dataset: work.name.clone(),
                algo: m.algo,
                ef,
                k: cfg.k,
                recall_at_1: r.recall_at_1,
                mean_evals: r.mean_evals,
                eval_speedup: n / r.mean_evals,
                wall_speedup: exhaustive / r.wall.as_secs_f64().max(1e-9),
                query_count: work.queries.len(),
                build_seconds: m.build_seconds,
            })
        })
        .collect()
}

/// Traces of the first `count` queries at one ef.
pub fn collect_traces(
    method: &Built,
    work: &Workload,
    ef: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<SearchTrace>> {
    let mut searcher = Searcher::new(work.base.len());
    (0..count.min(work.queries.len()))
        .map(|q| {
            let out = query_method(
                method,
                &mut searcher,
                &work.base,
                work.queries.row(q),
                q,
                ef,
                1,
                seed,
                true,
            )?;
            Ok(out.trace.expect("trace requested"))
        })
        .collect()
}

#[derive(Debug)]
pub struct TrajectoryReport {
    pub edges: Vec<f64>,
    pub histograms: BTreeMap<Algorithm, RangeHistogram>,
    pub failures: Vec<(Algorithm, String)>,
    pub csv_paths: Vec<PathBuf>,
}

/// Histograms of evaluations per best-so-far distance range for the
/// trajectory methods. All methods share one set of edges: `edges` if
/// given, else the configured ones, else derived from the pooled traces.
pub fn run_trajectory_study(
    cfg: &ExperimentConfig,
    edges: Option<Vec<f64>>,
) -> Result<TrajectoryReport> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.queries = cfg.queries.max(cfg.trajectory.queries);
    let work = Workload::prepare(&cfg)?.subset_queries(cfg.trajectory.queries)?;
    let methods = build_methods(&cfg, &work.base, &cfg.trajectory.algorithms);
    trajectory_from_built(&cfg, &work, &methods, edges)
}

/// Trajectory study over already built methods.
pub fn trajectory_from_built(
    cfg: &ExperimentConfig,
    work: &Workload,
    methods: &[(Algorithm, Result<BuiltMethod>)],
    edges: Option<Vec<f64>>,
) -> Result<TrajectoryReport> {
    let t = &cfg.trajectory;
    let mut traces = BTreeMap::new();
    let mut failures = Vec::new();
    for (algo, built) in methods {
        match built {
            Ok(m) => {
                traces.insert(
                    *algo,
                    collect_traces(&m.built, work, t.ef, t.queries, cfg.seed)?,
                );
            }
            Err(e) => failures.push((*algo, e.to_string())),
        }
    }
    let edges = match edges.or_else(|| t.edges.clone()) {
        Some(e) => e,
        None => {
            let pooled: Vec<SearchTrace> = traces.values().flatten().cloned().collect();
            let nn: Vec<f32> = (0..work.truth.len().min(t.queries))
                .map(|q| work.truth.dists(q)[0])
                .collect();
            default_edges(&pooled, &nn, t.buckets)?
        }
    };
    fs::create_dir_all(&cfg.output_dir)?;
    let mut histograms = BTreeMap::new();
    let mut csv_paths = Vec::new();
    for (algo, tr) in &traces {
        let h = bucket_trace(tr, &edges)?;
        let path = cfg
            .output_dir
            .join(format!("{}_trajectory_{}.csv", cfg.name, algo.slug()));
        h.write_csv(&path)?;
        csv_paths.push(path);
        histograms.insert(*algo, h);
    }
    write_plot_script(&cfg.output_dir)?;
    Ok(TrajectoryReport {
        edges,
        histograms,
        failures,
        csv_paths,
    })
}

/// Smallest-ef record of `algo` reaching `target` recall, if any.
pub fn operating_point(
    records: &[BenchRecord],
    algo: Algorithm,
    target: f64,
) -> Option<&BenchRecord> {
    records
        .iter()
        .filter(|r| r.algo == algo && r.recall_at_1 >= target)
        .min_by_key(|r| r.ef)
}

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Recall@1 against speedup for every *_sweep.csv, and a bar chart for
every *_trajectory_*.csv, in the directory holding this script."""
import csv
import glob
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
out = sys.argv[1] if len(sys.argv) > 1 else here

for path in sorted(glob.glob(os.path.join(here, "*_sweep.csv"))):
    rows = list(csv.DictReader(open(path)))
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for algo in sorted({r["algo"] for r in rows}):
        rs = sorted((r for r in rows if r["algo"] == algo), key=lambda r: int(r["ef"]))
        for ax, col in zip(axes, ["eval_speedup", "wall_speedup"]):
            ax.plot([float(r["recall_at_1"]) for r in rs],
                    [float(r[col]) for r in rs], marker="o", label=algo)
    for ax, col in zip(axes, ["eval_speedup", "wall_speedup"]):
        ax.set_xlabel("Recall@1")
        ax.set_ylabel(col.replace("_", " "))
        ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.suptitle(os.path.basename(path)[: -len("_sweep.csv")])
    fig.tight_layout()
    fig.savefig(os.path.join(out, os.path.basename(path)[:-4] + ".png"), dpi=120)

traj = sorted(glob.glob(os.path.join(here, "*_trajectory_*.csv")))
if traj:
    fig, ax = plt.subplots(figsize=(9, 4))
    width = 0.8 / len(traj)
    for i, path in enumerate(traj):
        rows = list(csv.DictReader(open(path)))
        xs = [j + i * width for j in range(len(rows))]
        ax.bar(xs, [int(r["evaluations"]) for r in rows], width=width,
               label=os.path.basename(path)[:-4])
        ax.set_xticks([j + 0.4 for j in range(len(rows))])
        ax.set_xticklabels(["%.3g" % float(r["bucket_high"]) for r in rows], rotation=45)
    ax.set_xlabel("best distance so far (bucket upper edge, far to near)")
    ax.set_ylabel("evaluations")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(os.path.join(out, "trajectories.png"), dpi=120)
"#;

pub fn write_plot_script(dir: &Path) -> Result<PathBuf> {
    let path = dir.join("plot.py");
    fs::write(&path, PLOT_SCRIPT)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(name: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::synthetic(name, 600, 4, 3);
        cfg.queries = 60;
        cfg.ef = vec![2, 8, 32, 128];
        cfg.hnsw = HnswSection {
            m: 8,
            ef_construction: 40,
        };
        cfg.kgraph.k = 12;
        cfg.trajectory.queries = 20;
        cfg.trajectory.ef = 32;
        cfg
    }

    #[test]
    fn recall_rule() {
        let truth = GroundTruth::new(1, vec![3, 5], vec![1.0, 2.0]).unwrap();
        let exact = [Neighbor::new(3, 1.0), Neighbor::new(5, 2.0)];
        assert_eq!(compute_recall_at_1(&exact, &truth).unwrap(), 1.0);
        let wrong = [Neighbor::new(4, 1.5), Neighbor::new(6, 2.5)];
        assert_eq!(compute_recall_at_1(&wrong, &truth).unwrap(), 0.0);
        let tie = [Neighbor::new(9, 1.0), Neighbor::new(6, 2.5)];
        assert_eq!(compute_recall_at_1(&tie, &truth).unwrap(), 0.5);
        assert!(compute_recall_at_1(&exact[..1], &truth).is_err());
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
            assert_eq!(a.slug().parse::<Algorithm>().unwrap(), a);
        }
        assert!("annoy".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_toml() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            name = "u4"
            ef = [4, 16]
            algorithms = ["HNSW", "KGraph+GD"]
            [dataset]
            n = 100
            d = 4
            [hnsw]
            m = 8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.hnsw.ef_construction, 200);
        assert_eq!(cfg.algorithms, vec![Algorithm::Hnsw, Algorithm::KGraphGd]);
        assert_eq!(
            ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(),
            cfg
        );
        for bad in [
            "name = \"x\"\nef = [8, 4]\n[dataset]\nn = 1\nd = 1\n",
            "name = \"x\"\n[dataset]\nn = 1\n",
            "name = \"x\"\n[dataset]\nn = 1\nd = 1\nbase = \"a\"\nquery = \"b\"\n",
            "name = \"x\"\nbogus = 1\n[dataset]\nn = 1\nd = 1\n",
        ] {
            assert!(ExperimentConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_writes_round_trippable_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny("t");
        cfg.output_dir = dir.path().to_owned();
        let report = run_sweep(&cfg).unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(report.records.len(), 5 * 4 + 1);
        let text = fs::read_to_string(&report.csv_path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_records_csv(&report.csv_path).unwrap(), report.records);
        assert!(dir.path().join("plot.py").exists());

        let brute = report
            .records
            .iter()
            .find(|r| r.algo == Algorithm::Brute)
            .unwrap();
        assert_eq!(brute.recall_at_1, 1.0);
        assert_eq!(brute.mean_evals, 600.0);
        for r in &report.records {
            assert!((0.0..=1.0).contains(&r.recall_at_1));
            assert!(r.mean_evals <= 600.0 && r.eval_speedup > 0.0 && r.wall_speedup > 0.0);
        }
        for algo in [
            Algorithm::Hnsw,
            Algorithm::FlatHnsw,
            Algorithm::KGraphGd,
            Algorithm::Dpg,
        ] {
            let rs: Vec<_> = report.records.iter().filter(|r| r.algo == algo).collect();
            assert!(rs
                .windows(2)
                .all(|w| w[1].recall_at_1 >= w[0].recall_at_1 - 0.005));
            assert!(rs.last().unwrap().recall_at_1 >= 0.95, "{algo}");
        }
    }

    #[test]
    fn sweep_is_deterministic_apart_from_wall_clock() {
        let strip = |rs: Vec<BenchRecord>| {
            rs.into_iter()
                .map(|r| BenchRecord {
                    wall_speedup: 0.0,
                    build_seconds: 0.0,
                    ..r
                })
                .collect::<Vec<_>>()
        };
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny("d");
        cfg.output_dir = dir.path().to_owned();
        cfg.algorithms = vec![Algorithm::Hnsw, Algorithm::KGraphGd];
        let a = strip(run_sweep(&cfg).unwrap().records);
        let b = strip(run_sweep(&cfg).unwrap().records);
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_conserves_evaluations() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny("tr");
        cfg.output_dir = dir.path().to_owned();
        let report = run_trajectory_study(&cfg, None).unwrap();
        assert_eq!(report.histograms.len(), 3);
        assert_eq!(report.csv_paths.len(), 3);
        let work = Workload::prepare(&cfg).unwrap().subset_queries(20).unwrap();
        let methods = build_methods(&cfg, &work.base, &[Algorithm::Hnsw]);
        let traces = collect_traces(
            &methods[0].1.as_ref().unwrap().built,
            &work,
            32,
            20,
            cfg.seed,
        )
        .unwrap();
        let total: usize = traces.iter().map(|t| t.total_evaluations()).sum();
        assert_eq!(report.histograms[&Algorithm::Hnsw].total(), total as u64);
        let back = RangeHistogram::read_csv(&report.csv_paths[0], 20).unwrap();
        assert_eq!(back.counts, report.histograms[&Algorithm::Hnsw].counts);
    }
}
