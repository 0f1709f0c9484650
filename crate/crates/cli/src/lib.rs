//! `proxigraph` command line. Each subcommand is one pipeline stage that
//! reads its inputs from files and writes its outputs to files.
//!
//! Exit status: 0 success, 1 audit violation, 2 usage error, 3 I/O or
//! format failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use proxigraph::bench::{compute_recall_at_1, run_sweep, run_trajectory_study, ExperimentConfig};
use proxigraph::datasets::{
    brute_force_knn, estimate_lid, generate_uniform, load_dataset, write_fvecs, DatasetMeta,
    GroundTruth, DEFAULT_LID_NEIGHBORS, DEFAULT_LID_SAMPLE,
};
use proxigraph::diversify::{
    add_reverse_edges, audit_gd, dpg_prune, gd_prune, read_sidecar, DiversifiedGraph, Provenance,
};
use proxigraph::hnsw::{hnsw_build, HnswIndex, HnswParams};
use proxigraph::nndescent::{build_knn_graph, NnDescentParams};
use proxigraph::search::{query_rng, FlatSearchParams, SearchOutcome, Searcher};
use proxigraph::{AdjacencyGraph, Error, Metric};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "proxigraph",
    version,
    about = "Graph-based nearest neighbor search toolkit"
)]
pub struct Cli {
    /// Worker threads for ground truth and LID scans; timed loops stay sequential
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write uniform synthetic vectors as .fvecs plus a .meta sidecar
    Gen(GenArgs),
    /// Exhaustive ground truth: writes <out>.ivecs and <out>.fvecs
    Gt(GtArgs),
    /// Estimate local intrinsic dimensionality
    Lid(LidArgs),
    /// Build a k-NN graph, a diversified graph or an HNSW index
    Build(BuildArgs),
    /// Query a built graph or index
    Search(SearchArgs),
    /// Run an ef sweep from a TOML experiment config
    Bench(ConfigArgs),
    /// Run the trajectory study from a TOML experiment config
    Trajectory(TrajectoryArgs),
    /// Check structural invariants of a graph or index file
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of vectors
    #[arg(long)]
    pub n: usize,
    /// Dimension
    #[arg(long)]
    pub d: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metric recorded in the sidecar; cosine data is stored as generated
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    pub metric: MetricArg,
    /// Output .fvecs path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GtArgs {
    /// Base vectors (.fvecs)
    #[arg(long)]
    pub base: PathBuf,
    /// Query vectors (.fvecs)
    #[arg(long)]
    pub queries: PathBuf,
    /// Neighbors per query
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Output prefix
    #[arg(long)]
    pub out: PathBuf,
    /// Override the metric from the sidecar
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

#[derive(Debug, Args)]
pub struct LidArgs {
    /// Vectors (.fvecs)
    #[arg(long)]
    pub data: PathBuf,
    /// Neighbors per anchor
    #[arg(long, default_value_t = DEFAULT_LID_NEIGHBORS)]
    pub k: usize,
    /// Number of anchors
    #[arg(long, default_value_t = DEFAULT_LID_SAMPLE)]
    pub sample: usize,
    /// Anchor sampling seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the metric from the sidecar
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Kgraph,
    Gd,
    Dpg,
    Hnsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    L2,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::L2 => Metric::L2,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// What to build
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    /// Vectors (.fvecs)
    #[arg(long)]
    pub data: PathBuf,
    /// Output file
    #[arg(long)]
    pub out: PathBuf,
    /// Source k-NN graph, required for gd and dpg
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Skip the reverse-neighbor union for gd and dpg
    #[arg(long)]
    pub no_reverse: bool,
    /// k-NN graph degree
    #[arg(long, default_value_t = 40)]
    pub k: usize,
    /// NN-Descent sample rate
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// NN-Descent termination threshold
    #[arg(long, default_value_t = 0.001)]
    pub delta: f64,
    /// NN-Descent iteration limit
    #[arg(long, default_value_t = 30)]
    pub max_iterations: usize,
    /// HNSW target degree
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    /// HNSW construction pool size
    #[arg(long, default_value_t = 200)]
    pub ef_construction: usize,
    /// Build seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the metric from the sidecar
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Graph (KNNG) or index (HNSW) file
    #[arg(long)]
    pub index: PathBuf,
    /// Vectors the artifact was built from (.fvecs)
    #[arg(long)]
    pub data: PathBuf,
    /// Query vectors (.fvecs)
    #[arg(long)]
    pub queries: PathBuf,
    /// Search pool size
    #[arg(long, default_value_t = 64)]
    pub ef: usize,
    /// Results per query
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Random starting vertices for flat graphs; defaults to ef
    #[arg(long)]
    pub seed_count: Option<usize>,
    /// Seed for the per-query generators
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ground-truth prefix; prints Recall@1 when given
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Print results for at most this many queries
    #[arg(long, default_value_t = 10)]
    pub show: usize,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Descending bucket edges, comma separated; derived from traces if absent
    #[arg(long, value_delimiter = ',')]
    pub edges: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Graph (KNNG) or index (HNSW) file
    #[arg(long)]
    pub index: PathBuf,
    /// Vectors, enables distance and occlusion checks (.fvecs)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Source k-NN graph of a diversified graph, enables the degree cap check
    #[arg(long)]
    pub source: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs it, returning the exit
/// status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Domain(_) => EXIT_USAGE,
        Error::Format { .. } | Error::Resource(_) | Error::Io(_) => EXIT_IO,
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    if cli.threads == 0 {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Gt(a) => gt(a, cli.threads),
        Command::Lid(a) => lid(a, cli.threads),
        Command::Build(a) => build(a),
        Command::Search(a) => search(a),
        Command::Bench(a) => bench(a, cli.threads),
        Command::Trajectory(a) => trajectory(a, cli.threads),
        Command::Audit(a) => audit(a),
    }
}

fn gen(a: GenArgs) -> Result<i32, Error> {
    let set = generate_uniform(a.n, a.d, a.seed)?;
    write_fvecs(&set, &a.out)?;
    let name = a
        .out
        .file_stem()
        .map_or_else(|| "uniform".into(), |s| s.to_string_lossy().into_owned());
    DatasetMeta {
        name,
        n: a.n,
        d: a.d,
        metric: a.metric.into(),
        seed: Some(a.seed),
        normalized: false,
    }
    .save_for(&a.out)?;
    println!(
        "wrote {} vectors of dimension {} to {}",
        a.n,
        a.d,
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn gt(a: GtArgs, threads: usize) -> Result<i32, Error> {
    let (base, _) = load_dataset(&a.base, a.metric.map(Into::into))?;
    let (queries, _) = load_dataset(&a.queries, Some(base.metric()))?;
    let timed = brute_force_knn(&base, &queries, a.k, threads)?;
    timed.truth.save(&a.out)?;
    println!(
        "{} queries, k = {}, {:.3}s exhaustive scan; wrote {}.ivecs and {}.fvecs",
        queries.len(),
        a.k,
        timed.elapsed.as_secs_f64(),
        a.out.display(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn lid(a: LidArgs, threads: usize) -> Result<i32, Error> {
    let (data, _) = load_dataset(&a.data, a.metric.map(Into::into))?;
    let est = estimate_lid(&data, a.k, a.sample, a.seed, threads)?;
    println!(
        "lid {:.4} (k = {}, anchors {} of {} sampled)",
        est.value, est.k_neighbors, est.anchors_used, est.sample_size
    );
    Ok(EXIT_OK)
}

fn build(a: BuildArgs) -> Result<i32, Error> {
    if matches!(a.algo, AlgoArg::Gd | AlgoArg::Dpg) && a.graph.is_none() {
        return Err(Error::Usage(
            "--algo gd and --algo dpg need a source k-NN graph via --graph".into(),
        ));
    }
    let (data, _) = load_dataset(&a.data, a.metric.map(Into::into))?;
    match a.algo {
        AlgoArg::Kgraph => {
            let params = NnDescentParams {
                rho: a.rho,
                delta: a.delta,
                max_iterations: a.max_iterations,
            };
            let g = build_knn_graph(&data, a.k, params, a.seed)?;
            g.graph().save(&a.out)?;
            println!(
                "k-NN graph: {} vertices, K = {}, {} iterations, {} distance evaluations",
                g.graph().len(),
                a.k,
                g.stats.iterations,
                g.stats.distance_evaluations
            );
        }
        AlgoArg::Gd | AlgoArg::Dpg => {
            let source = AdjacencyGraph::load(a.graph.as_ref().unwrap())?;
            let mut g = if a.algo == AlgoArg::Gd {
                gd_prune(&source, &data)?
            } else {
                dpg_prune(&source, &data)?
            };
            if !a.no_reverse {
                g = add_reverse_edges(g)?;
            }
            g.save(&a.out)?;
            println!(
                "{}: {} edges, mean degree {:.2}, max degree {}",
                g.provenance,
                g.graph.edge_count(),
                g.graph.mean_degree(),
                g.graph.max_degree()
            );
        }
        AlgoArg::Hnsw => {
            let index = hnsw_build(
                &data,
                HnswParams {
                    m: a.m,
                    ef_construction: a.ef_construction,
                    seed: a.seed,
                },
            )?;
            index.save(&a.out)?;
            println!(
                "HNSW: {} vertices, max level {}, levels {:?}",
                index.len(),
                index.max_level(),
                index.level_histogram()
            );
        }
    }
    Ok(EXIT_OK)
}

enum Artifact {
    Graph(AdjacencyGraph),
    Index(HnswIndex),
}

fn load_artifact(path: &Path) -> Result<Artifact, Error> {
    let bytes = fs::read(path)?;
    match bytes.get(..4) {
        Some(b"KNNG") => Ok(Artifact::Graph(AdjacencyGraph::from_bytes(&bytes)?)),
        Some(b"HNSW") => Ok(Artifact::Index(HnswIndex::from_bytes(&bytes)?)),
        _ => Err(Error::Format {
            offset: 0,
            msg: format!(
                "{} is neither a KNNG graph nor an HNSW index",
                path.display()
            ),
        }),
    }
}

fn search(a: SearchArgs) -> Result<i32, Error> {
    let (data, _) = load_dataset(&a.data, None)?;
    let (queries, _) = load_dataset(&a.queries, Some(data.metric()))?;
    let artifact = load_artifact(&a.index)?;
    let truth = a.truth.as_deref().map(GroundTruth::load).transpose()?;
    let mut searcher = Searcher::new(data.len());
    let mut tops = Vec::with_capacity(queries.len());
    let mut evals = 0usize;
    for q in 0..queries.len() {
        let query = queries.row(q);
        let out: SearchOutcome = match &artifact {
            Artifact::Index(index) => {
                index.search_with(&mut searcher, &data, query, a.ef, a.k, false)?
            }
            Artifact::Graph(g) => {
                let params = FlatSearchParams {
                    ef: a.ef,
                    k: a.k,
                    seed_count: a.seed_count.unwrap_or(a.ef),
                };
                searcher.flat(g, &data, query, params, &mut query_rng(a.seed, q), false)?
            }
        };
        evals += out.evaluations;
        if q < a.show {
            let row: Vec<String> = out
                .neighbors
                .iter()
                .map(|e| format!("{}:{:.6}", e.id, e.dist))
                .collect();
            println!("query {q}: {}", row.join(" "));
        }
        tops.push(out.neighbors[0]);
    }
    let mean = evals as f64 / queries.len().max(1) as f64;
    print!("{} queries, mean evaluations {mean:.1}", queries.len());
    if let Some(t) = truth {
        if t.len() < queries.len() {
            return Err(Error::Usage(
                "ground truth has fewer rows than queries".into(),
            ));
        }
        let ids: Vec<u32> = (0..queries.len()).flat_map(|q| t.ids(q).to_vec()).collect();
        let dists: Vec<f32> = (0..queries.len())
            .flat_map(|q| t.dists(q).to_vec())
            .collect();
        let t = GroundTruth::new(t.k(), ids, dists)?;
        print!(", Recall@1 {:.4}", compute_recall_at_1(&tops, &t)?);
    }
    println!();
    Ok(EXIT_OK)
}

fn load_config(path: &Path, threads: usize) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.threads = threads;
    Ok(cfg)
}

fn bench(a: ConfigArgs, threads: usize) -> Result<i32, Error> {
    let cfg = load_config(&a.config, threads)?;
    let report = run_sweep(&cfg)?;
    println!("algo,ef,recall_at_1,mean_evals,eval_speedup,wall_speedup");
    for r in &report.records {
        println!(
            "{},{},{:.4},{:.1},{:.2},{:.2}",
            r.algo, r.ef, r.recall_at_1, r.mean_evals, r.eval_speedup, r.wall_speedup
        );
    }
    for (algo, msg) in &report.failures {
        eprintln!("{algo} failed: {msg}");
    }
    println!("wrote {}", report.csv_path.display());
    Ok(EXIT_OK)
}

fn trajectory(a: TrajectoryArgs, threads: usize) -> Result<i32, Error> {
    let cfg = load_config(&a.config, threads)?;
    let report = run_trajectory_study(&cfg, a.edges)?;
    let edges: Vec<String> = report.edges.iter().map(|e| format!("{e:.4}")).collect();
    println!("edges {}", edges.join(","));
    for (algo, h) in &report.histograms {
        let counts: Vec<String> = h.counts.iter().map(u64::to_string).collect();
        println!("{algo}: {} (total {})", counts.join(","), h.total());
    }
    for (algo, msg) in &report.failures {
        eprintln!("{algo} failed: {msg}");
    }
    for p in &report.csv_paths {
        println!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn audit(a: AuditArgs) -> Result<i32, Error> {
    let data = a
        .data
        .as_deref()
        .map(|p| load_dataset(p, None))
        .transpose()?
        .map(|d| d.0);
    let mut problems = Vec::new();
    match load_artifact(&a.index)? {
        Artifact::Index(index) => {
            problems.extend(index.audit());
            println!(
                "HNSW: {} vertices, max level {}, levels {:?}, layer-0 reachability {:.4}",
                index.len(),
                index.max_level(),
                index.level_histogram(),
                index.bottom_reachability()
            );
        }
        Artifact::Graph(g) => {
            problems.extend(g.audit_structure());
            if let Err(e) = g.ensure_sorted() {
                problems.push(e.to_string());
            }
            let sidecar = read_sidecar(&DiversifiedGraph::sidecar_path(&a.index))?;
            if let Some(d) = &data {
                problems.extend(g.audit_distances(d));
            }
            let source = a.source.as_deref().map(AdjacencyGraph::load).transpose()?;
            match sidecar {
                Some((prov, digest)) => {
                    if let Some(src) = &source {
                        if src.digest() != digest {
                            problems.push("source graph digest does not match the sidecar".into());
                        }
                    }
                    if prov.has_reverse() && !g.is_symmetric() {
                        problems.push(format!("{prov} graph is not symmetric"));
                    }
                    if let (Provenance::Gd, Some(d)) = (prov, &data) {
                        problems.extend(audit_gd(&g, d, source.as_ref()));
                    }
                    if let (Some(src), Some(d)) = (&source, &data) {
                        let mut expect = match prov {
                            Provenance::Gd | Provenance::GdReverse => gd_prune(src, d)?,
                            Provenance::Dpg | Provenance::DpgReverse => dpg_prune(src, d)?,
                        };
                        if prov.has_reverse() {
                            expect = add_reverse_edges(expect)?;
                        }
                        if expect.graph != g {
                            problems.push(format!(
                                "graph differs from {prov} recomputed from the source"
                            ));
                        }
                    }
                    println!(
                        "{prov} graph: {} vertices, {} edges",
                        g.len(),
                        g.edge_count()
                    );
                }
                None => println!("graph: {} vertices, {} edges", g.len(), g.edge_count()),
            }
        }
    }
    if problems.is_empty() {
        println!("audit passed");
        Ok(EXIT_OK)
    } else {
        for p in problems.iter().take(20) {
            println!("violation: {p}");
        }
        println!("audit failed: {} violations", problems.len());
        Ok(EXIT_VIOLATION)
    }
}
