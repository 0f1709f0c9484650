//! End-to-end acceptance checks, one printed verdict per criterion.
//!
//! Runs at full desk scale (n = 200 000 for the comparative studies), so
//! it takes several minutes on one core. Expensive builds are cached and
//! shared between criteria; each criterion's time includes the builds it
//! triggered first.

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxigraph::bench::{
    build_methods, collect_traces, compute_recall_at_1, read_records_csv, run_sweep,
    run_trajectory_study, sweep_method, trajectory_from_built, write_records_csv, Algorithm,
    BenchRecord, Built, BuiltMethod, ExperimentConfig, Workload,
};
use proxigraph::datasets::{
    brute_force_knn, decode_fvecs, decode_ivecs, encode_fvecs, encode_ivecs, estimate_lid,
    exhaustive_knn, generate_uniform, DatasetMeta, GroundTruth, IntRows,
};
use proxigraph::diversify::{add_reverse_edges, audit_gd, dpg_prune, gd_prune, DiversifiedGraph};
use proxigraph::hnsw::{hnsw_build, HnswIndex, HnswParams};
use proxigraph::nndescent::{build_knn_graph, exact_knn_graph, graph_recall, NnDescentParams};
use proxigraph::search::{
    best_first_search, query_rng, FlatSearchParams, RangeHistogram, SearchTrace, Searcher,
};
use proxigraph::{distance, AdjacencyGraph, Metric, Neighbor, VectorSet};

const N: usize = 200_000;
const SEED: u64 = 1;
const FINE_EF: [usize; 30] = [
    1, 2, 3, 4, 5, 6, 8, 10, 12, 14, 16, 20, 24, 28, 32, 40, 48, 56, 64, 72, 80, 88, 96, 112, 128,
    160, 192, 256, 384, 512,
];

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Shared full-scale workloads and builds, keyed by dimension.
#[derive(Default)]
struct Cache {
    work: BTreeMap<usize, Workload>,
    built: BTreeMap<(usize, Algorithm), BuiltMethod>,
    traces: Vec<SearchTrace>,
}

impl Cache {
    fn config(d: usize) -> ExperimentConfig {
        ExperimentConfig::synthetic(&format!("uniform-d{d}"), N, d, SEED)
    }

    fn workload(&mut self, d: usize) -> &Workload {
        self.work
            .entry(d)
            .or_insert_with(|| Workload::prepare(&Self::config(d)).expect("workload"))
    }

    fn ensure_built(&mut self, d: usize, algos: &[Algorithm]) -> Result<(), String> {
        let missing: Vec<Algorithm> = algos
            .iter()
            .copied()
            .filter(|a| !self.built.contains_key(&(d, *a)))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        self.workload(d);
        let base = &self.work[&d].base;
        for (algo, m) in build_methods(&Self::config(d), base, &missing) {
            let m = m.map_err(|e| format!("{algo} build failed: {e}"))?;
            self.built.insert((d, algo), m);
        }
        Ok(())
    }

    fn method(&self, d: usize, a: Algorithm) -> &BuiltMethod {
        &self.built[&(d, a)]
    }
}

/// Sweeps the fine ef grid until every method has reached `target` at
/// a common ef. Returns records grouped per method.
fn sweep_until(
    cache: &mut Cache,
    d: usize,
    algos: &[Algorithm],
    target: f64,
) -> Result<BTreeMap<Algorithm, Vec<BenchRecord>>, String> {
    cache.ensure_built(d, algos)?;
    let mut cfg = Cache::config(d);
    let work = &cache.work[&d];
    let mut out: BTreeMap<Algorithm, Vec<BenchRecord>> = BTreeMap::new();
    for ef in FINE_EF {
        cfg.ef = vec![ef];
        let mut all = true;
        for &a in algos {
            let r = sweep_method(&cfg, work, cache.method(d, a)).map_err(|e| e.to_string())?;
            all &= r[0].recall_at_1 >= target;
            out.entry(a).or_default().extend(r);
        }
        if all {
            return Ok(out);
        }
    }
    Err(format!(
        "not every method reached Recall@1 {target} by ef {}",
        FINE_EF[FINE_EF.len() - 1]
    ))
}

/// The smallest swept ef at which every method reaches the target.
fn shared_point(records: &BTreeMap<Algorithm, Vec<BenchRecord>>, target: f64) -> Option<usize> {
    let first = records.values().next()?;
    first.iter().map(|r| r.ef).find(|&ef| {
        records
            .values()
            .all(|rs| rs.iter().any(|r| r.ef == ef && r.recall_at_1 >= target))
    })
}

fn at(records: &BTreeMap<Algorithm, Vec<BenchRecord>>, a: Algorithm, ef: usize) -> &BenchRecord {
    records[&a].iter().find(|r| r.ef == ef).unwrap()
}

/// Each method's own smallest ef reaching the target.
fn own_point(
    records: &BTreeMap<Algorithm, Vec<BenchRecord>>,
    a: Algorithm,
    target: f64,
) -> &BenchRecord {
    records[&a]
        .iter()
        .find(|r| r.recall_at_1 >= target)
        .unwrap()
}

// ---------------------------------------------------------------------------
// naive oracles

fn oracle_knn(base: &VectorSet, q: &[f32], k: usize) -> Vec<(u32, f32)> {
    let mut all: Vec<(u32, f32)> = (0..base.len())
        .map(|i| (i as u32, distance(base.row(i), q, base.metric()).unwrap()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn pair(data: &VectorSet, a: u32, b: u32) -> f32 {
    distance(data.row(a as usize), data.row(b as usize), data.metric()).unwrap()
}

fn oracle_gd(list: &[Neighbor], v: usize, data: &VectorSet) -> Vec<u32> {
    let cap = list.len().div_ceil(2);
    let mut kept: Vec<u32> = Vec::new();
    for e in list {
        if kept.len() == cap {
            break;
        }
        let to_v = pair(data, e.id, v as u32);
        if kept.iter().all(|&s| to_v < pair(data, e.id, s)) {
            kept.push(e.id);
        }
    }
    kept
}

fn oracle_dpg(list: &[Neighbor], v: usize, data: &VectorSet) -> Vec<u32> {
    let mut kept: Vec<u32> = list
        .iter()
        .filter(|e| {
            let to_v = pair(data, e.id, v as u32);
            list.iter()
                .all(|s| s.id == e.id || to_v <= pair(data, e.id, s.id))
        })
        .map(|e| e.id)
        .collect();
    if kept.is_empty() && !list.is_empty() {
        kept.push(list[0].id);
    }
    kept
}

fn ids(list: &[Neighbor]) -> Vec<u32> {
    list.iter().map(|e| e.id).collect()
}

// ---------------------------------------------------------------------------
// criteria

fn oracle_equivalence(_: &mut Cache) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut instances = 0;
    for d in [2usize, 8, 32] {
        for rep in 0..8u64 {
            let n = rng.gen_range(60..=if rep == 0 { 2000 } else { 700 });
            let metric = if rep % 3 == 2 {
                Metric::Cosine
            } else {
                Metric::L2
            };
            let mut base = generate_uniform(n, d, 100 + rep)
                .unwrap()
                .with_metric(metric);
            let mut queries = generate_uniform(20, d, 200 + rep)
                .unwrap()
                .with_metric(metric);
            if metric == Metric::Cosine {
                base.normalize().unwrap();
                queries.normalize().unwrap();
            }
            let k = rng.gen_range(1..=10);
            let tag = format!("d={d} n={n} {metric}");

            let truth = brute_force_knn(&base, &queries, k, 2).unwrap().truth;
            for q in 0..queries.len() {
                let want = oracle_knn(&base, queries.row(q), k);
                let got: Vec<(u32, f32)> =
                    truth.neighbors(q).iter().map(|e| (e.id, e.dist)).collect();
                ensure(
                    got == want,
                    format!("brute_force_knn differs ({tag}, query {q})"),
                )?;
            }

            let source = build_knn_graph(&base, 16.min(n - 1), NnDescentParams::default(), rep)
                .unwrap()
                .into_graph();
            let gd = gd_prune(&source, &base).unwrap().graph;
            let dpg = dpg_prune(&source, &base).unwrap().graph;
            for v in 0..n {
                let list = source.neighbors(v);
                ensure(
                    ids(gd.neighbors(v)) == oracle_gd(list, v, &base),
                    format!("gd_prune differs ({tag}, vertex {v})"),
                )?;
                ensure(
                    ids(dpg.neighbors(v)) == oracle_dpg(list, v, &base),
                    format!("dpg_prune differs ({tag}, vertex {v})"),
                )?;
            }

            let mut searcher = Searcher::new(n);
            for q in 0..5 {
                let want = oracle_knn(&base, queries.row(q), k);
                let params = FlatSearchParams::new(n, k);
                let out = searcher
                    .flat(
                        &source,
                        &base,
                        queries.row(q),
                        params,
                        &mut query_rng(3, q),
                        false,
                    )
                    .unwrap();
                let got: Vec<(u32, f32)> = out.neighbors.iter().map(|e| (e.id, e.dist)).collect();
                ensure(
                    got == want,
                    format!("best_first_search ef=n differs ({tag}, query {q})"),
                )?;
            }

            let index = hnsw_build(
                &base,
                HnswParams {
                    m: 8,
                    ef_construction: 64,
                    seed: rep,
                },
            )
            .unwrap();
            if index.bottom_reachability() == 1.0 {
                for q in 0..5 {
                    let want = oracle_knn(&base, queries.row(q), k);
                    let out = index
                        .search_with(&mut searcher, &base, queries.row(q), n, k, false)
                        .unwrap();
                    let got: Vec<(u32, f32)> =
                        out.neighbors.iter().map(|e| (e.id, e.dist)).collect();
                    ensure(
                        got == want,
                        format!("hnsw search ef=n differs ({tag}, query {q})"),
                    )?;
                }
            }
            instances += 1;
        }
    }
    Ok(format!(
        "{instances} instances, d in {{2, 8, 32}}, L2 and cosine"
    ))
}

fn nndescent_quality(_: &mut Cache) -> Check {
    let n = 10_000usize;
    let data = generate_uniform(n, 8, SEED).unwrap();
    let g =
        build_knn_graph(&data, 20, NnDescentParams::default(), SEED).map_err(|e| e.to_string())?;
    let exact = exact_knn_graph(&data, 20, 1).map_err(|e| e.to_string())?;
    let recall = graph_recall(g.graph(), &exact, 10).map_err(|e| e.to_string())?;
    let fraction = g.stats.distance_evaluations as f64 / (n * (n - 1) / 2) as f64;
    let detail = format!(
        "recall@10 {recall:.4}, {:.1}% of all-pairs evaluations, {} iterations",
        100.0 * fraction,
        g.stats.iterations
    );
    ensure(recall >= 0.95 && fraction < 0.30, detail.clone())?;
    Ok(detail)
}

fn lid_reproduction(_: &mut Cache) -> Check {
    let reference = [(4usize, 3.6f64), (8, 6.5), (16, 11.6), (32, 19.4)];
    let mut values = Vec::new();
    for (d, want) in reference {
        let data = generate_uniform(100_000, d, SEED).unwrap();
        let est = estimate_lid(
            &data,
            proxigraph::datasets::DEFAULT_LID_NEIGHBORS,
            proxigraph::datasets::DEFAULT_LID_SAMPLE,
            SEED,
            1,
        )
        .map_err(|e| e.to_string())?;
        values.push((d, est.value, want));
    }
    let detail = values
        .iter()
        .map(|(d, v, w)| format!("d={d}: {v:.2} (ref {w})"))
        .collect::<Vec<_>>()
        .join(", ");
    for (_, v, w) in &values {
        ensure(
            (v - w).abs() <= 0.15 * w,
            format!("outside +-15%: {detail}"),
        )?;
    }
    ensure(
        values.windows(2).all(|p| p[1].1 > p[0].1),
        format!("not increasing: {detail}"),
    )?;
    Ok(detail)
}

fn hierarchy_ratio(cache: &mut Cache, d: usize, lo: f64, hi: f64) -> Check {
    let algos = [Algorithm::Hnsw, Algorithm::FlatHnsw];
    let recs = sweep_until(cache, d, &algos, 0.95)?;
    let ef = shared_point(&recs, 0.95).ok_or("no shared operating point")?;
    let (h, f) = (
        at(&recs, Algorithm::Hnsw, ef),
        at(&recs, Algorithm::FlatHnsw, ef),
    );
    let ratio = f.mean_evals / h.mean_evals;
    let (oh, of) = (
        own_point(&recs, Algorithm::Hnsw, 0.95),
        own_point(&recs, Algorithm::FlatHnsw, 0.95),
    );
    let detail = format!(
        "ef {ef}: flat-HNSW {:.1} / HNSW {:.1} evals = {ratio:.2} (recall {:.3} / {:.3}); \
         own smallest ef {} / {} gives {:.2}; wall speedup HNSW {:.1}",
        f.mean_evals,
        h.mean_evals,
        f.recall_at_1,
        h.recall_at_1,
        of.ef,
        oh.ef,
        of.mean_evals / oh.mean_evals,
        h.wall_speedup
    );
    ensure(ratio >= lo && ratio <= hi, detail.clone())?;
    Ok(detail)
}

fn low_d_trend(cache: &mut Cache) -> Check {
    hierarchy_ratio(cache, 4, 1.5, f64::INFINITY)
}

fn high_d_trend(cache: &mut Cache) -> Check {
    hierarchy_ratio(cache, 32, 0.8, 1.3)
}

fn diversification_trend(cache: &mut Cache) -> Check {
    let algos = [Algorithm::Hnsw, Algorithm::KGraph, Algorithm::KGraphGd];
    let recs = sweep_until(cache, 16, &algos, 0.9)?;
    let ef = shared_point(&recs, 0.9).ok_or("no shared operating point")?;
    let h = at(&recs, Algorithm::Hnsw, ef).mean_evals;
    let k = at(&recs, Algorithm::KGraph, ef).mean_evals;
    let g = at(&recs, Algorithm::KGraphGd, ef).mean_evals;
    let own = |a| own_point(&recs, a, 0.9).mean_evals;
    let detail = format!(
        "ef {ef}: KGraph+GD {g:.1}, KGraph {k:.1}, HNSW {h:.1} evals, GD/HNSW {:.2}; \
         at own smallest ef: {:.1}, {:.1}, {:.1}",
        g / h,
        own(Algorithm::KGraphGd),
        own(Algorithm::KGraph),
        own(Algorithm::Hnsw)
    );
    ensure(g <= k && g / h <= 1.3, detail.clone())?;
    Ok(detail)
}

fn trajectory_shape(cache: &mut Cache) -> Check {
    let algos = [Algorithm::Hnsw, Algorithm::FlatHnsw, Algorithm::KGraphGd];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for d in [4usize, 32] {
        cache.ensure_built(d, &algos)?;
        let mut cfg = Cache::config(d);
        cfg.output_dir = dir.path().to_owned();
        let work = cache.work[&d]
            .subset_queries(cfg.trajectory.queries)
            .map_err(|e| e.to_string())?;
        let methods: Vec<_> = algos
            .iter()
            .map(|&a| (a, Ok(cache.method(d, a).clone())))
            .collect();
        let report =
            trajectory_from_built(&cfg, &work, &methods, None).map_err(|e| e.to_string())?;
        for (a, m) in &methods {
            let m = m.as_ref().unwrap();
            let traces = collect_traces(
                &m.built,
                &work,
                cfg.trajectory.ef,
                cfg.trajectory.queries,
                cfg.seed,
            )
            .map_err(|e| e.to_string())?;
            let total: u64 = traces.iter().map(|t| t.total_evaluations() as u64).sum();
            ensure(
                report.histograms[a].total() == total,
                format!("{a} d={d}: bucket sums differ from totals"),
            )?;
            cache.traces.extend(traces);
        }
        let h = &report.histograms;
        let half = report.edges.len().saturating_sub(1) / 2;
        if d == 4 {
            let far = |a: Algorithm| h[&a].counts[..half].iter().sum::<u64>();
            let (fh, ff) = (far(Algorithm::Hnsw), far(Algorithm::FlatHnsw));
            detail.push(format!("d=4 far-half evals HNSW {fh} vs flat-HNSW {ff}"));
            ensure(fh < ff, detail.join("; "))?;
        } else {
            for a in algos {
                let c = &h[&a].counts;
                let near: u64 = c[c.len() - 2..].iter().sum();
                let share = near as f64 / h[&a].total() as f64;
                detail.push(format!("d=32 {a} nearest-two share {share:.2}"));
                ensure(share > 0.5, detail.join("; "))?;
            }
        }
    }
    Ok(detail.join("; "))
}

fn level_tail_ok(index: &HnswIndex) -> Result<(), String> {
    let n = index.len() as f64;
    let hist = index.level_histogram();
    let m = index.m() as f64;
    for l in 1..hist.len() {
        let at_least: usize = hist[l..].iter().sum();
        let p = m.powi(-(l as i32));
        let sigma = (n * p * (1.0 - p)).sqrt().max(1.0);
        ensure(
            (at_least as f64 - n * p).abs() <= 3.0 * sigma,
            format!(
                "level >= {l}: {at_least} vertices, expected {:.1} +- {:.1}",
                n * p,
                3.0 * sigma
            ),
        )?;
    }
    Ok(())
}

fn structural_invariants(cache: &mut Cache) -> Check {
    let mut audited = 0;
    let keys: Vec<(usize, Algorithm)> = cache.built.keys().copied().collect();
    for (d, a) in keys {
        let data = &cache.work[&d].base;
        let m = cache.method(d, a);
        let tag = format!("{a} d={d}");
        match &m.built {
            Built::Hierarchical(index) => {
                let problems = index.audit();
                ensure(
                    problems.is_empty(),
                    format!("{tag}: {}", problems.join("; ")),
                )?;
                level_tail_ok(index).map_err(|e| format!("{tag}: {e}"))?;
                let reach = index.bottom_reachability();
                ensure(
                    reach >= 0.999,
                    format!("{tag}: layer-0 reachability {reach}"),
                )?;
            }
            Built::Flat(g) => {
                let mut problems = g.audit_structure();
                problems.extend(g.audit_distances(data));
                ensure(
                    problems.is_empty(),
                    format!("{tag}: {}", problems.join("; ")),
                )?;
                ensure(g.ensure_sorted().is_ok(), format!("{tag}: unsorted lists"))?;
                match a {
                    Algorithm::KGraph => {
                        ensure(
                            g.lists().iter().all(|l| l.len() == 40),
                            format!("{tag}: degree != K"),
                        )?;
                        let gd = gd_prune(g, data).map_err(|e| e.to_string())?;
                        let p = audit_gd(&gd.graph, data, Some(g));
                        ensure(p.is_empty(), format!("{tag} GD: {}", p.join("; ")))?;
                        let union = add_reverse_edges(gd).map_err(|e| e.to_string())?;
                        ensure(
                            union.graph.is_symmetric(),
                            format!("{tag}: GD union not symmetric"),
                        )?;
                        if let Some(cached) = cache.built.get(&(d, Algorithm::KGraphGd)) {
                            if let Built::Flat(c) = &cached.built {
                                ensure(
                                    c == &union.graph,
                                    format!("{tag}: cached KGraph+GD differs"),
                                )?;
                            }
                        }
                    }
                    Algorithm::KGraphGd | Algorithm::Dpg => {
                        ensure(g.is_symmetric(), format!("{tag}: not symmetric"))?;
                    }
                    Algorithm::FlatHnsw => {
                        ensure(g.max_degree() <= 32, format!("{tag}: degree above 2M"))?;
                    }
                    _ => {}
                }
            }
            Built::Exhaustive => {}
        }
        audited += 1;
    }

    ensure(!cache.traces.is_empty(), "no traces recorded")?;
    ensure(
        cache.traces.iter().all(|t| t.is_monotone()),
        "non-monotone best-so-far trace",
    )?;

    // Each vertex evaluated once: an unbounded pool on a connected graph
    // reaches every vertex, so the count must be exactly n.
    let small = generate_uniform(1500, 8, 5).unwrap();
    let index = hnsw_build(
        &small,
        HnswParams {
            m: 8,
            ef_construction: 64,
            seed: 5,
        },
    )
    .unwrap();
    ensure(
        index.bottom_reachability() == 1.0,
        "small index disconnected",
    )?;
    let flat = index.bottom_layer(&small);
    let mut searcher = Searcher::new(1500);
    for q in 0..10 {
        let query = small.row(q * 97);
        let h = index
            .search_with(&mut searcher, &small, query, 1500, 1, true)
            .unwrap();
        ensure(
            h.evaluations == 1500,
            format!("HNSW evaluated {} times for n = 1500", h.evaluations),
        )?;
        let f = best_first_search(
            &flat,
            &small,
            query,
            FlatSearchParams {
                ef: 1500,
                k: 1,
                seed_count: 1,
            },
            &mut query_rng(0, q),
        )
        .unwrap();
        ensure(
            f.evaluations == 1500,
            format!("flat search evaluated {} times for n = 1500", f.evaluations),
        )?;
        for ef in [8, 64] {
            let h = index
                .search_with(&mut searcher, &small, query, ef, 1, true)
                .unwrap();
            let f = best_first_search(
                &flat,
                &small,
                query,
                FlatSearchParams::new(ef, 1),
                &mut query_rng(0, q),
            )
            .unwrap();
            ensure(
                h.evaluations <= 1500 && f.evaluations <= 1500,
                "more evaluations than vertices",
            )?;
            ensure(
                h.trace.unwrap().is_monotone() && f.trace.unwrap().is_monotone(),
                "non-monotone trace",
            )?;
        }
    }
    Ok(format!(
        "{audited} full-scale artifacts audited, {} traces monotone, single evaluation per vertex",
        cache.traces.len()
    ))
}

fn strip_wall_clock(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [&f[..7], &f[8..9]].concat().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(_: &mut Cache) -> Check {
    let run = |dir: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let data = generate_uniform(3000, 8, 9).unwrap();
        let queries = generate_uniform(50, 8, 10).unwrap();
        let mut out = vec![("fvecs".into(), encode_fvecs(&data))];
        let gt = exhaustive_knn(&data, &queries, 10, 3).unwrap();
        gt.save(&dir.join("gt")).unwrap();
        out.push(("gt.ivecs".into(), fs::read(dir.join("gt.ivecs")).unwrap()));
        out.push(("gt.fvecs".into(), fs::read(dir.join("gt.fvecs")).unwrap()));
        let knn = build_knn_graph(&data, 20, NnDescentParams::default(), 9)
            .unwrap()
            .into_graph();
        out.push(("knng".into(), knn.to_bytes()));
        for (name, g) in [
            (
                "gd",
                add_reverse_edges(gd_prune(&knn, &data).unwrap()).unwrap(),
            ),
            (
                "dpg",
                add_reverse_edges(dpg_prune(&knn, &data).unwrap()).unwrap(),
            ),
        ] {
            let path = dir.join(name);
            g.save(&path).unwrap();
            out.push((name.into(), fs::read(&path).unwrap()));
            out.push((
                format!("{name}.prov"),
                fs::read(DiversifiedGraph::sidecar_path(&path)).unwrap(),
            ));
        }
        let index = hnsw_build(
            &data,
            HnswParams {
                m: 12,
                ef_construction: 80,
                seed: 9,
            },
        )
        .unwrap();
        out.push(("hnsw".into(), index.to_bytes()));
        let lid = estimate_lid(&data, 50, 500, 9, 2).unwrap();
        out.push(("lid".into(), lid.value.to_le_bytes().to_vec()));

        let mut cfg = ExperimentConfig::synthetic("det", 3000, 8, 9);
        cfg.queries = 100;
        cfg.ef = vec![4, 16, 64];
        cfg.kgraph.k = 20;
        cfg.hnsw.m = 12;
        cfg.hnsw.ef_construction = 80;
        cfg.output_dir = dir.to_owned();
        let sweep = run_sweep(&cfg).unwrap();
        let text = fs::read_to_string(&sweep.csv_path).unwrap();
        out.push(("sweep.csv".into(), strip_wall_clock(&text).into_bytes()));
        let traj = run_trajectory_study(&cfg, None).unwrap();
        for p in traj.csv_paths {
            out.push((
                p.file_name().unwrap().to_string_lossy().into(),
                fs::read(&p).unwrap(),
            ));
        }
        out
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (run(a.path()), run(b.path()));
    ensure(ra.len() == rb.len(), "different artifact sets")?;
    for ((name, x), (_, y)) in ra.iter().zip(&rb) {
        ensure(x == y, format!("{name} differs between identical runs"))?;
    }

    // Worker count must not leak into results.
    let data = generate_uniform(2000, 8, 4).unwrap();
    let queries = generate_uniform(40, 8, 5).unwrap();
    let one = exhaustive_knn(&data, &queries, 5, 1).unwrap();
    let four = exhaustive_knn(&data, &queries, 5, 4).unwrap();
    ensure(one == four, "ground truth depends on thread count")?;
    let l1 = estimate_lid(&data, 20, 300, 1, 1).unwrap().value;
    let l4 = estimate_lid(&data, 20, 300, 1, 4).unwrap().value;
    ensure(l1.to_bits() == l4.to_bits(), "LID depends on thread count")?;
    Ok(format!(
        "{} artifacts byte-identical across reruns; thread count invariant",
        ra.len()
    ))
}

fn format_fidelity(_: &mut Cache) -> Check {
    let golden = [0x02, 0, 0, 0, 0, 0, 0x80, 0x3F, 0, 0, 0, 0x40];
    let v = decode_fvecs(&golden).map_err(|e| e.to_string())?;
    ensure(
        v.len() == 1 && v.row(0) == [1.0, 2.0],
        "golden fvecs decodes wrong",
    )?;
    ensure(encode_fvecs(&v) == golden, "golden fvecs encodes wrong")?;
    let one = VectorSet::new(2, vec![1.0, 2.0], Metric::L2).unwrap();
    ensure(encode_fvecs(&one) == golden, "golden fvecs from vector")?;
    for cut in 1..golden.len() {
        ensure(
            decode_fvecs(&golden[..cut]).is_err(),
            format!("truncated fvecs at {cut} accepted"),
        )?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut odd: Vec<f32> = vec![-0.0, f32::MIN_POSITIVE, 1e-45, f32::MAX, f32::MIN, -1.5e-40];
    odd.extend((0..600).map(|_| {
        f32::from_bits(rng.gen::<u32>() & 0x7F7F_FFFF) * if rng.gen() { 1.0 } else { -1.0 }
    }));
    let set = VectorSet::new(6, odd, Metric::L2).unwrap();
    let back = decode_fvecs(&encode_fvecs(&set)).map_err(|e| e.to_string())?;
    ensure(
        back.as_slice()
            .iter()
            .zip(set.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "fvecs round trip not bit-exact",
    )?;
    let ints = IntRows::new(4, (0..400).map(|_| rng.gen::<i32>()).collect()).unwrap();
    let ib = encode_ivecs(&ints);
    ensure(
        encode_ivecs(&decode_ivecs(&ib).map_err(|e| e.to_string())?) == ib,
        "ivecs round trip",
    )?;

    let data = generate_uniform(800, 5, 3).unwrap();
    let knn = build_knn_graph(&data, 12, NnDescentParams::default(), 3)
        .unwrap()
        .into_graph();
    let kb = knn.to_bytes();
    ensure(
        AdjacencyGraph::from_bytes(&kb)
            .map_err(|e| e.to_string())?
            .to_bytes()
            == kb,
        "KNNG round trip",
    )?;
    ensure(
        AdjacencyGraph::from_bytes(&kb[..kb.len() - 1]).is_err(),
        "truncated KNNG accepted",
    )?;
    let dir = tempfile::tempdir().unwrap();
    let gd = add_reverse_edges(gd_prune(&knn, &data).unwrap()).unwrap();
    gd.save(&dir.path().join("gd.knng")).unwrap();
    ensure(
        DiversifiedGraph::load(&dir.path().join("gd.knng")).map_err(|e| e.to_string())? == gd,
        "diversified graph round trip",
    )?;
    let index = hnsw_build(
        &data,
        HnswParams {
            m: 6,
            ef_construction: 30,
            seed: 3,
        },
    )
    .unwrap();
    let hb = index.to_bytes();
    ensure(
        HnswIndex::from_bytes(&hb)
            .map_err(|e| e.to_string())?
            .to_bytes()
            == hb,
        "HNSW round trip",
    )?;
    ensure(
        HnswIndex::from_bytes(&hb[..hb.len() - 2]).is_err(),
        "truncated HNSW accepted",
    )?;
    let exported = index.bottom_layer(&data);
    ensure(
        AdjacencyGraph::from_bytes(&exported.to_bytes()).unwrap() == exported,
        "bottom layer export round trip",
    )?;

    let queries = generate_uniform(30, 5, 4).unwrap();
    let gt = exhaustive_knn(&data, &queries, 7, 1).unwrap();
    gt.save(&dir.path().join("gt")).unwrap();
    ensure(
        GroundTruth::load(&dir.path().join("gt")).map_err(|e| e.to_string())? == gt,
        "ground truth round trip",
    )?;

    let meta = DatasetMeta {
        name: "u".into(),
        n: 800,
        d: 5,
        metric: Metric::Cosine,
        seed: Some(3),
        normalized: true,
    };
    ensure(
        DatasetMeta::from_text(&meta.to_text()).map_err(|e| e.to_string())? == meta,
        "metadata round trip",
    )?;

    let records: Vec<BenchRecord> = (0..20)
        .map(|i| BenchRecord {
            dataset: format!("set{i}"),
            algo: Algorithm::ALL[i % 6],
            ef: 1 << (i % 9),
            k: 1,
            recall_at_1: rng.gen(),
            mean_evals: rng.gen::<f64>() * 1e5,
            eval_speedup: rng.gen::<f64>() * 1e3,
            wall_speedup: 1.0 / 3.0,
            query_count: 1000,
            build_seconds: rng.gen(),
        })
        .collect();
    let csv = dir.path().join("r.csv");
    write_records_csv(&records, &csv).map_err(|e| e.to_string())?;
    ensure(
        read_records_csv(&csv).map_err(|e| e.to_string())? == records,
        "bench CSV round trip",
    )?;
    let hist = RangeHistogram {
        edges: vec![2.0, 1.0, 0.5, 0.1],
        counts: vec![3, 0, 7],
        queries: 2,
    };
    hist.write_csv(&dir.path().join("h.csv"))
        .map_err(|e| e.to_string())?;
    ensure(
        RangeHistogram::read_csv(&dir.path().join("h.csv"), 2).map_err(|e| e.to_string())? == hist,
        "histogram CSV round trip",
    )?;
    let cfg = ExperimentConfig::synthetic("c", 10, 2, 1);
    ensure(
        ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).map_err(|e| e.to_string())? == cfg,
        "config round trip",
    )?;
    ensure(
        compute_recall_at_1(&[Neighbor::new(0, 0.0)], &gt).is_err(),
        "recall count mismatch accepted",
    )?;
    Ok("golden 12-byte fixture, fvecs/ivecs, KNNG, HNSW, provenance, ground truth, metadata, CSV and config round trips".into())
}

fn main() {
    type Criterion = (u8, &'static str, f64, fn(&mut Cache) -> Check);
    let criteria: [Criterion; 10] = [
        (1, "oracle equivalence", 60.0, oracle_equivalence),
        (2, "NN-Descent quality", 120.0, nndescent_quality),
        (3, "LID of uniform data", 300.0, lid_reproduction),
        (4, "hierarchy gain at d=4", 600.0, low_d_trend),
        (5, "no hierarchy gain at d=32", 900.0, high_d_trend),
        (
            6,
            "GD lifts KGraph to HNSW at d=16",
            900.0,
            diversification_trend,
        ),
        (7, "trajectory histogram shape", 600.0, trajectory_shape),
        (
            8,
            "structural invariants",
            f64::INFINITY,
            structural_invariants,
        ),
        (9, "determinism", f64::INFINITY, determinism),
        (10, "format fidelity", f64::INFINITY, format_fidelity),
    ];
    let filter: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut cache = Cache::default();
    let mut failed = 0;
    println!("acceptance: {} criteria", criteria.len());
    for (id, name, budget, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut cache)))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(d) if secs <= budget => (true, d),
            Ok(d) => (false, format!("{d}; took {secs:.0}s, budget {budget:.0}s")),
            Err(e) => (false, e),
        };
        failed += usize::from(!pass);
        println!(
            "[{}] {id:>2} {name} ({secs:.1}s): {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} failed");
        std::process::exit(1);
    }
    println!("acceptance: all passed");
}
