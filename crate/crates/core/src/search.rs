//! Best-first search over flat graphs, and the per-query trajectory
//! instrumentation used to study where comparisons are spent.
//!
//! The pool holds the `ef` nearest vertices seen so far. Search repeatedly
//! expands the nearest unexpanded pool member, evaluating its unvisited
//! neighbors, and stops once that member is farther than the pool's worst.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, ByDist, Neighbor};
use crate::metric::VectorSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based index of the distance evaluation within the query.
    pub evaluation: u32,
    pub best: f32,
}

/// Best distance after every evaluation of one query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchTrace {
    pub steps: Vec<TraceStep>,
}

impl SearchTrace {
    pub fn total_evaluations(&self) -> usize {
        self.steps.len()
    }

    pub fn first_best(&self) -> Option<f32> {
        self.steps.first().map(|s| s.best)
    }

    pub fn final_best(&self) -> Option<f32> {
        self.steps.last().map(|s| s.best)
    }

    pub fn is_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].best <= w[0].best)
    }
}

/// Counts evaluations and, when asked, records the trajectory.
pub(crate) struct Probe {
    evaluations: usize,
    best: f32,
    trace: Option<SearchTrace>,
}

impl Probe {
    pub(crate) fn new(record: bool) -> Self {
        Self {
            evaluations: 0,
            best: f32::INFINITY,
            trace: record.then(SearchTrace::default),
        }
    }

    #[inline]
    pub(crate) fn record(&mut self, dist: f32) {
        self.evaluations += 1;
        if dist < self.best {
            self.best = dist;
        }
        if let Some(t) = &mut self.trace {
            t.steps.push(TraceStep {
                evaluation: self.evaluations as u32,
                best: self.best,
            });
        }
    }

    /// Counts an evaluation that does not bear on the query (build-time
    /// distances between indexed vertices).
    #[inline]
    pub(crate) fn record_silent(&mut self) {
        self.evaluations += 1;
    }

    pub(crate) fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub(crate) fn finish(self, neighbors: Vec<Neighbor>) -> SearchOutcome {
        SearchOutcome {
            neighbors,
            evaluations: self.evaluations,
            trace: self.trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Up to `k` results, ascending by (distance, id).
    pub neighbors: Vec<Neighbor>,
    pub evaluations: usize,
    pub trace: Option<SearchTrace>,
}

/// Epoch-stamped visited set, reusable across queries without clearing.
#[derive(Debug, Clone)]
pub struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    pub fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    pub fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Marks `v`; returns true if it was not yet visited.
    #[inline]
    pub fn insert(&mut self, v: usize) -> bool {
        if self.marks[v] == self.epoch {
            false
        } else {
            self.marks[v] = self.epoch;
            true
        }
    }
}

/// Query-wide distance cache: a vertex is evaluated at most once per
/// query even when several layers or walks reach it.
#[derive(Debug, Clone)]
pub(crate) struct DistMemo {
    marks: Vec<u32>,
    dists: Vec<f32>,
    epoch: u32,
}

impl DistMemo {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            dists: vec![0.0; n],
            epoch: 0,
        }
    }

    pub(crate) fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
            self.dists.resize(n, 0.0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    #[inline]
    pub(crate) fn get_or(&mut self, v: usize, eval: impl FnOnce() -> f32) -> f32 {
        if self.marks[v] != self.epoch {
            self.marks[v] = self.epoch;
            self.dists[v] = eval();
        }
        self.dists[v]
    }
}

/// Bounded best-first expansion from an already-evaluated pool.
///
/// `start` entries must already be marked in `visited`. `neighbors_of`
/// yields the adjacency of a vertex and `dist_of` its distance to the
/// query, doing whatever evaluation bookkeeping the caller needs.
pub(crate) fn expand<'g, F, I, D>(
    start: &[Neighbor],
    ef: usize,
    neighbors_of: F,
    visited: &mut Visited,
    mut dist_of: D,
) -> Vec<Neighbor>
where
    F: Fn(u32) -> I,
    I: Iterator<Item = u32> + 'g,
    D: FnMut(u32) -> f32,
{
    let mut candidates: BinaryHeap<Reverse<ByDist>> = BinaryHeap::with_capacity(ef * 2);
    let mut pool: BinaryHeap<ByDist> = BinaryHeap::with_capacity(ef + 1);
    for &s in start {
        candidates.push(Reverse(ByDist(s)));
        pool.push(ByDist(s));
        if pool.len() > ef {
            pool.pop();
        }
    }
    while let Some(Reverse(ByDist(current))) = candidates.pop() {
        if pool.len() >= ef && current.cmp_by_dist(&pool.peek().unwrap().0).is_gt() {
            break;
        }
        for u in neighbors_of(current.id) {
            if !visited.insert(u as usize) {
                continue;
            }
            let cand = Neighbor::new(u, dist_of(u));
            if pool.len() < ef || cand.cmp_by_dist(&pool.peek().unwrap().0).is_lt() {
                candidates.push(Reverse(ByDist(cand)));
                pool.push(ByDist(cand));
                if pool.len() > ef {
                    pool.pop();
                }
            }
        }
    }
    pool.into_sorted_vec().into_iter().map(|b| b.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatSearchParams {
    pub ef: usize,
    pub k: usize,
    /// Random starting vertices; defaults to `ef`.
    pub seed_count: usize,
}

impl FlatSearchParams {
    pub fn new(ef: usize, k: usize) -> Self {
        Self {
            ef,
            k,
            seed_count: ef,
        }
    }
}

/// Reusable per-thread search state.
#[derive(Debug, Clone)]
pub struct Searcher {
    pub(crate) visited: Visited,
    pub(crate) memo: DistMemo,
}

impl Searcher {
    pub fn new(n: usize) -> Self {
        Self {
            visited: Visited::new(n),
            memo: DistMemo::new(0),
        }
    }

    /// Best-first search from `seed_count` random distinct vertices.
    pub fn flat(
        &mut self,
        graph: &AdjacencyGraph,
        data: &VectorSet,
        query: &[f32],
        params: FlatSearchParams,
        rng: &mut ChaCha8Rng,
        record_trace: bool,
    ) -> Result<SearchOutcome> {
        validate_flat(graph, data, query, params.ef, params.k)?;
        if params.seed_count == 0 || params.seed_count > graph.len() {
            return Err(Error::usage(format!(
                "seed count {} must be in 1..={}",
                params.seed_count,
                graph.len()
            )));
        }
        let seeds: Vec<u32> = index::sample(rng, graph.len(), params.seed_count)
            .iter()
            .map(|i| i as u32)
            .collect();
        Ok(self.flat_from(
            graph,
            data,
            query,
            &seeds,
            params.ef,
            params.k,
            record_trace,
        ))
    }

    /// Best-first search from explicit, distinct seed vertices.
    #[allow(clippy::too_many_arguments)]
    pub fn flat_from(
        &mut self,
        graph: &AdjacencyGraph,
        data: &VectorSet,
        query: &[f32],
        seeds: &[u32],
        ef: usize,
        k: usize,
        record_trace: bool,
    ) -> SearchOutcome {
        self.visited.reset(graph.len());
        let mut probe = Probe::new(record_trace);
        let mut start = Vec::with_capacity(seeds.len());
        for &s in seeds {
            if self.visited.insert(s as usize) {
                let d = data.dist_to(s as usize, query);
                probe.record(d);
                start.push(Neighbor::new(s, d));
            }
        }
        let mut found = expand(
            &start,
            ef,
            |v| graph.neighbors(v as usize).iter().map(|e| e.id),
            &mut self.visited,
            |u| {
                let d = data.dist_to(u as usize, query);
                probe.record(d);
                d
            },
        );
        found.truncate(k);
        probe.finish(found)
    }
}

fn validate_flat(
    graph: &AdjacencyGraph,
    data: &VectorSet,
    query: &[f32],
    ef: usize,
    k: usize,
) -> Result<()> {
    if graph.is_empty() {
        return Err(Error::usage("cannot search an empty graph"));
    }
    if graph.len() != data.len() {
        return Err(Error::usage(format!(
            "graph has {} vertices but data has {}",
            graph.len(),
            data.len()
        )));
    }
    data.check_query(query)?;
    if k == 0 || k > ef {
        return Err(Error::usage(format!(
            "need 1 <= k <= ef, got k={k}, ef={ef}"
        )));
    }
    Ok(())
}

/// One-shot flat search with trace recording.
pub fn best_first_search(
    graph: &AdjacencyGraph,
    data: &VectorSet,
    query: &[f32],
    params: FlatSearchParams,
    rng: &mut ChaCha8Rng,
) -> Result<SearchOutcome> {
    Searcher::new(graph.len()).flat(graph, data, query, params, rng, true)
}

/// Per-query generator derived from the run seed and the query index, so
/// seeds do not depend on query order or worker assignment.
pub fn query_rng(global_seed: u64, query_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(global_seed ^ splitmix64(query_index as u64)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Evaluations aggregated by the distance range the search had reached.
///
/// `edges` are strictly descending; bucket `i` spans `[edges[i+1], edges[i])`.
/// The first bucket is open above and the last is open below, so every
/// evaluation lands somewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub queries: usize,
}

impl RangeHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bucket_of(edges: &[f64], value: f64) -> usize {
        let buckets = edges.len() - 1;
        let above = edges[1..].iter().take_while(|&&e| e > value).count();
        above.min(buckets - 1)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["bucket_low", "bucket_high", "evaluations"])
            .map_err(csv_err)?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                self.edges[i + 1].to_string(),
                self.edges[i].to_string(),
                c.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, queries: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        for rec in r.deserialize() {
            let (low, high, count): (f64, f64, u64) = rec.map_err(csv_err)?;
            if edges.is_empty() {
                edges.push(high);
            }
            edges.push(low);
            counts.push(count);
        }
        Ok(Self {
            edges,
            counts,
            queries,
        })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(0, format!("{other:?}")),
    }
}

/// Attributes each evaluation to the bucket holding the best distance
/// reached at that moment, summed over all traces.
pub fn bucket_trace(traces: &[SearchTrace], edges: &[f64]) -> Result<RangeHistogram> {
    if traces.is_empty() {
        return Err(Error::usage("no traces to bucket"));
    }
    if edges.len() < 2
        || edges.windows(2).any(|w| w[1] >= w[0])
        || edges.iter().any(|e| !e.is_finite())
    {
        return Err(Error::usage(
            "bucket edges must be finite and strictly descending",
        ));
    }
    let mut counts = vec![0u64; edges.len() - 1];
    for t in traces {
        if t.final_best().is_some_and(|b| b < 0.0) {
            return Err(Error::usage("negative terminal distance in trace"));
        }
        for s in &t.steps {
            counts[RangeHistogram::bucket_of(edges, s.best as f64)] += 1;
        }
    }
    Ok(RangeHistogram {
        edges: edges.to_vec(),
        counts,
        queries: traces.len(),
    })
}

/// `buckets + 1` geometrically spaced edges from `high` down to `low`.
pub fn geometric_edges(high: f64, low: f64, buckets: usize) -> Result<Vec<f64>> {
    if !(high > low && low > 0.0) || buckets == 0 {
        return Err(Error::usage(format!(
            "geometric edges need high > low > 0 and at least one bucket (got {high}, {low})"
        )));
    }
    let ratio = low / high;
    Ok((0..=buckets)
        .map(|i| match i {
            0 => high,
            i if i == buckets => low,
            i => high * ratio.powf(i as f64 / buckets as f64),
        })
        .collect())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Default edges: geometric between the median first best distance over
/// `traces` and the median true nearest-neighbor distance.
pub fn default_edges(traces: &[SearchTrace], truth_nn: &[f32], buckets: usize) -> Result<Vec<f64>> {
    let high = median(
        traces
            .iter()
            .filter_map(|t| t.first_best())
            .map(f64::from)
            .collect(),
    );
    let low = median(
        truth_nn
            .iter()
            .map(|&d| d as f64)
            .filter(|&d| d > 0.0)
            .collect(),
    );
    match (high, low) {
        (Some(h), Some(l)) => geometric_edges(h, l, buckets),
        _ => Err(Error::usage(
            "need traces and positive ground-truth distances",
        )),
    }
}

#[derive(Serialize)]
struct TraceRow {
    query_id: usize,
    evaluation_index: u32,
    best_distance: f32,
}

/// Dumps traces as `query_id,evaluation_index,best_distance`.
pub fn write_traces_csv(traces: &[SearchTrace], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (q, t) in traces.iter().enumerate() {
        for s in &t.steps {
            w.serialize(TraceRow {
                query_id: q,
                evaluation_index: s.evaluation,
                best_distance: s.best,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
