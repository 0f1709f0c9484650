use std::collections::BinaryHeap;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::{ByDist, Neighbor};
use crate::metric::{Metric, VectorSet};

use super::vecs::{read_fvecs, read_ivecs, write_fvecs, write_ivecs, IntRows};

/// Exact k nearest candidates per query, ascending by (distance, id).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    k: usize,
    ids: Vec<u32>,
    dists: Vec<f32>,
}

impl GroundTruth {
    pub fn new(k: usize, ids: Vec<u32>, dists: Vec<f32>) -> Result<Self> {
        if ids.len() != dists.len()
            || (k > 0 && !ids.len().is_multiple_of(k))
            || (k == 0 && !ids.is_empty())
        {
            return Err(Error::usage("ground truth arrays do not form k-wide rows"));
        }
        Ok(Self { k, ids, dists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn dists(&self, q: usize) -> &[f32] {
        &self.dists[q * self.k..(q + 1) * self.k]
    }

    pub fn neighbors(&self, q: usize) -> Vec<Neighbor> {
        self.ids(q)
            .iter()
            .zip(self.dists(q))
            .map(|(&id, &dist)| Neighbor { id, dist })
            .collect()
    }

    /// Writes `<prefix>.ivecs` (ids) and `<prefix>.fvecs` (distances).
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let ids = IntRows::new(self.k, self.ids.iter().map(|&i| i as i32).collect())?;
        write_ivecs(&ids, with_ext(prefix, "ivecs"))?;
        let dists = VectorSet::new(self.k, self.dists.clone(), Metric::L2)?;
        write_fvecs(&dists, with_ext(prefix, "fvecs"))
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        let ids = read_ivecs(with_ext(prefix, "ivecs"))?;
        let dists = read_fvecs(with_ext(prefix, "fvecs"))?;
        if ids.dim() != dists.dim() || ids.len() != dists.len() {
            return Err(Error::format(
                0,
                "ground truth id and distance files disagree",
            ));
        }
        if ids.as_slice().iter().any(|&i| i < 0) {
            return Err(Error::format(0, "negative id in ground truth"));
        }
        Self::new(
            ids.dim(),
            ids.as_slice().iter().map(|&i| i as u32).collect(),
            dists.as_slice().to_vec(),
        )
    }

    /// Checks ordering, uniqueness and (optionally) recomputed distances.
    pub fn audit(&self, candidates: &VectorSet, queries: &VectorSet) -> Vec<String> {
        let mut problems = Vec::new();
        for q in 0..self.len() {
            let row = self.neighbors(q);
            if row.windows(2).any(|w| w[0].dist > w[1].dist) {
                problems.push(format!("query {q}: distances not ascending"));
            }
            let mut ids: Vec<u32> = row.iter().map(|e| e.id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                problems.push(format!("query {q}: duplicate ids"));
            }
            for e in &row {
                let d = candidates.dist_to(e.id as usize, queries.row(q));
                if !crate::graph::close(d, e.dist) {
                    problems.push(format!("query {q}: stored {} vs recomputed {d}", e.dist));
                }
            }
        }
        problems
    }
}

fn with_ext(prefix: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    s.into()
}

/// Ground truth plus the wall-clock time of the scan that produced it.
#[derive(Debug, Clone)]
pub struct TimedGroundTruth {
    pub truth: GroundTruth,
    pub elapsed: Duration,
}

/// Exhaustive k-NN by full scan, timed. This is the speedup baseline.
pub fn brute_force_knn(
    candidates: &VectorSet,
    queries: &VectorSet,
    k: usize,
    threads: usize,
) -> Result<TimedGroundTruth> {
    let start = Instant::now();
    let truth = exhaustive_knn(candidates, queries, k, threads)?;
    Ok(TimedGroundTruth {
        truth,
        elapsed: start.elapsed(),
    })
}

/// Exhaustive k-NN without timing. Ties are broken by ascending id, so
/// the result does not depend on `threads`.
pub fn exhaustive_knn(
    candidates: &VectorSet,
    queries: &VectorSet,
    k: usize,
    threads: usize,
) -> Result<GroundTruth> {
    if k == 0 || k > candidates.len() {
        return Err(Error::usage(format!(
            "k = {k} must be in 1..={}",
            candidates.len()
        )));
    }
    if candidates.dim() != queries.dim() && !queries.is_empty() {
        return Err(Error::usage("candidates and queries differ in dimension"));
    }
    if candidates.metric() != queries.metric() {
        return Err(Error::usage("candidates and queries use different metrics"));
    }
    let rows = for_each_query(queries.len(), threads, |q| {
        scan_top_k(candidates, queries.row(q), k, None)
    });
    let mut ids = Vec::with_capacity(queries.len() * k);
    let mut dists = Vec::with_capacity(queries.len() * k);
    for row in rows {
        for e in row {
            ids.push(e.id);
            dists.push(e.dist);
        }
    }
    GroundTruth::new(k, ids, dists)
}

/// The `k` nearest rows of `set` to `query`, skipping row `exclude`.
pub(crate) fn scan_top_k(
    set: &VectorSet,
    query: &[f32],
    k: usize,
    exclude: Option<usize>,
) -> Vec<Neighbor> {
    let mut heap: BinaryHeap<ByDist> = BinaryHeap::with_capacity(k + 1);
    for i in 0..set.len() {
        if Some(i) == exclude {
            continue;
        }
        let cand = Neighbor::new(i as u32, set.dist_to(i, query));
        if heap.len() < k {
            heap.push(ByDist(cand));
        } else if cand.cmp_by_dist(&heap.peek().unwrap().0).is_lt() {
            heap.pop();
            heap.push(ByDist(cand));
        }
    }
    heap.into_sorted_vec().into_iter().map(|b| b.0).collect()
}

/// Maps `work` over `0..count`, splitting into contiguous chunks across
/// `threads` scoped workers. Output order is query order.
pub(crate) fn for_each_query<T: Send>(
    count: usize,
    threads: usize,
    work: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let threads = threads.clamp(1, count.max(1));
    if threads == 1 {
        return (0..count).map(&work).collect();
    }
    let chunk = count.div_ceil(threads);
    let work = &work;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    (t * chunk..((t + 1) * chunk).min(count))
                        .map(work)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
