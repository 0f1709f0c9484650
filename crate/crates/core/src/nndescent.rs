//! Approximate k-NN graph construction by NN-Descent.
//!
//! Each vertex starts with `K` random neighbors. Every iteration samples
//! the entries flagged new since the last round (plus sampled reverse
//! neighbors), compares all new-new and new-old pairs within each
//! vertex's neighborhood, and offers each compared pair to both lists.
//! Construction stops once an iteration changes fewer than
//! `delta * n * K` list entries.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::exhaustive_knn;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, Neighbor};
use crate::metric::VectorSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnDescentParams {
    /// Sample rate in (0, 1].
    pub rho: f64,
    /// Early-termination threshold on the fraction of updated entries, in [0, 1).
    pub delta: f64,
    pub max_iterations: usize,
}

impl Default for NnDescentParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            delta: 0.001,
            max_iterations: 30,
        }
    }
}

impl NnDescentParams {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::usage(format!(
                "rho = {} must be in (0, 1]",
                self.rho
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::usage(format!(
                "delta = {} must be in [0, 1)",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub iterations: usize,
    pub distance_evaluations: u64,
    /// List entries changed in each iteration.
    pub updates: Vec<u64>,
    /// Mean stored distance after initialization and after each iteration.
    pub mean_distance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KnnGraph {
    capacity: usize,
    graph: AdjacencyGraph,
    pub stats: BuildStats,
}

impl KnnGraph {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn graph(&self) -> &AdjacencyGraph {
        &self.graph
    }

    pub fn into_graph(self) -> AdjacencyGraph {
        self.graph
    }

    /// Structural and distance audit against the source data.
    pub fn audit(&self, data: &VectorSet) -> Vec<String> {
        let mut problems = self.graph.audit_structure();
        problems.extend(self.graph.audit_distances(data));
        for (v, list) in self.graph.lists().iter().enumerate() {
            if list.len() > self.capacity {
                problems.push(format!(
                    "vertex {v}: {} entries exceed capacity {}",
                    list.len(),
                    self.capacity
                ));
            }
        }
        problems
    }
}

#[derive(Clone, Copy)]
struct Entry {
    id: u32,
    dist: f32,
    new: bool,
}

struct Pool {
    cap: usize,
    entries: Vec<Entry>,
}

impl Pool {
    fn find(&self, id: u32) -> Option<f32> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.dist)
    }

    /// Sorted insert by (distance, id), evicting the worst when full.
    fn insert(&mut self, id: u32, dist: f32) -> bool {
        let key = Neighbor::new(id, dist);
        if self.entries.len() == self.cap {
            let worst = self.entries.last().unwrap();
            if !key
                .cmp_by_dist(&Neighbor::new(worst.id, worst.dist))
                .is_lt()
            {
                return false;
            }
        }
        if self.entries.iter().any(|e| e.id == id) {
            return false;
        }
        let pos = self
            .entries
            .partition_point(|e| Neighbor::new(e.id, e.dist).cmp_by_dist(&key).is_lt());
        self.entries.insert(
            pos,
            Entry {
                id,
                dist,
                new: true,
            },
        );
        self.entries.truncate(self.cap);
        true
    }
}

struct Builder<'a> {
    data: &'a VectorSet,
    pools: Vec<Pool>,
    evaluations: u64,
}

impl Builder<'_> {
    fn join(&mut self, a: u32, b: u32) -> u64 {
        let (ai, bi) = (a as usize, b as usize);
        let dist = match self.pools[ai].find(b).or_else(|| self.pools[bi].find(a)) {
            Some(d) => d,
            None => {
                self.evaluations += 1;
                self.data.dist(ai, bi)
            }
        };
        self.pools[ai].insert(b, dist) as u64 + self.pools[bi].insert(a, dist) as u64
    }

    fn mean_distance(&self) -> f64 {
        let (sum, count) = self
            .pools
            .iter()
            .flat_map(|p| &p.entries)
            .fold((0.0f64, 0usize), |(s, c), e| (s + e.dist as f64, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    fn snapshot(&self) -> AdjacencyGraph {
        AdjacencyGraph::new(
            self.pools
                .iter()
                .map(|p| {
                    p.entries
                        .iter()
                        .map(|e| Neighbor::new(e.id, e.dist))
                        .collect()
                })
                .collect(),
        )
    }
}

fn sample_into(rng: &mut ChaCha8Rng, src: &mut Vec<u32>, cap: usize) {
    if src.len() > cap {
        let picked = index::sample(rng, src.len(), cap);
        let mut kept: Vec<u32> = picked.iter().map(|i| src[i]).collect();
        kept.sort_unstable();
        *src = kept;
    }
}

/// Builds an approximate `k`-NN graph. Single-worker and deterministic
/// for fixed `(data, k, params, seed)`.
pub fn build_knn_graph(
    data: &VectorSet,
    k: usize,
    params: NnDescentParams,
    seed: u64,
) -> Result<KnnGraph> {
    params.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::usage("NN-Descent needs at least two vectors"));
    }
    if k == 0 || k >= n {
        return Err(Error::usage(format!("K = {k} must be in 1..{n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        data,
        pools: Vec::with_capacity(n),
        evaluations: 0,
    };
    for v in 0..n {
        let mut pool = Pool {
            cap: k,
            entries: Vec::with_capacity(k),
        };
        for j in index::sample(&mut rng, n - 1, k).iter() {
            let u = if j >= v { j + 1 } else { j };
            pool.insert(u as u32, data.dist(v, u));
        }
        b.evaluations += k as u64;
        b.pools.push(pool);
    }
    let mut stats = BuildStats {
        mean_distance: vec![b.mean_distance()],
        ..BuildStats::default()
    };

    let sample_cap = ((params.rho * k as f64).ceil() as usize).max(1);
    let threshold = params.delta * (n * k) as f64;
    let mut new_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut old_lists: Vec<Vec<u32>> = vec![Vec::new(); n];

    for _ in 0..params.max_iterations {
        for v in 0..n {
            let (new, old) = (&mut new_lists[v], &mut old_lists[v]);
            new.clear();
            old.clear();
            let pool = &mut b.pools[v];
            let flagged: Vec<usize> = (0..pool.entries.len())
                .filter(|&i| pool.entries[i].new)
                .collect();
            for e in pool.entries.iter().filter(|e| !e.new) {
                old.push(e.id);
            }
            let chosen: Vec<usize> = if flagged.len() > sample_cap {
                let mut c: Vec<usize> = index::sample(&mut rng, flagged.len(), sample_cap)
                    .iter()
                    .map(|i| flagged[i])
                    .collect();
                c.sort_unstable();
                c
            } else {
                flagged
            };
            for i in chosen {
                pool.entries[i].new = false;
                new.push(pool.entries[i].id);
            }
        }

        let mut rev_new: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut rev_old: Vec<Vec<u32>> = vec![Vec::new(); n];
        for v in 0..n {
            for &u in &new_lists[v] {
                rev_new[u as usize].push(v as u32);
            }
            for &u in &old_lists[v] {
                rev_old[u as usize].push(v as u32);
            }
        }

        let mut updates = 0u64;
        for v in 0..n {
            let mut new = std::mem::take(&mut new_lists[v]);
            let mut old = std::mem::take(&mut old_lists[v]);
            sample_into(&mut rng, &mut rev_new[v], sample_cap);
            sample_into(&mut rng, &mut rev_old[v], sample_cap);
            new.extend_from_slice(&rev_new[v]);
            old.extend_from_slice(&rev_old[v]);
            new.sort_unstable();
            new.dedup();
            old.sort_unstable();
            old.dedup();
            old.retain(|u| new.binary_search(u).is_err());

            for (i, &a) in new.iter().enumerate() {
                for &c in &new[i + 1..] {
                    updates += b.join(a, c);
                }
                for &c in &old {
                    updates += b.join(a, c);
                }
            }
            new_lists[v] = new;
            old_lists[v] = old;
        }

        stats.iterations += 1;
        stats.updates.push(updates);
        stats.mean_distance.push(b.mean_distance());
        debug_assert!(
            {
                let g = KnnGraph {
                    capacity: k,
                    graph: b.snapshot(),
                    stats: BuildStats::default(),
                };
                g.audit(data).is_empty()
            },
            "k-NN graph invariant broken after iteration {}",
            stats.iterations
        );
        if (updates as f64) < threshold {
            break;
        }
    }
    stats.distance_evaluations = b.evaluations;
    Ok(KnnGraph {
        capacity: k,
        graph: b.snapshot(),
        stats,
    })
}

/// Exact k-NN graph by brute force (self excluded), for quality checks.
pub fn exact_knn_graph(data: &VectorSet, k: usize, threads: usize) -> Result<AdjacencyGraph> {
    if k >= data.len() {
        return Err(Error::usage(format!(
            "k = {k} must be below n = {}",
            data.len()
        )));
    }
    // k + 1 with self filtered out; ties with a duplicate of v may rank v second.
    let truth = exhaustive_knn(data, data, k + 1, threads)?;
    let lists = (0..data.len())
        .map(|v| {
            let mut row: Vec<Neighbor> = truth
                .neighbors(v)
                .into_iter()
                .filter(|e| e.id as usize != v)
                .collect();
            row.truncate(k);
            row
        })
        .collect();
    Ok(AdjacencyGraph::new(lists))
}

/// Mean over vertices of the fraction of the exact top-`at_k` that the
/// approximate top-`at_k` recovers. An approximate neighbor at a distance
/// no greater than the exact `at_k`-th distance counts as a match, so
/// distance ties are equivalent.
pub fn graph_recall(approx: &AdjacencyGraph, exact: &AdjacencyGraph, at_k: usize) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::usage(format!(
            "vertex counts differ: {} vs {}",
            approx.len(),
            exact.len()
        )));
    }
    if at_k == 0 {
        return Err(Error::usage("atK must be at least 1"));
    }
    if approx.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for v in 0..approx.len() {
        let truth = exact.neighbors(v);
        if truth.len() < at_k {
            return Err(Error::usage(format!(
                "exact list of vertex {v} has fewer than {at_k} entries"
            )));
        }
        let bound = truth[at_k - 1].dist;
        let hits = approx
            .neighbors(v)
            .iter()
            .take(at_k)
            .filter(|e| e.dist <= bound)
            .count();
        total += hits as f64 / at_k as f64;
    }
    Ok(total / approx.len() as f64)
}
