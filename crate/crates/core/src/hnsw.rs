//! Hierarchical navigable small world index.
//!
//! Vertices draw a level from `floor(-ln(u) * level_decay)` and appear on
//! every layer up to it. Insertion descends greedily through the layers
//! above the drawn level, then on each remaining layer runs a bounded
//! best-first search with pool `ef_construction` and keeps up to `M`
//! neighbors chosen by occlusion. A neighbor whose list overflows its
//! layer cap is re-pruned by the same occlusion rule.
//!
//! Defaults follow hnswlib: `level_decay = 1/ln(M)`, cap `M` on upper
//! layers and `2M` on layer 0.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diversify::occlusion_select;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, ByteReader, Neighbor};
use crate::metric::VectorSet;
use crate::search::{expand, Probe, SearchOutcome, Searcher, Visited};

pub const HNSW_MAGIC: &[u8; 4] = b"HNSW";
pub const HNSW_VERSION: u8 = 1;
const ABSENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            seed: 0,
        }
    }
}

/// `floor(-ln(u) * level_decay)` for `u` in the open interval (0, 1).
pub fn assign_level(u: f64, level_decay: f64) -> Result<usize> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::usage(format!("level draw {u} is outside (0, 1)")));
    }
    if !(level_decay > 0.0 && level_decay.is_finite()) {
        return Err(Error::usage("level decay must be positive"));
    }
    Ok((-u.ln() * level_decay).floor() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    dim: usize,
    m: usize,
    max_degree_upper: usize,
    max_degree_bottom: usize,
    ef_construction: usize,
    level_decay: f64,
    enter_point: Option<u32>,
    max_level: usize,
    /// `links[v][l]` is the adjacency of `v` on layer `l`; empty when `v`
    /// has not been inserted.
    links: Vec<Vec<Vec<u32>>>,
    build_evaluations: u64,
}

impl HnswIndex {
    /// Empty index with room for `n` vertices.
    pub fn new(n: usize, dim: usize, m: usize, ef_construction: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::usage("M must be at least 2"));
        }
        if ef_construction == 0 {
            return Err(Error::usage("efConstruction must be at least 1"));
        }
        Ok(Self {
            dim,
            m,
            max_degree_upper: m,
            max_degree_bottom: 2 * m,
            ef_construction,
            level_decay: 1.0 / (m as f64).ln(),
            enter_point: None,
            max_level: 0,
            links: vec![Vec::new(); n],
            build_evaluations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.enter_point.is_none()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn max_degree_upper(&self) -> usize {
        self.max_degree_upper
    }

    pub fn max_degree_bottom(&self) -> usize {
        self.max_degree_bottom
    }

    pub fn ef_construction(&self) -> usize {
        self.ef_construction
    }

    pub fn level_decay(&self) -> f64 {
        self.level_decay
    }

    pub fn enter_point(&self) -> Option<u32> {
        self.enter_point
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn build_evaluations(&self) -> u64 {
        self.build_evaluations
    }

    /// Assigned level of `v`, or `None` if not inserted.
    pub fn level(&self, v: usize) -> Option<usize> {
        self.links[v].len().checked_sub(1)
    }

    pub fn neighbors(&self, v: usize, layer: usize) -> &[u32] {
        &self.links[v][layer]
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.max_degree_bottom
        } else {
            self.max_degree_upper
        }
    }

    /// Inserts `id` at a level drawn from `rng`.
    pub fn insert(&mut self, id: usize, data: &VectorSet, rng: &mut impl Rng) -> Result<()> {
        let u = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        };
        let level = assign_level(u, self.level_decay)?;
        self.insert_at_level(id, level, data, &mut Visited::new(self.len()))
    }

    /// Inserts `id` on layers `0..=level`.
    pub fn insert_at_level(
        &mut self,
        id: usize,
        level: usize,
        data: &VectorSet,
        visited: &mut Visited,
    ) -> Result<()> {
        if id >= self.len() || id >= data.len() {
            return Err(Error::usage(format!("vertex {id} is out of range")));
        }
        if data.dim() != self.dim {
            return Err(Error::usage("data dimension does not match the index"));
        }
        if !self.links[id].is_empty() {
            return Err(Error::usage(format!("vertex {id} is already indexed")));
        }
        self.links[id] = vec![Vec::new(); level + 1];
        let Some(ep) = self.enter_point else {
            self.enter_point = Some(id as u32);
            self.max_level = level;
            return Ok(());
        };

        let mut probe = Probe::new(false);
        let mut cur = Neighbor::new(ep, data.dist(id, ep as usize));
        probe.record_silent();
        for layer in (level + 1..=self.max_level).rev() {
            cur = self.greedy(cur, layer, |u| {
                probe.record_silent();
                data.dist(id, u as usize)
            });
        }
        let mut entry = vec![cur];
        for layer in (0..=level.min(self.max_level)).rev() {
            visited.reset(self.len());
            for e in &entry {
                visited.insert(e.id as usize);
            }
            let pool = expand(
                &entry,
                self.ef_construction,
                |v| self.links[v as usize][layer].iter().copied(),
                visited,
                |u| {
                    probe.record_silent();
                    data.dist(id, u as usize)
                },
            );
            let chosen = occlusion_select(&pool, self.m, |a, b| {
                probe.record_silent();
                data.dist(a as usize, b as usize)
            });
            self.links[id][layer] = chosen.iter().map(|e| e.id).collect();
            for e in &chosen {
                let s = e.id as usize;
                self.links[s][layer].push(id as u32);
                if self.links[s][layer].len() > self.cap(layer) {
                    self.reprune(s, layer, data, &mut probe);
                }
            }
            entry = pool;
        }
        if level > self.max_level {
            self.max_level = level;
            self.enter_point = Some(id as u32);
        }
        self.build_evaluations += probe.evaluations() as u64;
        Ok(())
    }

    fn reprune(&mut self, s: usize, layer: usize, data: &VectorSet, probe: &mut Probe) {
        let mut cands: Vec<Neighbor> = self.links[s][layer]
            .iter()
            .map(|&u| {
                probe.record_silent();
                Neighbor::new(u, data.dist(s, u as usize))
            })
            .collect();
        cands.sort_by(Neighbor::cmp_by_dist);
        let kept = occlusion_select(&cands, self.cap(layer), |a, b| {
            probe.record_silent();
            data.dist(a as usize, b as usize)
        });
        self.links[s][layer] = kept.iter().map(|e| e.id).collect();
    }

    /// Single-best greedy walk on one layer; ties go to the lower id.
    fn greedy(
        &self,
        mut cur: Neighbor,
        layer: usize,
        mut dist_of: impl FnMut(u32) -> f32,
    ) -> Neighbor {
        loop {
            let mut moved = false;
            for &u in &self.links[cur.id as usize][layer] {
                let cand = Neighbor::new(u, dist_of(u));
                if cand.cmp_by_dist(&cur).is_lt() {
                    cur = cand;
                    moved = true;
                }
            }
            if !moved {
                return cur;
            }
        }
    }

    /// Hierarchical query: greedy descent to layer 1, then best-first on
    /// layer 0 with pool `ef`. Every evaluation is counted, upper layers
    /// included.
    pub fn search_with(
        &self,
        searcher: &mut Searcher,
        data: &VectorSet,
        query: &[f32],
        ef: usize,
        k: usize,
        record_trace: bool,
    ) -> Result<SearchOutcome> {
        let ep = self
            .enter_point
            .ok_or_else(|| Error::usage("cannot search an empty index"))?;
        data.check_query(query)?;
        if data.len() != self.len() {
            return Err(Error::usage("data does not match the index"));
        }
        if k == 0 || k > ef {
            return Err(Error::usage(format!(
                "need 1 <= k <= ef, got k={k}, ef={ef}"
            )));
        }
        let mut probe = Probe::new(record_trace);
        let memo = &mut searcher.memo;
        memo.reset(self.len());
        let mut dist_of = |u: u32| {
            memo.get_or(u as usize, || {
                let d = data.dist_to(u as usize, query);
                probe.record(d);
                d
            })
        };
        let mut cur = Neighbor::new(ep, dist_of(ep));
        for layer in (1..=self.max_level).rev() {
            cur = self.greedy(cur, layer, &mut dist_of);
        }
        let visited = &mut searcher.visited;
        visited.reset(self.len());
        visited.insert(cur.id as usize);
        let mut found = expand(
            &[cur],
            ef,
            |v| self.links[v as usize][0].iter().copied(),
            visited,
            dist_of,
        );
        found.truncate(k);
        Ok(probe.finish(found))
    }

    /// Layer 0 as a flat graph with recomputed distances, lists ascending.
    pub fn bottom_layer(&self, data: &VectorSet) -> AdjacencyGraph {
        let lists = self
            .links
            .iter()
            .enumerate()
            .map(|(v, layers)| {
                let mut l: Vec<Neighbor> = layers
                    .first()
                    .map(|ids| {
                        ids.iter()
                            .map(|&u| Neighbor::new(u, data.dist(v, u as usize)))
                            .collect()
                    })
                    .unwrap_or_default();
                l.sort_by(Neighbor::cmp_by_dist);
                l
            })
            .collect();
        AdjacencyGraph::new(lists)
    }

    /// Count of vertices per assigned level.
    pub fn level_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.max_level + 1];
        for layers in &self.links {
            if let Some(l) = layers.len().checked_sub(1) {
                h[l] += 1;
            }
        }
        h
    }

    /// Fraction of inserted vertices reachable from the enter point on layer 0.
    pub fn bottom_reachability(&self) -> f64 {
        let Some(ep) = self.enter_point else {
            return 0.0;
        };
        let mut seen = vec![false; self.len()];
        let mut stack = vec![ep as usize];
        seen[ep as usize] = true;
        let mut reached = 1usize;
        while let Some(v) = stack.pop() {
            for &u in &self.links[v][0] {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    reached += 1;
                    stack.push(u as usize);
                }
            }
        }
        let inserted = self.links.iter().filter(|l| !l.is_empty()).count();
        reached as f64 / inserted as f64
    }

    /// Structural audit: layer nesting, degree caps, enter point
    /// maximality, no self-loops or duplicate links.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let n = self.len();
        let top = self
            .links
            .iter()
            .filter_map(|l| l.len().checked_sub(1))
            .max();
        match (self.enter_point, top) {
            (None, None) => {}
            (Some(ep), Some(top)) => {
                if self.level(ep as usize) != Some(top) || top != self.max_level {
                    problems.push(format!(
                        "enter point {ep} has level {:?}, max level is {top} (recorded {})",
                        self.level(ep as usize),
                        self.max_level
                    ));
                }
            }
            (ep, top) => problems.push(format!(
                "enter point {ep:?} inconsistent with levels {top:?}"
            )),
        }
        for (v, layers) in self.links.iter().enumerate() {
            for (layer, ids) in layers.iter().enumerate() {
                if ids.len() > self.cap(layer) {
                    problems.push(format!(
                        "vertex {v} layer {layer}: degree {} exceeds cap {}",
                        ids.len(),
                        self.cap(layer)
                    ));
                }
                let mut sorted = ids.clone();
                sorted.sort_unstable();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    problems.push(format!("vertex {v} layer {layer}: duplicate link"));
                }
                for &u in ids {
                    let u = u as usize;
                    if u == v {
                        problems.push(format!("vertex {v} layer {layer}: self-loop"));
                    } else if u >= n || self.links[u].len() <= layer {
                        problems.push(format!(
                            "vertex {v} layer {layer}: link to {u}, which is not on that layer"
                        ));
                    }
                }
            }
        }
        problems
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(HNSW_MAGIC);
        out.push(HNSW_VERSION);
        for x in [
            self.len(),
            self.dim,
            self.m,
            self.max_degree_upper,
            self.max_degree_bottom,
        ] {
            out.extend_from_slice(&(x as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.level_decay.to_le_bytes());
        out.extend_from_slice(&(self.ef_construction as u32).to_le_bytes());
        out.extend_from_slice(&self.enter_point.unwrap_or(ABSENT).to_le_bytes());
        out.extend_from_slice(&(self.max_level as u32).to_le_bytes());
        for layers in &self.links {
            let level = layers.len().checked_sub(1).map_or(ABSENT, |l| l as u32);
            out.extend_from_slice(&level.to_le_bytes());
            for ids in layers {
                out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
                for id in ids {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != HNSW_MAGIC {
            return Err(Error::format(0, "missing HNSW magic"));
        }
        let version = r.take(1)?[0];
        if version != HNSW_VERSION {
            return Err(Error::format(
                4,
                format!("unsupported HNSW version {version}"),
            ));
        }
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let m = r.u32()? as usize;
        let max_degree_upper = r.u32()? as usize;
        let max_degree_bottom = r.u32()? as usize;
        let level_decay = r.f64()?;
        let ef_construction = r.u32()? as usize;
        let ep = r.u32()?;
        let max_level = r.u32()? as usize;
        let mut links = Vec::with_capacity(n.min(bytes.len() / 4));
        for _ in 0..n {
            let at = r.offset();
            let level = r.u32()?;
            if level == ABSENT {
                links.push(Vec::new());
                continue;
            }
            if level as usize > max_level {
                return Err(Error::format(
                    at,
                    format!("level {level} above max {max_level}"),
                ));
            }
            let mut layers = Vec::with_capacity(level as usize + 1);
            for _ in 0..=level {
                let count = r.u32()? as usize;
                let mut ids = Vec::with_capacity(count.min(r.remaining() / 4));
                for _ in 0..count {
                    ids.push(r.u32()?);
                }
                layers.push(ids);
            }
            links.push(layers);
        }
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), "trailing bytes after index"));
        }
        Ok(Self {
            dim,
            m,
            max_degree_upper,
            max_degree_bottom,
            ef_construction,
            level_decay,
            enter_point: (ep != ABSENT).then_some(ep),
            max_level,
            links,
            build_evaluations: 0,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Inserts `0..n` in order. Deterministic for a fixed seed.
pub fn hnsw_build(data: &VectorSet, params: HnswParams) -> Result<HnswIndex> {
    if data.is_empty() {
        return Err(Error::usage("cannot index an empty set"));
    }
    let mut index = HnswIndex::new(data.len(), data.dim(), params.m, params.ef_construction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut visited = Visited::new(data.len());
    for id in 0..data.len() {
        let u = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        };
        let level = assign_level(u, index.level_decay)?;
        index.insert_at_level(id, level, data, &mut visited)?;
    }
    Ok(index)
}

/// One-shot hierarchical search with trace recording.
pub fn hnsw_search(
    index: &HnswIndex,
    data: &VectorSet,
    query: &[f32],
    ef: usize,
    k: usize,
) -> Result<SearchOutcome> {
    index.search_with(&mut Searcher::new(index.len()), data, query, ef, k, true)
}
