//! Flat adjacency graph shared by the k-NN, diversified and flat-HNSW
//! configurations, and its "KNNG" binary format.
//!
//! Layout (little-endian): `b"KNNG"`, version byte, `n: u32`, then per
//! vertex `count: u32` followed by `count` pairs of `id: u32, dist: f32`.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metric::VectorSet;

pub const KNNG_MAGIC: &[u8; 4] = b"KNNG";
pub const KNNG_VERSION: u8 = 1;

/// Relative tolerance for stored-vs-recomputed distance audits.
pub const DISTANCE_AUDIT_TOLERANCE: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f32,
}

impl Neighbor {
    pub fn new(id: u32, dist: f32) -> Self {
        Self { id, dist }
    }

    /// Ascending distance, ties by ascending id.
    #[inline]
    pub fn cmp_by_dist(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjacencyGraph {
    lists: Vec<Vec<Neighbor>>,
}

impl AdjacencyGraph {
    pub fn new(lists: Vec<Vec<Neighbor>>) -> Self {
        Self { lists }
    }

    pub fn with_vertices(n: usize) -> Self {
        Self {
            lists: vec![Vec::new(); n],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[Neighbor] {
        &self.lists[v]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn into_lists(self) -> Vec<Vec<Neighbor>> {
        self.lists
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.lists.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.lists.is_empty() {
            0.0
        } else {
            self.edge_count() as f64 / self.lists.len() as f64
        }
    }

    pub fn sort_lists(&mut self) {
        for list in &mut self.lists {
            list.sort_by(Neighbor::cmp_by_dist);
        }
    }

    /// Fails with a usage error if any list is not ascending by distance.
    pub fn ensure_sorted(&self) -> Result<()> {
        for (v, list) in self.lists.iter().enumerate() {
            if list.windows(2).any(|w| w[0].dist > w[1].dist) {
                return Err(Error::usage(format!(
                    "neighbor list of vertex {v} is not sorted by distance"
                )));
            }
        }
        Ok(())
    }

    /// Structural audit: ids in range, no self-loops, no duplicates,
    /// sorted by (distance, id). Returns one message per violation.
    pub fn audit_structure(&self) -> Vec<String> {
        let n = self.lists.len();
        let mut problems = Vec::new();
        let mut seen = vec![u32::MAX; n];
        for (v, list) in self.lists.iter().enumerate() {
            for e in list {
                let id = e.id as usize;
                if id >= n {
                    problems.push(format!("vertex {v}: neighbor id {id} out of range"));
                    continue;
                }
                if id == v {
                    problems.push(format!("vertex {v}: self-loop"));
                }
                if seen[id] == v as u32 {
                    problems.push(format!("vertex {v}: duplicate neighbor {id}"));
                }
                seen[id] = v as u32;
                if !e.dist.is_finite() || e.dist < 0.0 {
                    problems.push(format!("vertex {v}: invalid distance {}", e.dist));
                }
            }
            if list
                .windows(2)
                .any(|w| w[0].cmp_by_dist(&w[1]) != Ordering::Less)
            {
                problems.push(format!("vertex {v}: list not sorted by (distance, id)"));
            }
        }
        problems
    }

    /// Checks stored distances against recomputation.
    pub fn audit_distances(&self, data: &VectorSet) -> Vec<String> {
        let mut problems = Vec::new();
        if data.len() != self.lists.len() {
            problems.push(format!(
                "graph has {} vertices but data has {} vectors",
                self.lists.len(),
                data.len()
            ));
            return problems;
        }
        for (v, list) in self.lists.iter().enumerate() {
            for e in list {
                if e.id as usize >= data.len() {
                    continue;
                }
                let d = data.dist(v, e.id as usize);
                if !close(d, e.dist) {
                    problems.push(format!(
                        "vertex {v}: stored distance {} to {} differs from {d}",
                        e.dist, e.id
                    ));
                }
            }
        }
        problems
    }

    /// True when every edge (v, u) has its reverse (u, v).
    pub fn is_symmetric(&self) -> bool {
        let mut sets: Vec<Vec<u32>> = self
            .lists
            .iter()
            .map(|l| l.iter().map(|e| e.id).collect())
            .collect();
        for s in &mut sets {
            s.sort_unstable();
        }
        self.lists.iter().enumerate().all(|(v, list)| {
            list.iter()
                .all(|e| sets[e.id as usize].binary_search(&(v as u32)).is_ok())
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.lists.len() * 4 + self.edge_count() * 8);
        out.extend_from_slice(KNNG_MAGIC);
        out.push(KNNG_VERSION);
        out.extend_from_slice(&(self.lists.len() as u32).to_le_bytes());
        for list in &self.lists {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for e in list {
                out.extend_from_slice(&e.id.to_le_bytes());
                out.extend_from_slice(&e.dist.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != KNNG_MAGIC {
            return Err(Error::format(0, "missing KNNG magic"));
        }
        let version = r.take(1)?[0];
        if version != KNNG_VERSION {
            return Err(Error::format(
                4,
                format!("unsupported KNNG version {version}"),
            ));
        }
        let n = r.u32()? as usize;
        let mut lists = Vec::with_capacity(n.min(bytes.len() / 4));
        for _ in 0..n {
            let count = r.u32()? as usize;
            let mut list = Vec::with_capacity(count.min(bytes.len() / 8));
            for _ in 0..count {
                let id = r.u32()?;
                let dist = r.f32()?;
                list.push(Neighbor { id, dist });
            }
            lists.push(list);
        }
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), "trailing bytes after graph"));
        }
        Ok(Self { lists })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized graph.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }
}

/// Heap entry ordered by (distance, id); the max-heap top is the worst.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ByDist(pub Neighbor);

impl Eq for ByDist {}

impl PartialOrd for ByDist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ByDist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp_by_dist(&other.0)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn close(a: f32, b: f32) -> bool {
    (a - b).abs() <= DISTANCE_AUDIT_TOLERANCE * a.abs().max(b.abs()).max(1e-6)
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(Error::format(
                self.offset(),
                format!("truncated: need {len} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
