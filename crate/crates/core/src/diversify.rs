//! Neighborhood diversification of flat graphs.
//!
//! * GD (occlusion): scanning candidates nearest first, `e` joins the
//!   neighborhood of `a` iff `m(e, a) < m(e, s)` for every already-kept
//!   `s`. At most `ceil(L / 2)` neighbors are kept from a list of `L`.
//! * DPG: `e` stays iff `m(e, a) <= m(e, s)` for every other member `s`
//!   of the source list. A vertex whose list empties keeps its nearest
//!   source neighbor.
//! * Reverse union: every edge `a -> b` gains its mirror `b -> a`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, Neighbor};
use crate::metric::VectorSet;

/// Number of neighbors GD may keep from a source list of length `len`.
pub const fn gd_cap(len: usize) -> usize {
    len.div_ceil(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Gd,
    Dpg,
    GdReverse,
    DpgReverse,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Gd => "GD",
            Provenance::Dpg => "DPG",
            Provenance::GdReverse => "GD+reverse",
            Provenance::DpgReverse => "DPG+reverse",
        }
    }

    pub fn with_reverse(self) -> Self {
        match self {
            Provenance::Gd | Provenance::GdReverse => Provenance::GdReverse,
            Provenance::Dpg | Provenance::DpgReverse => Provenance::DpgReverse,
        }
    }

    pub fn has_reverse(self) -> bool {
        matches!(self, Provenance::GdReverse | Provenance::DpgReverse)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GD" => Ok(Provenance::Gd),
            "DPG" => Ok(Provenance::Dpg),
            "GD+reverse" => Ok(Provenance::GdReverse),
            "DPG+reverse" => Ok(Provenance::DpgReverse),
            other => Err(Error::format(0, format!("unknown provenance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversifiedGraph {
    pub graph: AdjacencyGraph,
    pub provenance: Provenance,
    /// SHA-256 of the source k-NN graph's serialized bytes.
    pub source_digest: String,
}

impl DiversifiedGraph {
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".prov");
        s.into()
    }

    pub fn sidecar_line(&self) -> String {
        format!(
            "{} source={} max_degree={}\n",
            self.provenance,
            self.source_digest,
            self.graph.max_degree()
        )
    }

    /// Writes the KNNG file and its one-line provenance sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.graph.save(path)?;
        fs::write(Self::sidecar_path(path), self.sidecar_line())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let graph = AdjacencyGraph::load(path)?;
        let (provenance, source_digest) = read_sidecar(&Self::sidecar_path(path))?
            .ok_or_else(|| Error::format(0, "missing provenance sidecar"))?;
        Ok(Self {
            graph,
            provenance,
            source_digest,
        })
    }
}

/// Parses a provenance sidecar if one exists.
pub fn read_sidecar(path: &Path) -> Result<Option<(Provenance, String)>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    let mut parts = text.split_whitespace();
    let provenance: Provenance = parts
        .next()
        .ok_or_else(|| Error::format(0, "empty provenance sidecar"))?
        .parse()?;
    let digest = parts
        .find_map(|p| p.strip_prefix("source="))
        .unwrap_or_default()
        .to_string();
    Ok(Some((provenance, digest)))
}

/// Occlusion selection over `candidates` (ascending by distance to the
/// base vertex): keeps `e` iff `e.dist < dist(e, s)` for every kept `s`,
/// stopping after `limit` keeps. Shared by GD and HNSW linking.
pub fn occlusion_select(
    candidates: &[Neighbor],
    limit: usize,
    mut dist: impl FnMut(u32, u32) -> f32,
) -> Vec<Neighbor> {
    let mut kept: Vec<Neighbor> = Vec::with_capacity(limit.min(candidates.len()));
    for e in candidates {
        if kept.len() >= limit {
            break;
        }
        if kept.iter().all(|s| e.dist < dist(e.id, s.id)) {
            kept.push(*e);
        }
    }
    kept
}

fn check_source(source: &AdjacencyGraph, data: &VectorSet) -> Result<()> {
    if source.len() != data.len() {
        return Err(Error::usage(format!(
            "graph has {} vertices but data has {}",
            source.len(),
            data.len()
        )));
    }
    source.ensure_sorted()
}

pub fn gd_prune(source: &AdjacencyGraph, data: &VectorSet) -> Result<DiversifiedGraph> {
    check_source(source, data)?;
    let lists = source
        .lists()
        .iter()
        .map(|list| {
            occlusion_select(list, gd_cap(list.len()), |a, b| {
                data.dist(a as usize, b as usize)
            })
        })
        .collect();
    Ok(DiversifiedGraph {
        graph: AdjacencyGraph::new(lists),
        provenance: Provenance::Gd,
        source_digest: source.digest(),
    })
}

pub fn dpg_prune(source: &AdjacencyGraph, data: &VectorSet) -> Result<DiversifiedGraph> {
    check_source(source, data)?;
    let lists = source
        .lists()
        .iter()
        .map(|list| {
            let mut kept: Vec<Neighbor> = list
                .iter()
                .filter(|e| {
                    list.iter()
                        .filter(|s| s.id != e.id)
                        .all(|s| e.dist <= data.dist(e.id as usize, s.id as usize))
                })
                .copied()
                .collect();
            if kept.is_empty() {
                kept.extend(list.first().copied());
            }
            kept
        })
        .collect();
    Ok(DiversifiedGraph {
        graph: AdjacencyGraph::new(lists),
        provenance: Provenance::Dpg,
        source_digest: source.digest(),
    })
}

/// Union of each list with its reverse neighbors, re-sorted ascending.
/// Reverse entries reuse the forward edge's distance (the metric is
/// symmetric).
pub fn add_reverse_edges(g: DiversifiedGraph) -> Result<DiversifiedGraph> {
    let problems = g.graph.audit_structure();
    if let Some(first) = problems.first() {
        return Err(Error::usage(format!("invalid diversified graph: {first}")));
    }
    let n = g.graph.len();
    let mut reverse: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    for (a, list) in g.graph.lists().iter().enumerate() {
        for e in list {
            reverse[e.id as usize].push(Neighbor::new(a as u32, e.dist));
        }
    }
    let mut lists = g.graph.into_lists();
    let mut seen = vec![u32::MAX; n];
    for (v, (list, rev)) in lists.iter_mut().zip(reverse).enumerate() {
        for e in list.iter() {
            seen[e.id as usize] = v as u32;
        }
        for e in rev {
            if seen[e.id as usize] != v as u32 {
                seen[e.id as usize] = v as u32;
                list.push(e);
            }
        }
        list.sort_by(Neighbor::cmp_by_dist);
    }
    Ok(DiversifiedGraph {
        graph: AdjacencyGraph::new(lists),
        provenance: g.provenance.with_reverse(),
        source_digest: g.source_digest,
    })
}

/// Checks the GD occlusion inequality on every kept list, and the
/// `ceil(L/2)` cap when the source graph is supplied.
pub fn audit_gd(
    graph: &AdjacencyGraph,
    data: &VectorSet,
    source: Option<&AdjacencyGraph>,
) -> Vec<String> {
    let mut problems = Vec::new();
    for (a, list) in graph.lists().iter().enumerate() {
        for (i, e) in list.iter().enumerate() {
            for s in &list[..i] {
                let to_kept = data.dist(e.id as usize, s.id as usize);
                let to_base = data.dist(e.id as usize, a);
                if to_base >= to_kept {
                    problems.push(format!(
                        "vertex {a}: {} is occluded by {} ({to_base} >= {to_kept})",
                        e.id, s.id
                    ));
                }
            }
        }
        if let Some(src) = source {
            let cap = gd_cap(src.neighbors(a).len());
            if list.len() > cap {
                problems.push(format!(
                    "vertex {a}: degree {} exceeds cap {cap}",
                    list.len()
                ));
            }
        }
    }
    problems
}
