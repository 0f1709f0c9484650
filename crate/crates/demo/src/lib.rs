//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function returns a JSON string. The plain Rust functions
//! behind them are public so they can be tested natively.

use std::cell::RefCell;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use proxigraph::datasets::{estimate_lid, generate_uniform};
use proxigraph::diversify::{gd_cap, occlusion_select};
use proxigraph::hnsw::{hnsw_build, HnswIndex, HnswParams};
use proxigraph::search::{query_rng, FlatSearchParams, Searcher};
use proxigraph::{AdjacencyGraph, Metric, Neighbor, Result, VectorSet};

#[derive(Debug, Serialize)]
pub struct Pruning {
    pub points: Vec<[f32; 2]>,
    pub base: [f32; 2],
    /// Candidate ids nearest first.
    pub candidates: Vec<u32>,
    pub kept: Vec<u32>,
    /// For each rejected candidate, the kept neighbor that occludes it
    /// (`None` when it was cut by the degree cap).
    pub occluded_by: Vec<(u32, Option<u32>)>,
}

/// Occlusion pruning of the `candidates` nearest of `n` random points in
/// the unit square around `(x, y)`, keeping at most half of them.
pub fn prune_around(n: usize, candidates: usize, seed: u64, x: f32, y: f32) -> Result<Pruning> {
    let set = generate_uniform(n, 2, seed)?;
    let base = [x, y];
    let mut list: Vec<Neighbor> = (0..set.len())
        .map(|i| Neighbor::new(i as u32, set.dist_to(i, &base)))
        .collect();
    list.sort_by(Neighbor::cmp_by_dist);
    list.truncate(candidates.min(n));
    let kept = occlusion_select(&list, gd_cap(list.len()), |a, b| {
        set.dist(a as usize, b as usize)
    });
    let kept_ids: Vec<u32> = kept.iter().map(|e| e.id).collect();
    let occluded_by = list
        .iter()
        .filter(|e| !kept_ids.contains(&e.id))
        .map(|e| {
            let by = kept
                .iter()
                .take_while(|s| s.cmp_by_dist(e).is_lt())
                .find(|s| e.dist >= set.dist(e.id as usize, s.id as usize))
                .map(|s| s.id);
            (e.id, by)
        })
        .collect();
    Ok(Pruning {
        points: set.rows().map(|r| [r[0], r[1]]).collect(),
        base,
        candidates: list.iter().map(|e| e.id).collect(),
        kept: kept_ids,
        occluded_by,
    })
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub true_nn: f32,
    pub hnsw: Vec<f32>,
    pub flat: Vec<f32>,
    pub hnsw_found: f32,
    pub flat_found: f32,
}

struct Built {
    key: (usize, usize, u64),
    data: VectorSet,
    index: HnswIndex,
    flat: AdjacencyGraph,
}

thread_local! {
    static BUILT: RefCell<Option<Built>> = const { RefCell::new(None) };
}

/// Best-so-far distance after every evaluation for one query, searched
/// hierarchically and over the flat bottom layer of the same index. The
/// index is cached between calls with the same `(n, d, seed)`.
pub fn trajectories(
    n: usize,
    d: usize,
    seed: u64,
    query_seed: u64,
    ef: usize,
) -> Result<Trajectory> {
    BUILT.with(|cell| {
        let mut cell = cell.borrow_mut();
        if cell.as_ref().map(|b| b.key) != Some((n, d, seed)) {
            let data = generate_uniform(n, d, seed)?;
            let index = hnsw_build(
                &data,
                HnswParams {
                    m: 12,
                    ef_construction: 100,
                    seed,
                },
            )?;
            let flat = index.bottom_layer(&data);
            *cell = Some(Built {
                key: (n, d, seed),
                data,
                index,
                flat,
            });
        }
        let b = cell.as_ref().unwrap();
        let query = generate_uniform(1, d, query_seed ^ 0xA5A5)?;
        let q = query.row(0);
        let true_nn = (0..b.data.len())
            .map(|i| b.data.dist_to(i, q))
            .fold(f32::INFINITY, f32::min);
        let ef = ef.clamp(1, n);
        let mut searcher = Searcher::new(n);
        let h = b
            .index
            .search_with(&mut searcher, &b.data, q, ef, 1, true)?;
        let f = searcher.flat(
            &b.flat,
            &b.data,
            q,
            FlatSearchParams::new(ef, 1),
            &mut query_rng(query_seed, 0),
            true,
        )?;
        let steps = |o: &proxigraph::search::SearchOutcome| -> Vec<f32> {
            o.trace
                .as_ref()
                .map(|t| t.steps.iter().map(|s| s.best).collect())
                .unwrap_or_default()
        };
        Ok(Trajectory {
            true_nn,
            hnsw: steps(&h),
            flat: steps(&f),
            hnsw_found: h.neighbors[0].dist,
            flat_found: f.neighbors[0].dist,
        })
    })
}

#[derive(Debug, Serialize)]
pub struct LidPoint {
    pub d: usize,
    pub lid: f64,
}

/// LID estimates of uniform data for each dimension in `dims`.
pub fn lid_curve(n: usize, dims: &[usize], k: usize, seed: u64) -> Result<Vec<LidPoint>> {
    dims.iter()
        .map(|&d| {
            let set = generate_uniform(n, d, seed)?.with_metric(Metric::L2);
            let est = estimate_lid(&set, k, n.min(500), seed, 1)?;
            Ok(LidPoint { d, lid: est.value })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = pruneAround)]
pub fn prune_around_js(
    n: usize,
    candidates: usize,
    seed: u64,
    x: f32,
    y: f32,
) -> std::result::Result<String, JsError> {
    to_js(prune_around(n, candidates, seed, x, y))
}

#[wasm_bindgen(js_name = searchTrajectories)]
pub fn trajectories_js(
    n: usize,
    d: usize,
    seed: u64,
    query_seed: u64,
    ef: usize,
) -> std::result::Result<String, JsError> {
    to_js(trajectories(n, d, seed, query_seed, ef))
}

#[wasm_bindgen(js_name = lidCurve)]
pub fn lid_curve_js(
    n: usize,
    dims: Vec<usize>,
    k: usize,
    seed: u64,
) -> std::result::Result<String, JsError> {
    to_js(lid_curve(n, &dims, k, seed))
}
