//! Maximum-likelihood local intrinsic dimension, averaged over anchors.
//!
//! For an anchor with neighbor distances `T_1 <= ... <= T_k` the local
//! estimate is `[(1/(k-1)) * sum_{j<k} ln(T_k / T_j)]^-1`; the dataset
//! estimate is the arithmetic mean over anchors.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metric::VectorSet;

use super::truth::{for_each_query, scan_top_k};

pub const DEFAULT_LID_NEIGHBORS: usize = 200;
pub const DEFAULT_LID_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidEstimate {
    pub value: f64,
    pub k_neighbors: usize,
    pub sample_size: usize,
    /// Anchors that contributed (anchors with a zero neighbor distance are skipped).
    pub anchors_used: usize,
}

/// Local estimate from ascending neighbor distances, `None` if any is zero.
pub(crate) fn local_mle(dists: &[f32]) -> Option<f64> {
    let k = dists.len();
    let tk = *dists.last()? as f64;
    if dists[0] <= 0.0 || tk <= 0.0 {
        return None;
    }
    let sum: f64 = dists[..k - 1].iter().map(|&t| (tk / t as f64).ln()).sum();
    if sum <= 0.0 {
        // all k distances equal: the estimator diverges
        return None;
    }
    Some((k - 1) as f64 / sum)
}

pub fn estimate_lid(
    set: &VectorSet,
    k_neighbors: usize,
    sample_size: usize,
    seed: u64,
    threads: usize,
) -> Result<LidEstimate> {
    let n = set.len();
    if k_neighbors < 5 {
        return Err(Error::usage("kNeighbors must be at least 5"));
    }
    if k_neighbors >= n {
        return Err(Error::usage(format!(
            "kNeighbors = {k_neighbors} needs more than {n} points"
        )));
    }
    if sample_size == 0 || sample_size > n {
        return Err(Error::usage(format!("sample size must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = index::sample(&mut rng, n, sample_size).into_vec();
    anchors.sort_unstable();
    let locals = for_each_query(anchors.len(), threads, |i| {
        let a = anchors[i];
        let nn = scan_top_k(set, set.row(a), k_neighbors, Some(a));
        let dists: Vec<f32> = nn.iter().map(|e| e.dist).collect();
        local_mle(&dists)
    });
    let used: Vec<f64> = locals.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::domain(
            "every anchor has a duplicate neighbor at distance zero",
        ));
    }
    Ok(LidEstimate {
        value: used.iter().sum::<f64>() / used.len() as f64,
        k_neighbors,
        sample_size,
        anchors_used: used.len(),
    })
}
