//! Distance kernels and the shared vector container.
//!
//! Every distance handed out by this crate is the true metric value (L2 is
//! the Euclidean norm, not its square). Kernels accumulate in `f32` with
//! eight independent lanes up to 256 dimensions and switch to `f64` above.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension above which accumulation switches to 64-bit.
const WIDE_ACCUMULATION_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    Cosine,
}

impl Metric {
    /// Distance without precondition checks. Cosine of a zero-norm vector
    /// yields NaN here; use [`distance`] at API boundaries.
    #[inline]
    pub fn eval(self, a: &[f32], b: &[f32]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L2 => l2(a, b),
            Metric::Cosine => cosine(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::usage(format!("unknown metric `{other}`"))),
        }
    }
}

/// Checked distance between two vectors.
pub fn distance(a: &[f32], b: &[f32], metric: Metric) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if metric == Metric::Cosine && (is_zero(a) || is_zero(b)) {
        return Err(Error::domain("cosine distance of a zero-norm vector"));
    }
    Ok(metric.eval(a, b))
}

fn is_zero(v: &[f32]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

#[inline]
fn l2(a: &[f32], b: &[f32]) -> f32 {
    if a.len() > WIDE_ACCUMULATION_DIM {
        let mut acc = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            let d = (*x as f64) - (*y as f64);
            acc += d * d;
        }
        return acc.sqrt() as f32;
    }
    let mut lanes = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (rest_a, rest_b) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            let d = ca[i] - cb[i];
            lanes[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in rest_a.iter().zip(rest_b) {
        let d = x - y;
        tail += d * d;
    }
    let sum = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail;
    sum.sqrt()
}

#[inline]
fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let sim = dot / (na.sqrt() * nb.sqrt());
    (1.0 - sim).max(0.0) as f32
}

/// `n` row-contiguous vectors of dimension `dim`.
///
/// An empty set read from an empty file has `dim == 0`; every other set
/// has `dim >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f32>,
    metric: Metric,
}

impl VectorSet {
    pub fn new(dim: usize, data: Vec<f32>, metric: Metric) -> Result<Self> {
        if dim == 0 {
            if !data.is_empty() {
                return Err(Error::usage("dimension must be at least 1"));
            }
            return Ok(Self::empty(metric));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::usage(format!(
                "data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite value in vector {} (component {})",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { dim, data, metric })
    }

    pub fn empty(metric: Metric) -> Self {
        Self {
            dim: 0,
            data: Vec::new(),
            metric,
        }
    }

    pub fn from_rows(rows: &[Vec<f32>], metric: Metric) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::usage("rows have differing dimensions"));
        }
        Self::new(dim, rows.concat(), metric)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact(0) panics, and an empty set has no rows anyway.
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Distance between stored vectors `i` and `j`.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f32 {
        self.metric.eval(self.row(i), self.row(j))
    }

    /// Distance between stored vector `i` and an external query.
    #[inline]
    pub fn dist_to(&self, i: usize, query: &[f32]) -> f32 {
        self.metric.eval(self.row(i), query)
    }

    /// Scales every row to unit L2 norm. Fails on a zero row.
    pub fn normalize(&mut self) -> Result<()> {
        let dim = self.dim.max(1);
        for (i, row) in self.data.chunks_exact_mut(dim).enumerate() {
            let norm = row
                .iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(Error::domain(format!("vector {i} has zero norm")));
            }
            for x in row.iter_mut() {
                *x = ((*x as f64) / norm) as f32;
            }
        }
        Ok(())
    }

    /// Copies the given rows into a new set.
    pub fn select(&self, ids: &[usize]) -> VectorSet {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        VectorSet {
            dim: self.dim,
            data,
            metric: self.metric,
        }
    }

    pub(crate) fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::usage(format!(
                "query dimension {} does not match data dimension {}",
                query.len(),
                self.dim
            )));
        }
        Ok(())
    }
}
