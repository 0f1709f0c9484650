//! Synthetic data, vector file I/O, exhaustive ground truth and LID.

mod lid;
pub(crate) mod truth;
mod vecs;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metric::{Metric, VectorSet};

pub use lid::{estimate_lid, LidEstimate, DEFAULT_LID_NEIGHBORS, DEFAULT_LID_SAMPLE};
pub use truth::{brute_force_knn, exhaustive_knn, GroundTruth, TimedGroundTruth};
pub use vecs::{
    decode_fvecs, decode_ivecs, encode_fvecs, encode_ivecs, read_fvecs, read_ivecs, write_fvecs,
    write_ivecs, IntRows,
};

/// `n` vectors with coordinates i.i.d. uniform on [0, 1).
///
/// The generator is ChaCha8 seeded from `seed`, so output is bit-identical
/// across runs and platforms.
pub fn generate_uniform(n: usize, dim: usize, seed: u64) -> Result<VectorSet> {
    if n == 0 || dim == 0 {
        return Err(Error::usage("n and d must both be at least 1"));
    }
    let total = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Resource(format!("{n} x {dim} values overflow usize")))?;
    let mut data: Vec<f32> = Vec::new();
    data.try_reserve_exact(total)
        .map_err(|e| Error::Resource(format!("cannot allocate {total} values: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.extend((0..total).map(|_| rng.gen::<f32>()));
    VectorSet::new(dim, data, Metric::L2)
}

/// Contents of the `key=value` sidecar written next to a dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub metric: Metric,
    pub seed: Option<u64>,
    pub normalized: bool,
}

impl DatasetMeta {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "d={}", self.d);
        let _ = writeln!(s, "metric={}", self.metric);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        let _ = writeln!(s, "normalized={}", self.normalized);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut name = None;
        let (mut n, mut d, mut metric, mut seed, mut normalized) = (None, None, None, None, false);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(lineno as u64, format!("expected key=value, got `{line}`"))
            })?;
            let bad = |what: &str| Error::format(lineno as u64, format!("bad {what} `{value}`"));
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "n" => n = Some(value.parse().map_err(|_| bad("n"))?),
                "d" => d = Some(value.parse().map_err(|_| bad("d"))?),
                "metric" => metric = Some(value.parse().map_err(|_| bad("metric"))?),
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "normalized" => normalized = value.parse().map_err(|_| bad("normalized"))?,
                _ => {}
            }
        }
        let missing = |k: &str| Error::format(0, format!("metadata missing `{k}`"));
        Ok(Self {
            name: name.ok_or_else(|| missing("name"))?,
            n: n.ok_or_else(|| missing("n"))?,
            d: d.ok_or_else(|| missing("d"))?,
            metric: metric.ok_or_else(|| missing("metric"))?,
            seed,
            normalized,
        })
    }

    pub fn sidecar_path(data_path: &Path) -> PathBuf {
        let mut s = data_path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    pub fn save_for(&self, data_path: &Path) -> Result<()> {
        fs::write(Self::sidecar_path(data_path), self.to_text())?;
        Ok(())
    }

    pub fn load_for(data_path: &Path) -> Result<Option<Self>> {
        let p = Self::sidecar_path(data_path);
        if !p.exists() {
            return Ok(None);
        }
        Self::from_text(&fs::read_to_string(p)?).map(Some)
    }
}

/// Reads an `.fvecs` file under `metric`. If `metric` is `None` the
/// sidecar's metric is used, falling back to L2. Cosine data is
/// normalized to unit length on load and the returned metadata records it.
pub fn load_dataset(path: &Path, metric: Option<Metric>) -> Result<(VectorSet, DatasetMeta)> {
    let sidecar = DatasetMeta::load_for(path)?;
    let metric = metric
        .or(sidecar.as_ref().map(|m| m.metric))
        .unwrap_or(Metric::L2);
    let mut set = read_fvecs(path)?.with_metric(metric);
    let normalized = metric == Metric::Cosine;
    if normalized {
        set.normalize()?;
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let meta = DatasetMeta {
        name: sidecar.as_ref().map_or(name, |m| m.name.clone()),
        n: set.len(),
        d: set.dim(),
        metric,
        seed: sidecar.and_then(|m| m.seed),
        normalized,
    };
    Ok((set, meta))
}
