//! Dataset ingestion, sharding, and synthetic data.
//!
//! Binary classification data is held densely (the target datasets have a
//! few hundred features at most). LIBSVM text is the on-disk format:
//! `<label> <index>:<value> ...` with 1-based indices; labels are mapped
//! onto {-1, +1}, accepting 0/1-labeled files by sending 0 to -1.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::splitmix64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: label {label} is not in {{-1, 0, +1}}")]
    NonBinaryLabel { line: usize, label: f64 },
    #[error("cannot shard {n} samples across {m} agents")]
    TooManyAgents { m: usize, n: usize },
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense binary-classification dataset with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Array1<f64>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self, DataError> {
        assert_eq!(features.nrows(), labels.len(), "one label per row");
        if features.nrows() == 0 {
            return Err(DataError::Empty);
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn feature_row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Largest sample Euclidean norm.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| self.features.row(i).dot(&self.features.row(i)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Scale all features by `1 / max_row_norm` so every sample lies in the
    /// unit ball. Returns the factor applied. Keeps gradient-norm bounds
    /// moderate; a no-op for all-zero data.
    pub fn scale_to_unit_norm(&mut self) -> f64 {
        let max_norm = self.max_row_norm();
        if max_norm > 0.0 {
            self.features /= max_norm;
            1.0 / max_norm
        } else {
            1.0
        }
    }

    /// Restrict to a subset of rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let features = Array2::from_shape_fn((rows.len(), self.dim()), |(r, c)| {
            self.features[[rows[r], c]]
        });
        let labels = Array1::from_iter(rows.iter().map(|&r| self.labels[r]));
        Dataset { features, labels }
    }

    /// Serialize in LIBSVM text form (1-based indices, zeros omitted).
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            out.push_str(if self.labels[i] > 0.0 { "+1" } else { "-1" });
            for (j, &v) in self.features.row(i).iter().enumerate() {
                if v != 0.0 {
                    out.push_str(&format!(" {}:{}", j + 1, v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parse LIBSVM text. `dim` forces the feature dimension; otherwise it is
/// `max index + 1` over the input. Blank lines and lines starting with `#`
/// are skipped; trailing whitespace is tolerated.
pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<Dataset, DataError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label: f64 = label_tok.parse().map_err(|_| DataError::Malformed {
            line: line_no,
            reason: format!("unreadable label {label_tok:?}"),
        })?;
        let label = if label == 1.0 {
            1.0
        } else if label == -1.0 || label == 0.0 {
            -1.0
        } else {
            return Err(DataError::NonBinaryLabel { line: line_no, label });
        };

        let mut row = Vec::new();
        for tok in tokens {
            let (index_str, value_str) = tok.split_once(':').ok_or_else(|| DataError::Malformed {
                line: line_no,
                reason: format!("expected index:value, got {tok:?}"),
            })?;
            let one_based: usize = index_str.parse().map_err(|_| DataError::Malformed {
                line: line_no,
                reason: format!("unreadable feature index {index_str:?}"),
            })?;
            if one_based == 0 {
                return Err(DataError::Malformed {
                    line: line_no,
                    reason: "feature indices are 1-based".to_string(),
                });
            }
            let value: f64 = value_str.parse().map_err(|_| DataError::Malformed {
                line: line_no,
                reason: format!("unreadable feature value {value_str:?}"),
            })?;
            let zero_based = one_based - 1;
            if let Some(d) = dim {
                if zero_based >= d {
                    return Err(DataError::Malformed {
                        line: line_no,
                        reason: format!("feature index {one_based} exceeds dimension {d}"),
                    });
                }
            }
            max_index = max_index.max(zero_based);
            row.push((zero_based, value));
        }
        labels.push(label);
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let d = dim.unwrap_or(max_index + 1);
    let mut features = Array2::<f64>::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[[i, j]] = v;
        }
    }
    Dataset::new(features, Array1::from_vec(labels))
}

pub fn parse_libsvm_file(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path)?;
    parse_libsvm(&text, dim)
}

/// How samples are distributed across agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardMode {
    /// Random permutation, contiguous near-equal blocks.
    Iid,
    /// Sort by label first, producing heterogeneous shards.
    LabelSorted,
}

/// A partition of sample indices across agents.
#[derive(Debug, Clone)]
pub struct Sharding {
    shards: Vec<Vec<usize>>,
    mode: ShardMode,
}

impl Sharding {
    pub fn num_agents(&self) -> usize {
        self.shards.len()
    }

    pub fn mode(&self) -> ShardMode {
        self.mode
    }

    pub fn shard(&self, agent: usize) -> &[usize] {
        &self.shards[agent]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn max_shard_len(&self) -> usize {
        self.shards.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Partition `ds` across `m` agents. Every agent receives at least one
/// sample; block sizes differ by at most one.
pub fn shard(ds: &Dataset, m: usize, mode: ShardMode, seed: u64) -> Result<Sharding, DataError> {
    assert!(m >= 1, "agent count must be positive");
    let n = ds.len();
    if m > n {
        return Err(DataError::TooManyAgents { m, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        ShardMode::Iid => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x0053_4841_5244));
            order.shuffle(&mut rng);
        }
        ShardMode::LabelSorted => {
            order.sort_by(|&a, &b| ds.label(a).total_cmp(&ds.label(b)).then(a.cmp(&b)));
        }
    }
    let base = n / m;
    let extra = n % m;
    let mut shards = Vec::with_capacity(m);
    let mut cursor = 0usize;
    for agent in 0..m {
        let size = base + usize::from(agent < extra);
        shards.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(Sharding { shards, mode })
}

/// Deterministic train/test split by seeded permutation.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    assert!((0.0..1.0).contains(&test_fraction), "test fraction must lie in [0, 1)");
    let n = ds.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x53_50_4c_49_54));
    order.shuffle(&mut rng);
    let test = ds.subset(&order[..n_test]);
    let train = ds.subset(&order[n_test..]);
    (train, test)
}

/// Synthetic binary data: Gaussian features pushed `margin` away from a
/// random hyperplane, with a fraction of labels flipped.
pub fn synth_binary_with_flips(
    n: usize,
    d: usize,
    margin: f64,
    flip_fraction: f64,
    seed: u64,
) -> Dataset {
    assert!(n >= 1 && d >= 1, "dimensions must be positive");
    assert!((0.0..=1.0).contains(&flip_fraction));
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x53_59_4e_54_48));
    let normal = rand_distr::StandardNormal;

    let mut separator = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(normal));
    let norm = separator.dot(&separator).sqrt();
    separator /= norm.max(f64::MIN_POSITIVE);

    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut row = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(normal));
        let side = if separator.dot(&row) >= 0.0 { 1.0 } else { -1.0 };
        row.scaled_add(side * margin, &separator);
        let flip = rng.random::<f64>() < flip_fraction;
        labels[i] = if flip { -side } else { side };
        features.row_mut(i).assign(&row);
    }
    Dataset { features, labels }
}

/// [`synth_binary_with_flips`] with the default 5% label noise.
pub fn synth_binary(n: usize, d: usize, margin: f64, seed: u64) -> Dataset {
    synth_binary_with_flips(n, d, margin, 0.05, seed)
}
