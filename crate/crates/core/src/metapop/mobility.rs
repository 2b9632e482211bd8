//! Commuter mobility between regions.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetapopError;

/// Range of synthetic commuter weights in persons per day; weights are
/// log-uniform inside it.
pub const SYNTH_WEIGHT_RANGE: (f64, f64) = (10.0, 5000.0);

/// Dense `n x n` matrix of daily commuters from row region to column region.
///
/// Serializes as `{"n": .., "edges": [[from, to, weight], ..]}` listing the
/// nonzero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseMobility", try_from = "SparseMobility")]
pub struct MobilityMatrix {
    n: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SparseMobility {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl From<MobilityMatrix> for SparseMobility {
    fn from(m: MobilityMatrix) -> Self {
        let n = m.n;
        let edges = m
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, w)| (k / n, k % n, *w))
            .collect();
        Self { n, edges }
    }
}

impl TryFrom<SparseMobility> for MobilityMatrix {
    type Error = MetapopError;

    fn try_from(s: SparseMobility) -> Result<Self, MetapopError> {
        let mut weights = vec![0.0; s.n * s.n];
        for (i, j, w) in s.edges {
            if i >= s.n || j >= s.n {
                return Err(MetapopError::DimensionMismatch { expected: s.n, found: i.max(j) + 1 });
            }
            weights[i * s.n + j] = w;
        }
        Self::new(s.n, weights)
    }
}

impl MobilityMatrix {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self, MetapopError> {
        if n < 2 {
            return Err(MetapopError::TooFewNodes(n));
        }
        if weights.len() != n * n {
            return Err(MetapopError::DimensionMismatch { expected: n * n, found: weights.len() });
        }
        for (k, w) in weights.iter().enumerate() {
            let (row, col) = (k / n, k % n);
            if !w.is_finite() || *w < 0.0 {
                return Err(MetapopError::NegativeWeight { row, col, value: *w });
            }
            if row == col && *w != 0.0 {
                return Err(MetapopError::NonzeroDiagonal { node: row, value: *w });
            }
        }
        Ok(Self { n, weights })
    }

    pub fn zeros(n: usize) -> Result<Self, MetapopError> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetapopError> {
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(MetapopError::Parse { row: i + 1, col: None, message: format!("expected {n} columns, found {}", r.len()) });
        }
        Self::new(n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.weights[from * self.n..(from + 1) * self.n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nonzeros(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// Share of off-diagonal entries that are nonzero.
    pub fn density(&self) -> f64 {
        self.nonzeros() as f64 / (self.n * (self.n - 1)) as f64
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                weights[i * n + j] = self.weight(perm[i], perm[j]);
            }
        }
        Self { n, weights }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), MetapopError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for i in 0..self.n {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses a headerless CSV of `n` rows with `n` numeric columns each.
pub fn parse_mobility(reader: impl std::io::Read) -> Result<MobilityMatrix, MetapopError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| MetapopError::Parse {
                    row: i + 1,
                    col: Some(j + 1),
                    message: format!("not a number: {field:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(MetapopError::Parse {
                    row: i + 1,
                    col: None,
                    message: format!("ragged row: expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if let Some(first) = rows.first() {
        if first.len() != rows.len() {
            return Err(MetapopError::NotSquare { rows: rows.len(), cols: first.len() });
        }
    }
    MobilityMatrix::from_rows(&rows)
}

pub fn load_mobility(path: impl AsRef<Path>) -> Result<MobilityMatrix, MetapopError> {
    parse_mobility(std::fs::File::open(path)?)
}

/// Seeded random mobility with symmetric support.
///
/// Exactly `round(density * n * (n - 1) / 2)` unordered pairs are connected,
/// each in both directions with independent log-uniform weights in
/// [`SYNTH_WEIGHT_RANGE`].
pub fn synth_mobility(n: usize, target_density: f64, seed: u64) -> Result<MobilityMatrix, MetapopError> {
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(MetapopError::InvalidDensity(target_density));
    }
    if n < 2 {
        return Err(MetapopError::TooFewNodes(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n * (n - 1) / 2;
    let chosen = ((target_density * pairs as f64).round() as usize).min(pairs);
    let mut picked = index::sample(&mut rng, pairs, chosen).into_vec();
    picked.sort_unstable();

    let (lo, hi) = (SYNTH_WEIGHT_RANGE.0.ln(), SYNTH_WEIGHT_RANGE.1.ln());
    let mut weights = vec![0.0; n * n];
    for k in picked {
        let (i, j) = upper_pair(k, n);
        weights[i * n + j] = (lo + rng.random::<f64>() * (hi - lo)).exp();
        weights[j * n + i] = (lo + rng.random::<f64>() * (hi - lo)).exp();
    }
    MobilityMatrix::new(n, weights)
}

// Maps a linear index over the strict upper triangle to its (row, col).
fn upper_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    let mut row_len = n - 1;
    while k >= row_len {
        k -= row_len;
        i += 1;
        row_len -= 1;
    }
    (i, i + 1 + k)
}
