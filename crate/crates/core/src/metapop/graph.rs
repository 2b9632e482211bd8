//! Binary adjacency, its normalizations, and the region graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mobility::{synth_mobility, MobilityMatrix};
use super::population::{synth_populations, NodePopulation};
use super::MetapopError;
use crate::sparse::CsrMatrix;

/// Dense 0/1 matrix; `get(i, j)` is true when region `i` sends commuters to `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryAdjacency {
    n: usize,
    bits: Vec<bool>,
}

impl BinaryAdjacency {
    pub fn zeros(n: usize) -> Self {
        Self { n, bits: vec![false; n * n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Self::zeros(n);
        for &(i, j) in edges {
            a.set(i, j, true);
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.n + j] = value;
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).filter(move |&j| self.get(i, j)).map(move |j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.bits[i * self.n..(i + 1) * self.n].iter().filter(|b| **b).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `A OR A^T`.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    out.set(j, i, true);
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(i, j, self.get(perm[i], perm[j]));
            }
        }
        out
    }
}

pub fn adjacency_from_mobility(m: &MobilityMatrix) -> BinaryAdjacency {
    BinaryAdjacency { n: m.n(), bits: m.weights().iter().map(|w| *w > 0.0).collect() }
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row-sum degree. Isolated nodes keep zero
/// rows and columns.
pub fn normalize_adjacency(a: &BinaryAdjacency) -> CsrMatrix<f64> {
    scaled_adjacency(a, false)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree of `A + I`.
pub fn gcn_normalize(a: &BinaryAdjacency) -> CsrMatrix<f64> {
    scaled_adjacency(a, true)
}

fn scaled_adjacency(a: &BinaryAdjacency, self_loops: bool) -> CsrMatrix<f64> {
    let n = a.n();
    let loops = if self_loops { 1.0 } else { 0.0 };
    let degree: Vec<f64> = (0..n)
        .map(|i| a.out_degree(i) as f64 + if a.get(i, i) { 0.0 } else { loops })
        .collect();
    let mut triplets = Vec::with_capacity(a.edge_count() + n);
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) || (self_loops && i == j) {
                triplets.push((i, j, 1.0 / (degree[i] * degree[j]).sqrt()));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Regions, their commuter flows, and the derived adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetapopGraph {
    nodes: Vec<NodePopulation>,
    mobility: MobilityMatrix,
    adjacency: BinaryAdjacency,
}

impl MetapopGraph {
    /// With `symmetrize`, the adjacency is `A OR A^T`; mobility is unchanged.
    pub fn new(nodes: Vec<NodePopulation>, mobility: MobilityMatrix, symmetrize: bool) -> Result<Self, MetapopError> {
        if nodes.len() != mobility.n() {
            return Err(MetapopError::DimensionMismatch { expected: mobility.n(), found: nodes.len() });
        }
        for (i, node) in nodes.iter().enumerate() {
            if !(node.population.is_finite() && node.population > 0.0) {
                return Err(MetapopError::InvalidPopulation { node: i, reason: format!("population {}", node.population) });
            }
        }
        let mut adjacency = adjacency_from_mobility(&mobility);
        if symmetrize {
            adjacency = adjacency.symmetrized();
        }
        Ok(Self { nodes, mobility, adjacency })
    }

    /// Seeded synthetic graph: mobility from `synth_mobility(n, density, seed)`
    /// and populations from a stream derived from the same seed.
    pub fn synthetic(n: usize, density: f64, seed: u64) -> Result<Self, MetapopError> {
        let mobility = synth_mobility(n, density, seed)?;
        let nodes = synth_populations(n, seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
        Self::new(nodes, mobility, false)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodePopulation] {
        &self.nodes
    }

    pub fn mobility(&self) -> &MobilityMatrix {
        &self.mobility
    }

    pub fn adjacency(&self) -> &BinaryAdjacency {
        &self.adjacency
    }

    /// `D^{-1/2} A D^{-1/2}`.
    pub fn normalized_adjacency(&self) -> CsrMatrix<f64> {
        normalize_adjacency(&self.adjacency)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self, MetapopError> {
        let nodes = perm.iter().map(|&p| self.nodes[p].clone()).collect();
        let symmetrize = self.adjacency != adjacency_from_mobility(&self.mobility);
        Self::new(nodes, self.mobility.permuted(perm), symmetrize)
    }

    pub fn summary(&self) -> GraphSummary {
        let n = self.n();
        let mut histogram = BTreeMap::new();
        for i in 0..n {
            *histogram.entry(self.adjacency.out_degree(i)).or_insert(0usize) += 1;
        }
        let edges = self.adjacency.edge_count();
        GraphSummary {
            n,
            edges,
            density: edges as f64 / (n * (n - 1)) as f64,
            symmetric: self.adjacency.is_symmetric(),
            total_population: self.nodes.iter().map(|p| p.population).sum(),
            degree_histogram: histogram.into_iter().map(|(degree, count)| DegreeCount { degree, count }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCount {
    pub degree: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n: usize,
    pub edges: usize,
    /// Nonzero share of the off-diagonal adjacency entries.
    pub density: f64,
    pub symmetric: bool,
    pub total_population: f64,
    pub degree_histogram: Vec<DegreeCount>,
}
