//! Node populations and their age structure.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetapopError;
use crate::epi::params::{normalize_shares, AGE_GROUPS, DEFAULT_AGE_SHARES};

/// Range of synthetic node populations; sizes are log-uniform inside it.
pub const SYNTH_POPULATION_RANGE: (f64, f64) = (50_000.0, 500_000.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePopulation {
    pub population: f64,
    pub age_shares: [f64; AGE_GROUPS],
}

impl NodePopulation {
    pub fn new(population: f64) -> Self {
        Self { population, age_shares: DEFAULT_AGE_SHARES }
    }

    pub fn age_counts(&self) -> [f64; AGE_GROUPS] {
        std::array::from_fn(|a| self.population * self.age_shares[a])
    }
}

pub fn synth_populations(n: usize, seed: u64) -> Vec<NodePopulation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (SYNTH_POPULATION_RANGE.0.ln(), SYNTH_POPULATION_RANGE.1.ln());
    (0..n)
        .map(|_| NodePopulation::new((lo + rng.random::<f64>() * (hi - lo)).exp().round()))
        .collect()
}

/// Reads `node_id,population,share_0,...,share_5` rows (with a header).
///
/// Rows may come in any order but node ids must cover `0..n` exactly once.
/// Age shares are renormalized to sum to one.
pub fn parse_populations(reader: impl std::io::Read) -> Result<Vec<NodePopulation>, MetapopError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<(usize, NodePopulation)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 2 + AGE_GROUPS {
            return Err(MetapopError::Parse {
                row: line,
                col: None,
                message: format!("expected {} columns, found {}", 2 + AGE_GROUPS, record.len()),
            });
        }
        let field = |j: usize| -> Result<f64, MetapopError> {
            record[j].parse::<f64>().map_err(|_| MetapopError::Parse {
                row: line,
                col: Some(j + 1),
                message: format!("not a number: {:?}", &record[j]),
            })
        };
        let id = record[0].parse::<usize>().map_err(|_| MetapopError::Parse {
            row: line,
            col: Some(1),
            message: format!("not a node id: {:?}", &record[0]),
        })?;
        let population = field(1)?;
        if !(population.is_finite() && population > 0.0) {
            return Err(MetapopError::InvalidPopulation { node: id, reason: format!("population {population}") });
        }
        let mut shares = [0.0; AGE_GROUPS];
        for (a, s) in shares.iter_mut().enumerate() {
            *s = field(2 + a)?;
        }
        let age_shares = normalize_shares(&shares)
            .map_err(|e| MetapopError::InvalidPopulation { node: id, reason: e.to_string() })?;
        rows.push((id, NodePopulation { population, age_shares }));
    }
    rows.sort_by_key(|(id, _)| *id);
    for (expected, (id, _)) in rows.iter().enumerate() {
        if *id != expected {
            return Err(MetapopError::InvalidPopulation {
                node: expected,
                reason: format!("node ids must be 0..{} without gaps or repeats, found {id}", rows.len()),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

pub fn load_populations(path: impl AsRef<Path>) -> Result<Vec<NodePopulation>, MetapopError> {
    parse_populations(std::fs::File::open(path)?)
}

pub fn write_populations<W: std::io::Write>(writer: W, nodes: &[NodePopulation]) -> Result<(), MetapopError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["node_id".to_string(), "population".to_string()];
    header.extend((0..AGE_GROUPS).map(|a| format!("share_{a}")));
    w.write_record(&header)?;
    for (id, node) in nodes.iter().enumerate() {
        let mut row = vec![id.to_string(), node.population.to_string()];
        row.extend(node.age_shares.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_populations_in_range_and_seeded() {
        let pops = synth_populations(200, 5);
        let (lo, hi) = SYNTH_POPULATION_RANGE;
        assert!(pops.iter().all(|p| (lo..=hi).contains(&p.population)));
        assert_eq!(pops, synth_populations(200, 5));
    }

    #[test]
    fn csv_shares_are_renormalized() {
        let text = "node_id,population,s0,s1,s2,s3,s4,s5\n1,2000,1,1,1,1,1,1\n0,1000,2,0,0,0,0,2\n";
        let pops = parse_populations(text.as_bytes()).unwrap();
        assert_eq!(pops[0].population, 1000.0);
        assert_eq!(pops[0].age_shares[0], 0.5);
        assert!((pops[1].age_shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_errors() {
        let gap = "node_id,population,a,b,c,d,e,f\n0,10,1,1,1,1,1,1\n2,10,1,1,1,1,1,1\n";
        assert!(matches!(parse_populations(gap.as_bytes()), Err(MetapopError::InvalidPopulation { .. })));
        let bad = "node_id,population,a,b,c,d,e,f\n0,ten,1,1,1,1,1,1\n";
        assert!(matches!(parse_populations(bad.as_bytes()), Err(MetapopError::Parse { row: 2, col: Some(2), .. })));
    }

    #[test]
    fn csv_round_trip() {
        let pops = synth_populations(4, 9);
        let mut out = Vec::new();
        write_populations(&mut out, &pops).unwrap();
        let back = parse_populations(out.as_slice()).unwrap();
        for (a, b) in pops.iter().zip(&back) {
            assert_eq!(a.population, b.population);
            for (x, y) in a.age_shares.iter().zip(&b.age_shares) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
