use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Disjoint train, validation and test indices covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle, then 80/10/10 with validation and test rounded to the nearest sample.
pub fn split_dataset(n: usize, seed: u64) -> Result<SplitPlan, EvalError> {
    if n < MIN_SPLIT_SAMPLES {
        return Err(EvalError::TooFewSamples { needed: MIN_SPLIT_SAMPLES, found: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = (n as f64 * 0.1).round() as usize;
    let test = order.split_off(n - tenth);
    let validation = order.split_off(n - 2 * tenth);
    Ok(SplitPlan { train: order, validation, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions() {
        for (n, sizes) in [(10, (8, 1, 1)), (1000, (800, 100, 100)), (300, (240, 30, 30)), (16, (12, 2, 2))] {
            let p = split_dataset(n, 3).unwrap();
            assert_eq!((p.train.len(), p.validation.len(), p.test.len()), sizes);
            let mut all: Vec<usize> = p.train.iter().chain(&p.validation).chain(&p.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(split_dataset(50, 1).unwrap(), split_dataset(50, 1).unwrap());
        assert_ne!(split_dataset(50, 1).unwrap(), split_dataset(50, 2).unwrap());
        assert!(matches!(split_dataset(9, 0), Err(EvalError::TooFewSamples { .. })));
    }
}
