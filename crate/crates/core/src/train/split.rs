use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::GridPos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionSplit {
    pub train: Vec<GridPos>,
    pub val: Vec<GridPos>,
    pub test: Vec<GridPos>,
}

impl PositionSplit {
    /// Partitions sample indices by the split their probe position belongs to.
    pub fn partition(&self, positions: &[GridPos]) -> [Vec<usize>; 3] {
        let sets = [&self.train, &self.val, &self.test].map(|v| v.iter().copied().collect::<BTreeSet<_>>());
        let mut out = [Vec::new(), Vec::new(), Vec::new()];
        for (k, p) in positions.iter().enumerate() {
            if let Some(s) = sets.iter().position(|s| s.contains(p)) {
                out[s].push(k);
            }
        }
        out
    }
}

/// Shuffles the distinct positions with `seed` and takes floor(ratio·n) for
/// validation and test; the remainder trains.
pub fn split_by_position(positions: &[GridPos], ratios: [f64; 3], seed: u64) -> Result<PositionSplit> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut unique: Vec<GridPos> = positions.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let n = unique.len();
    if n < 3 {
        return Err(Error::Invalid(format!("need at least 3 probe positions to split, found {n}")));
    }
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (ratios[1] * n as f64 + 1e-9).floor() as usize;
    let n_test = (ratios[2] * n as f64 + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    Ok(PositionSplit {
        train: unique[..n_train].to_vec(),
        val: unique[n_train..n_train + n_val].to_vec(),
        test: unique[n_train + n_val..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: i32, h: i32) -> Vec<GridPos> {
        (0..w).flat_map(|i| (0..h).map(move |j| GridPos { i, j })).collect()
    }

    #[test]
    fn ten_positions() {
        let s = split_by_position(&grid(5, 2), [0.7, 0.2, 0.1], 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 1));
    }

    #[test]
    fn too_few_positions() {
        assert!(split_by_position(&grid(2, 1), [0.7, 0.2, 0.1], 0).is_err());
        assert!(split_by_position(&grid(3, 3), [0.7, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn partition_follows_positions() {
        let positions: Vec<GridPos> = grid(4, 3).into_iter().flat_map(|p| [p; 4]).collect();
        let s = split_by_position(&positions, [0.5, 0.25, 0.25], 3).unwrap();
        let parts = s.partition(&positions);
        assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), positions.len());
        assert_eq!(parts[0].len(), 4 * s.train.len());
        for k in &parts[1] {
            assert!(s.val.contains(&positions[*k]));
        }
    }
}
