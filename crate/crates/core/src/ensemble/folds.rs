use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A k-fold partition of row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    /// Fold index of every row.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

/// Shuffled round-robin assignment; fold sizes differ by at most one.
pub fn make_folds(n_rows: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if n_rows < n_folds {
        return Err(Error::InvalidArgument(format!(
            "{n_rows} rows cannot fill {n_folds} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n_rows];
    for (k, &row) in perm.iter().enumerate() {
        assignment[row] = k % n_folds;
    }
    Ok(FoldPlan {
        n_folds,
        assignment,
        seed,
    })
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.assignment.len()
    }

    /// Rows of fold `f`, ascending.
    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.assignment[i] == f).collect()
    }

    /// `(training rows, held-out rows)` for fold `f`, both ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n_rows()).partition(|&i| self.assignment[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}
