use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationNull {
    pub observed: f64,
    pub null_values: Vec<f64>,
    pub n_perms: usize,
    /// `count(null >= observed) / n_perms`.
    pub p_value: f64,
    /// `(count + 1) / (n_perms + 1)`.
    pub p_value_smoothed: f64,
    pub null_mean: f64,
    pub null_max: f64,
}

impl PermutationNull {
    pub fn from_values(observed: f64, null_values: Vec<f64>) -> Result<Self> {
        let n = null_values.len();
        if n == 0 {
            return Err(Error::Invalid("empty null distribution".into()));
        }
        let count = null_values.iter().filter(|&&v| v >= observed).count();
        Ok(PermutationNull {
            observed,
            n_perms: n,
            p_value: count as f64 / n as f64,
            p_value_smoothed: (count + 1) as f64 / (n + 1) as f64,
            null_mean: null_values.iter().sum::<f64>() / n as f64,
            null_max: null_values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            null_values,
        })
    }
}

/// Labels shuffled uniformly over the whole pool with `ChaCha8(seed)`.
pub fn permuted_labels(labels: &[bool], seed: u64) -> Vec<bool> {
    let mut out = labels.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Rerun `pipeline` on label permutations; permutation `p` uses seed
/// `base_seed + p`.
pub fn permutation_control<P>(labels: &[bool], observed: f64, pipeline: P, n_perms: usize, base_seed: u64) -> Result<PermutationNull>
where
    P: Fn(&[bool]) -> Result<f64> + Sync,
{
    if n_perms < 1 {
        return Err(Error::Invalid("n_perms must be at least 1".into()));
    }
    let values: Result<Vec<f64>> = (0..n_perms)
        .into_par_iter()
        .map(|p| pipeline(&permuted_labels(labels, base_seed.wrapping_add(p as u64))))
        .collect();
    PermutationNull::from_values(observed, values?)
}
