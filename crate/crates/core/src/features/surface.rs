//! Fixed 36-wide surface-form block.
//!
//! | cols   | content                                                   |
//! |--------|-----------------------------------------------------------|
//! | 0      | longest common substring length, chars                    |
//! | 1..4   | indicators: that length is at least 4, 8, 16              |
//! | 4      | distinct shared character 4-grams                         |
//! | 5      | Jaccard over character 4-grams                            |
//! | 6      | fraction of argument 4-grams present in the output        |
//! | 7      | Jaccard over character 3-grams                            |
//! | 8, 9   | `ln(1 + len)` of the output and of the arguments          |
//! | 10..20 | FNV-1a hashed one-hot of `tool_i` (10 slots)              |
//! | 20..30 | FNV-1a hashed one-hot of `tool_j`                         |
//! | 30     | `tool_i == tool_j`                                        |
//! | 31..36 | positional scalars                                        |
//!
//! Texts are the normalised output of call `i` and the normalised argument
//! serialisation of call `j`, as seen by the substring oracle.

use std::collections::HashSet;

use crate::error::Result;
use crate::oracle::{longest_common_substring, NormalizedCalls};
use crate::scalar::Scalar;
use crate::trajlog::Trajectory;

pub const SURFACE_WIDTH: usize = 36;
const HASH_SLOTS: u64 = 10;

/// 64-bit FNV-1a with the standard offset basis.
pub fn tool_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn grams(s: &[char], n: usize) -> HashSet<&[char]> {
    if s.len() < n {
        HashSet::new()
    } else {
        s.windows(n).collect()
    }
}

fn jaccard(a: &HashSet<&[char]>, b: &HashSet<&[char]>) -> (usize, f64) {
    let shared = a.intersection(b).count();
    let union = a.len() + b.len() - shared;
    (shared, if union == 0 { 0.0 } else { shared as f64 / union as f64 })
}

fn overlap(output: &[char], args: &[char]) -> [f64; 10] {
    let lcs = longest_common_substring(output, args);
    let (g4o, g4a) = (grams(output, 4), grams(args, 4));
    let (shared4, jac4) = jaccard(&g4o, &g4a);
    let (_, jac3) = jaccard(&grams(output, 3), &grams(args, 3));
    let contain = if g4a.is_empty() { 0.0 } else { shared4 as f64 / g4a.len() as f64 };
    let ind = |t: usize| if lcs >= t { 1.0 } else { 0.0 };
    [
        lcs as f64,
        ind(4),
        ind(8),
        ind(16),
        shared4 as f64,
        jac4,
        contain,
        jac3,
        (output.len() as f64).ln_1p(),
        (args.len() as f64).ln_1p(),
    ]
}

fn assemble<F: Scalar>(ov: [f64; 10], tool_i: &str, tool_j: &str, i: usize, j: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); SURFACE_WIDTH];
    for (o, v) in out.iter_mut().zip(ov) {
        *o = F::lit(v);
    }
    out[10 + (tool_hash(tool_i) % HASH_SLOTS) as usize] = F::one();
    out[20 + (tool_hash(tool_j) % HASH_SLOTS) as usize] = F::one();
    if tool_i == tool_j {
        out[30] = F::one();
    }
    out[31..].copy_from_slice(&super::positional::<F>(i, j, n));
    out
}

pub fn surface_features<F: Scalar>(traj: &Trajectory, i: usize, j: usize) -> Result<Vec<F>> {
    let calls = NormalizedCalls::new(traj)?;
    Ok(surface_pair(&calls, traj, i, j))
}

fn surface_pair<F: Scalar>(calls: &NormalizedCalls, traj: &Trajectory, i: usize, j: usize) -> Vec<F> {
    assemble(
        overlap(&calls.outputs[i], &calls.arguments[j]),
        &traj.calls[i].tool_name,
        &traj.calls[j].tool_name,
        i,
        j,
        traj.n_agent(),
    )
}

/// Surface rows for every `i < j` pair, `i`-major.
pub fn surface_block<F: Scalar>(traj: &Trajectory) -> Result<Vec<Vec<F>>> {
    let calls = NormalizedCalls::new(traj)?;
    let n = traj.n_agent();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(surface_pair(&calls, traj, i, j));
        }
    }
    Ok(out)
}
