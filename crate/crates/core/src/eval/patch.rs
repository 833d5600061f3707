use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{endpoint_features, pool_residual, FeatureVariant};
use crate::oracle::MinimalPair;
use crate::probe::FittedProbe;
use crate::scalar::Scalar;
use crate::stats::{bca_ci, BootstrapResult};
use crate::trajlog::{ActivationStore, Trajectory};

/// A minimal pair with the cached activations of both members.
#[derive(Debug, Clone, Copy)]
pub struct PatchInput<'a> {
    pub pair: &'a MinimalPair,
    pub donor: &'a Trajectory,
    pub donor_store: &'a ActivationStore,
    pub target: &'a Trajectory,
    pub target_store: &'a ActivationStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchResult {
    pub layer: u32,
    pub n_pairs: usize,
    /// Probability shift of the differing edge, positive toward the donor's
    /// oracle label.
    pub per_pair_delta: Vec<f64>,
    pub mean: f64,
    pub ci: Option<BootstrapResult>,
    pub frac_toward_donor: f64,
    /// The layer is outside the pooled set, so no patch can move the feature.
    pub structural_zero: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pair_delta<F: Scalar>(p: &PatchInput, probe: &FittedProbe<F>, variant: &FeatureVariant, layer: u32) -> Result<f64> {
    let (i, j) = p.pair.differing_edge;
    if j >= p.pair.shared_prefix_len || j >= p.target.n_agent() || j >= p.donor.n_agent() {
        return Err(Error::Invalid(format!(
            "differing edge ({i}, {j}) of {} / {} lies outside the shared prefix of {}",
            p.pair.donor_id, p.pair.target_id, p.pair.shared_prefix_len
        )));
    }
    for store in [p.donor_store, p.target_store] {
        if store.layer_position(layer).is_none() {
            return Err(Error::Invalid(format!(
                "layer {layer} is not cached for trajectory {}",
                store.trajectory_id()
            )));
        }
    }
    let tb_i = p.target.calls[i].boundary_index;
    let tb_j = p.target.calls[j].boundary_index;
    let donor_vec = p.donor_store.vector(p.donor.calls[i].boundary_index, layer)?;
    let patched = p.target_store.with_vector(tb_i, layer, donor_vec)?;
    let pooled_j: Array1<F> = pool_residual(p.target_store, tb_j, &variant.layer_ids)?;
    let before = endpoint_features(variant, &pool_residual(p.target_store, tb_i, &variant.layer_ids)?, &pooled_j);
    let after = endpoint_features(variant, &pool_residual(&patched, tb_i, &variant.layer_ids)?, &pooled_j);
    let s0 = sigmoid(probe.score_row(before.view())?.to_f64_value());
    let s1 = sigmoid(probe.score_row(after.view())?.to_f64_value());
    let sign = if p.pair.donor_has_edge { 1.0 } else { -1.0 };
    Ok(sign * (s1 - s0))
}

/// Swap layer `layer` of the target's call-`i` boundary vector for the
/// donor's, recompute the pooled pair feature of the differing edge and
/// rescore it with `probe`. Works on cached activations only.
pub fn patch_estimate<F: Scalar>(
    pairs: &[PatchInput],
    probe: &FittedProbe<F>,
    variant: &FeatureVariant,
    layer: u32,
    n_resamples: usize,
    seed: u64,
) -> Result<PatchResult> {
    if pairs.is_empty() {
        return Err(Error::Invalid("no minimal pairs to patch".into()));
    }
    let dim = pairs[0].target_store.hidden_dim();
    if probe.width() != variant.width(dim) {
        return Err(Error::Dimension(format!(
            "probe width {} does not match variant {} at hidden size {dim}",
            probe.width(),
            variant.name
        )));
    }
    let deltas: Vec<f64> = pairs
        .par_iter()
        .map(|p| pair_delta(p, probe, variant, layer))
        .collect::<Result<_>>()?;
    let n = deltas.len() as f64;
    let ci = if deltas.len() >= 2 && n_resamples > 0 {
        Some(bca_ci(
            &deltas,
            |xs| Some(xs.iter().copied().sum::<f64>() / xs.len() as f64),
            n_resamples,
            seed,
            "pair",
        )?)
    } else {
        None
    };
    Ok(PatchResult {
        layer,
        n_pairs: deltas.len(),
        mean: deltas.iter().sum::<f64>() / n,
        frac_toward_donor: deltas.iter().filter(|&&d| d > 0.0).count() as f64 / n,
        structural_zero: !variant.layer_ids.contains(&layer),
        ci,
        per_pair_delta: deltas,
    })
}
