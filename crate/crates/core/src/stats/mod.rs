//! Statistical primitives for the evaluation battery.

mod bootstrap;
mod hypothesis;
mod permutation;
mod rank;

use std::path::Path;

pub use bootstrap::{
    bca_ci, pair_groups, paired_auroc_delta, paired_bootstrap_delta, percentile_ci, pooled_auroc, quantile_sorted,
    BootstrapMethod, BootstrapResult, GroupScores, CONFIDENCE,
};
pub(crate) use bootstrap::resample_rng;
pub use hypothesis::{
    cohens_d_paired, fisher_exact_2x2, wilcoxon_signed_rank, CohenD, FisherResult, WilcoxonResult, WILCOXON_EXACT_MAX,
};
pub use permutation::{permutation_control, permuted_labels, PermutationNull};
pub use rank::{auroc, midranks, spearman};

use crate::error::Result;

/// One value per row under a `index,<column>` header.
pub fn write_values_csv(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", column])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))
}
