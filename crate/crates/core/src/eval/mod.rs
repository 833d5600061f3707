//! Leave-one-group-out evaluation and the analyses built on it: conditional
//! gaps, per-layer profiles, decoding, counterfactual comparisons, strata,
//! feature-level patching and the cross-corpus sweep.

mod counterfactual;
mod dataset;
mod decode;
mod logo;
mod patch;
mod report;
mod strata;
mod sweep;

pub use counterfactual::{corrupt_id_field, skip_tool_rewrite, Corruption};
pub use dataset::{
    residual_block, reversed_block, CorpusEntry, DatasetOptions, FeatureSpec, GroupBy, PairDataset, PairMeta, Task,
    POSITIONAL, SCAFFOLD, SURFACE,
};
pub use decode::{
    compare_paired_sd, corpus_threshold, decode_dag, f1_threshold, is_acyclic, scored_trajectories, symmetric_difference,
    transitive_consistency, DecodedGraph, ScoredTrajectory, SdMode, SdStats, TransitiveConsistency,
};
pub use logo::{logo_cv, logo_transfer, logo_with_aux, LogoScores};
pub use patch::{patch_estimate, PatchInput, PatchResult};
pub use report::{
    auroc_ci, conditional_gap, evaluate, per_layer_profile, untestable_reason, EvalOptions, EvalReport, GapReport,
    LayerAuroc,
};
pub use strata::{stratified_report, Strata, StratumAuroc, ToolPairStrata, HOP_BINS, LENGTH_BINS};
pub use sweep::{benchmark_sweep, SweepConfig, SweepRow, SweepTable};
