use serde::{Deserialize, Serialize};

use super::dataset::{FeatureSpec, PairDataset, Task};
use super::logo::{logo_cv, LogoScores};
use super::strata::Strata;
use crate::error::{Error, Result};
use crate::features::FeatureVariant;
use crate::probe::ProbeConfig;
use crate::scalar::Scalar;
use crate::stats::{auroc, bca_ci, pair_groups, paired_auroc_delta, permutation_control, BootstrapResult, PermutationNull};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub probe: ProbeConfig,
    /// Bootstrap resamples; 0 skips intervals.
    pub n_resamples: usize,
    /// Label permutations; 0 skips the control.
    pub n_perms: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            probe: ProbeConfig::default(),
            n_resamples: 2000,
            n_perms: 0,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// AUROC gap of `baseline + family` over `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub baseline: String,
    pub family: String,
    pub joint: String,
    pub baseline_auroc: f64,
    pub joint_auroc: f64,
    pub family_auroc: f64,
    /// Joint minus baseline.
    pub delta: BootstrapResult,
    /// Family alone minus baseline.
    pub family_delta: BootstrapResult,
    /// Rows scored under all three fits.
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAuroc {
    pub layer: u32,
    pub raw: f64,
    /// `max(raw, 1 - raw)`.
    pub resolved: f64,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub family: String,
    pub n_pairs: usize,
    pub n_positive: usize,
    pub n_groups: usize,
    pub n_folds: usize,
    pub auroc: Option<f64>,
    pub ci: Option<BootstrapResult>,
    pub permutation: Option<PermutationNull>,
    pub conditional_gap: Option<GapReport>,
    pub per_layer: Vec<LayerAuroc>,
    pub strata: Option<Strata>,
    pub skipped_folds: Vec<String>,
    pub nonconverged_fits: usize,
    /// Why no AUROC could be computed, e.g. a task without positives.
    pub untestable: Option<String>,
}

impl EvalReport {
    fn empty(task: Task, family: String, n_pairs: usize, n_positive: usize, n_groups: usize) -> Self {
        EvalReport {
            task,
            family,
            n_pairs,
            n_positive,
            n_groups,
            n_folds: 0,
            auroc: None,
            ci: None,
            permutation: None,
            conditional_gap: None,
            per_layer: Vec::new(),
            strata: None,
            skipped_folds: Vec::new(),
            nonconverged_fits: 0,
            untestable: None,
        }
    }
}

/// Reason a task cannot be evaluated on this dataset, if any.
pub fn untestable_reason<F: Scalar>(ds: &PairDataset<F>, task: Task) -> Option<String> {
    let pos = ds.n_positive(task);
    if ds.is_empty() {
        Some("no pairs".into())
    } else if pos == 0 {
        Some(format!("no positive pairs for task {task}"))
    } else if pos == ds.len() {
        Some(format!("no negative pairs for task {task}"))
    } else if ds.n_groups() < 2 {
        Some("fewer than 2 groups".into())
    } else {
        None
    }
}

/// Group-resampled BCa interval of the pooled out-of-fold AUROC.
pub fn auroc_ci<F: Scalar>(
    ds: &PairDataset<F>,
    scores: &LogoScores,
    labels: &[bool],
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let groups: Vec<(Vec<bool>, Vec<f64>)> = scores.by_group(ds, labels).into_iter().map(|(_, y, s)| (y, s)).collect();
    bca_ci(
        &groups,
        |gs| {
            let (mut s, mut y) = (Vec::new(), Vec::new());
            for (gy, gsc) in gs {
                y.extend_from_slice(gy);
                s.extend_from_slice(gsc);
            }
            auroc(&s, &y).ok()
        },
        n_resamples,
        seed,
        "group",
    )
}

/// LOGO AUROC of one family on one task, with the group bootstrap interval
/// and the permutation control when requested.
pub fn evaluate<F: Scalar>(
    ds: &PairDataset<F>,
    spec: &FeatureSpec,
    task: Task,
    opts: &EvalOptions,
) -> Result<(EvalReport, Option<LogoScores>)> {
    spec.validate(ds)?;
    let labels = ds.labels(task);
    let mut report = EvalReport::empty(task, spec.name(), ds.len(), ds.n_positive(task), ds.n_groups());
    if let Some(reason) = untestable_reason(ds, task) {
        report.untestable = Some(reason);
        return Ok((report, None));
    }
    let scores = logo_cv(ds, spec, &labels, &opts.probe)?;
    report.n_folds = scores.n_folds;
    report.skipped_folds = scores.skipped_groups.clone();
    report.nonconverged_fits = scores.nonconverged_fits;
    report.auroc = scores.auroc(&labels);
    if report.auroc.is_none() {
        report.untestable = Some("out-of-fold scores cover a single class".into());
        return Ok((report, Some(scores)));
    }
    if opts.n_resamples > 0 {
        report.ci = Some(auroc_ci(ds, &scores, &labels, opts.n_resamples, opts.seed)?);
    }
    if opts.n_perms > 0 {
        let observed = report.auroc.expect("checked above");
        report.permutation = Some(permutation_control(
            &labels,
            observed,
            |perm| {
                logo_cv(ds, spec, perm, &opts.probe)?
                    .auroc(perm)
                    .ok_or_else(|| Error::Undefined("permuted run scored a single class".into()))
            },
            opts.n_perms,
            opts.seed,
        )?);
    }
    Ok((report, Some(scores)))
}

/// Conditional probing: LOGO for `baseline`, `baseline + family` and
/// `family` alone, with paired group-bootstrap deltas against the baseline.
pub fn conditional_gap<F: Scalar>(
    ds: &PairDataset<F>,
    family: &FeatureSpec,
    baseline: &FeatureSpec,
    labels: &[bool],
    cfg: &ProbeConfig,
    n_resamples: usize,
    seed: u64,
) -> Result<GapReport> {
    family.validate(ds)?;
    baseline.validate(ds)?;
    let joint = baseline.join(family);
    if joint == *baseline {
        return Err(Error::Invalid(format!(
            "family {family} adds nothing to baseline {baseline}"
        )));
    }
    let base = logo_cv(ds, baseline, labels, cfg)?;
    let both = logo_cv(ds, &joint, labels, cfg)?;
    let alone = logo_cv(ds, family, labels, cfg)?;
    // Only rows scored by all three fits enter the comparison.
    let keep: Vec<bool> = (0..ds.len())
        .map(|r| base.scores[r].is_some() && both.scores[r].is_some() && alone.scores[r].is_some())
        .collect();
    let masked = |s: &LogoScores| LogoScores {
        scores: s.scores.iter().zip(&keep).map(|(v, &k)| if k { *v } else { None }).collect(),
        ..s.clone()
    };
    let (base, both, alone) = (masked(&base), masked(&both), masked(&alone));
    let undefined = |name: &str| Error::Undefined(format!("{name} AUROC needs both classes"));
    let baseline_auroc = base.auroc(labels).ok_or_else(|| undefined("baseline"))?;
    let joint_auroc = both.auroc(labels).ok_or_else(|| undefined("joint"))?;
    let family_auroc = alone.auroc(labels).ok_or_else(|| undefined("family"))?;
    let b = base.by_group(ds, labels);
    let delta = paired_auroc_delta(&pair_groups(&both.by_group(ds, labels), &b)?, n_resamples, seed, "group")?;
    let family_delta = paired_auroc_delta(&pair_groups(&alone.by_group(ds, labels), &b)?, n_resamples, seed, "group")?;
    Ok(GapReport {
        baseline: baseline.name(),
        family: family.name(),
        joint: joint.name(),
        baseline_auroc,
        joint_auroc,
        family_auroc,
        delta,
        family_delta,
        n_pairs: keep.iter().filter(|&&k| k).count(),
    })
}

/// One LOGO run per single-layer block `residual:L<layer>`; values below
/// 0.5 are reported flipped alongside the raw AUROC.
pub fn per_layer_profile<F: Scalar>(
    ds: &PairDataset<F>,
    layers: &[u32],
    labels: &[bool],
    cfg: &ProbeConfig,
) -> Result<Vec<LayerAuroc>> {
    layers
        .iter()
        .map(|&layer| {
            let name = FeatureVariant::single_layer(layer).name;
            let spec = FeatureSpec::residual(&name);
            if ds.block(&spec.blocks[0]).is_err() {
                return Err(Error::Invalid(format!("layer {layer} has no single-layer block in the dataset")));
            }
            let raw = logo_cv(ds, &spec, labels, cfg)?
                .auroc(labels)
                .ok_or_else(|| Error::Undefined(format!("layer {layer} AUROC needs both classes")))?;
            Ok(LayerAuroc {
                layer,
                raw,
                resolved: raw.max(1.0 - raw),
                flipped: raw < 0.5,
            })
        })
        .collect()
}
