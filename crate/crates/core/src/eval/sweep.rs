use serde::{Deserialize, Serialize};

use super::dataset::{FeatureSpec, PairDataset, Task};
use super::logo::logo_cv;
use super::report::{conditional_gap, untestable_reason};
use crate::error::Result;
use crate::probe::ProbeConfig;
use crate::scalar::Scalar;
use crate::stats::{spearman, BootstrapResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub family: FeatureSpec,
    /// Task on which the positional baseline and the gap are measured.
    pub delta_task: Task,
    pub min_groups: usize,
    pub min_positives: usize,
    /// Transitive AUROC is reported only above this many positives.
    pub min_transitive_positives: usize,
    /// Baselines above this mark a corpus as position-trivial.
    pub position_trivial_above: f64,
    pub probe: ProbeConfig,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            family: FeatureSpec::residual("V1"),
            delta_task: Task::Direct,
            min_groups: 15,
            min_positives: 30,
            min_transitive_positives: 30,
            position_trivial_above: 0.85,
            probe: ProbeConfig::default(),
            n_resamples: 2000,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub name: String,
    pub n_groups: usize,
    pub n_pairs: usize,
    pub n_direct_positive: usize,
    pub n_transitive_positive: usize,
    pub direct_auroc: Option<f64>,
    pub transitive_auroc: Option<f64>,
    /// Too few transitive positives for a transitive AUROC.
    pub transitive_untestable: bool,
    pub baseline_auroc: Option<f64>,
    pub delta: Option<BootstrapResult>,
    /// Number of independent resampling units.
    pub effective_n: usize,
    pub underpowered: bool,
    pub position_trivial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Descriptive Spearman correlation of baseline AUROC with the gap over
    /// rows that are not underpowered.
    pub spearman_rho: Option<f64>,
    pub n_trend_rows: usize,
}

fn task_auroc<F: Scalar>(ds: &PairDataset<F>, spec: &FeatureSpec, task: Task, cfg: &ProbeConfig) -> Result<Option<f64>> {
    if untestable_reason(ds, task).is_some() {
        return Ok(None);
    }
    Ok(logo_cv(ds, spec, &ds.labels(task), cfg)?.auroc(&ds.labels(task)))
}

/// One row per corpus plus the cross-corpus trend.
pub fn benchmark_sweep<F: Scalar>(corpora: &[(String, &PairDataset<F>)], cfg: &SweepConfig) -> Result<SweepTable> {
    let baseline = FeatureSpec::positional();
    let mut rows = Vec::with_capacity(corpora.len());
    for (name, ds) in corpora {
        let n_groups = ds.n_groups();
        let n_direct = ds.n_positive(Task::Direct);
        let n_trans = ds.n_positive(Task::TransitiveOnly);
        let underpowered = n_groups < cfg.min_groups || ds.n_positive(cfg.delta_task) < cfg.min_positives;
        let transitive_untestable = n_trans < cfg.min_transitive_positives;
        let direct_auroc = task_auroc(ds, &cfg.family, Task::Direct, &cfg.probe)?;
        let transitive_auroc = if transitive_untestable {
            None
        } else {
            task_auroc(ds, &cfg.family, Task::TransitiveOnly, &cfg.probe)?
        };
        let (baseline_auroc, delta) = if untestable_reason(ds, cfg.delta_task).is_some() {
            (None, None)
        } else {
            let gap = conditional_gap(
                ds,
                &cfg.family,
                &baseline,
                &ds.labels(cfg.delta_task),
                &cfg.probe,
                cfg.n_resamples,
                cfg.seed,
            )?;
            (Some(gap.baseline_auroc), Some(gap.delta))
        };
        rows.push(SweepRow {
            name: name.clone(),
            n_groups,
            n_pairs: ds.len(),
            n_direct_positive: n_direct,
            n_transitive_positive: n_trans,
            direct_auroc,
            transitive_auroc,
            transitive_untestable,
            position_trivial: baseline_auroc.is_some_and(|b| b > cfg.position_trivial_above),
            baseline_auroc,
            delta,
            effective_n: n_groups,
            underpowered,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| !r.underpowered)
        .filter_map(|r| Some((r.baseline_auroc?, r.delta.as_ref()?.point)))
        .unzip();
    Ok(SweepTable {
        spearman_rho: if xs.len() >= 2 { spearman(&xs, &ys) } else { None },
        n_trend_rows: xs.len(),
        rows,
    })
}
