use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tooldag::eval::{conditional_gap, evaluate, EvalOptions, EvalReport, FeatureSpec, GapReport, GroupBy, Task, SURFACE};
use tooldag::probe::ProbeConfig;

use super::probe::{parse_task, SummaryRow};
use super::{options_for, parse_family, parse_group_by, CorpusArgs, ProbeFlags};
use crate::config::Overrides;
use crate::corpus::{load_corpus, CorpusConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json};

pub const NAME: &str = "controls";

#[derive(Args, Debug)]
pub struct ControlsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Residual family under test.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_group_by)]
    pub group_by: Option<GroupBy>,
    /// Label permutations for the residual family.
    #[arg(long)]
    pub n_perms: Option<usize>,
    #[arg(long)]
    pub n_resamples: Option<usize>,
    /// Compare against a randomly initialised model's activations.
    #[arg(long)]
    pub random_init: bool,
    /// Activation directory of the randomly initialised model.
    #[arg(long)]
    pub random_init_activations: Option<PathBuf>,
    #[command(flatten)]
    pub probe: ProbeFlags,
}

impl ControlsArgs {
    pub fn overrides(&self, seed: Option<u64>) -> Overrides {
        let mut o = Overrides::default();
        self.corpus.apply(&mut o, "");
        o.set("features", self.features.as_ref())
            .set("task", self.task)
            .set("group_by", self.group_by)
            .set("n_perms", self.n_perms)
            .set("n_resamples", self.n_resamples)
            .switch("random_init", self.random_init)
            .set("random_init_activations", self.random_init_activations.as_ref())
            .set("seed", seed);
        self.probe.apply(&mut o);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlsConfig {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    pub features: String,
    pub task: Task,
    pub group_by: GroupBy,
    pub n_perms: usize,
    pub n_resamples: usize,
    pub random_init: bool,
    pub random_init_activations: Option<PathBuf>,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for ControlsConfig {
    fn default() -> Self {
        ControlsConfig {
            corpus: CorpusConfig::default(),
            features: "residual:V1".into(),
            task: Task::Direct,
            group_by: GroupBy::Trajectory,
            n_perms: 200,
            n_resamples: 2000,
            random_init: false,
            random_init_activations: None,
            seed: tooldag::DEFAULT_SEED,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Controls {
    task: Task,
    /// Residual family with its permutation control, then the baselines.
    families: Vec<EvalReport>,
    /// Residual family over each baseline.
    gaps: Vec<GapReport>,
    /// Residual family on the randomly initialised model's activations.
    random_init: Option<EvalReport>,
}

#[derive(Debug, Serialize)]
struct GapRow<'a> {
    baseline: &'a str,
    family: &'a str,
    baseline_auroc: f64,
    joint_auroc: f64,
    delta: f64,
    lo: f64,
    hi: f64,
    p_delta_le_zero: Option<f64>,
    family_delta: f64,
    n_pairs: usize,
}

pub fn run(cfg: &ControlsConfig, dir: &Path) -> CliResult<()> {
    let random_dir = match (cfg.random_init, &cfg.random_init_activations) {
        (true, None) => {
            return Err(CliError::Usage(
                "--random-init needs --random-init-activations (a second activation directory)".into(),
            ))
        }
        (true, Some(d)) if !d.is_dir() => {
            return Err(CliError::Usage(format!("random-init activation directory {} does not exist", d.display())))
        }
        (true, Some(d)) => Some(d.clone()),
        (false, _) => None,
    };
    let family = parse_family(&cfg.features)?;
    let baselines = [FeatureSpec::positional(), FeatureSpec::scaffold(), FeatureSpec::new(&[SURFACE])];
    let corpus = load_corpus(&cfg.corpus)?;
    let mut specs: Vec<&FeatureSpec> = vec![&family];
    specs.extend(baselines.iter());
    let ds = corpus.dataset(&options_for(cfg.group_by, &specs)?)?;

    let with_perms = EvalOptions {
        probe: cfg.probe,
        n_resamples: cfg.n_resamples,
        n_perms: cfg.n_perms,
        seed: cfg.seed,
    };
    let plain = EvalOptions { n_perms: 0, ..with_perms.clone() };
    let mut families = vec![evaluate(&ds, &family, cfg.task, &with_perms)?.0];
    for b in &baselines {
        families.push(evaluate(&ds, b, cfg.task, &plain)?.0);
    }
    let mut gaps = Vec::new();
    if families[0].untestable.is_none() {
        let labels = ds.labels(cfg.task);
        for b in &baselines {
            gaps.push(conditional_gap(&ds, &family, b, &labels, &cfg.probe, cfg.n_resamples, cfg.seed)?);
        }
    }

    let random_init = match random_dir {
        Some(act) => {
            let rcfg = CorpusConfig {
                activations: Some(act),
                ..cfg.corpus.clone()
            };
            let rcorpus = load_corpus(&rcfg)?;
            let rds = rcorpus.dataset(&options_for(cfg.group_by, &[&family])?)?;
            Some(evaluate(&rds, &family, cfg.task, &with_perms)?.0)
        }
        None => None,
    };

    let mut summary: Vec<SummaryRow> = families.iter().map(SummaryRow::of).collect();
    if let Some(r) = &random_init {
        let mut row = SummaryRow::of(r);
        row.family = format!("random_init:{}", row.family);
        summary.push(row);
    }
    write_csv(&dir.join("controls.csv"), &summary)?;
    let gap_rows: Vec<GapRow> = gaps
        .iter()
        .map(|g| GapRow {
            baseline: &g.baseline,
            family: &g.family,
            baseline_auroc: g.baseline_auroc,
            joint_auroc: g.joint_auroc,
            delta: g.delta.point,
            lo: g.delta.lo,
            hi: g.delta.hi,
            p_delta_le_zero: g.delta.p_delta_le_zero,
            family_delta: g.family_delta.point,
            n_pairs: g.n_pairs,
        })
        .collect();
    write_csv(&dir.join("gaps.csv"), &gap_rows)?;
    write_json(
        &dir.join("controls.json"),
        &Controls {
            task: cfg.task,
            families,
            gaps,
            random_init,
        },
    )
}
