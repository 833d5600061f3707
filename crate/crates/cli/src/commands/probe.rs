use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use tooldag::eval::{
    conditional_gap, evaluate, logo_transfer, per_layer_profile, stratified_report, EvalOptions, EvalReport, FeatureSpec,
    GroupBy, PairDataset, StratumAuroc, Task,
};
use tooldag::probe::{save_probe, FittedProbe, ProbeConfig};

use super::{options_for, parse_family, parse_group_by, CorpusArgs, ProbeFlags};
use crate::config::Overrides;
use crate::corpus::{load_corpus, CorpusConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json};

pub const NAME: &str = "probe";

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Feature family, blocks joined by `+` (e.g. `residual:V1`).
    #[arg(long)]
    pub features: Option<String>,
    /// `direct` or `transitive_only`.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_group_by)]
    pub group_by: Option<GroupBy>,
    /// Baseline family for the conditional gap.
    #[arg(long, conflicts_with = "no_baseline")]
    pub baseline: Option<String>,
    /// Skip the conditional gap.
    #[arg(long)]
    pub no_baseline: bool,
    /// Also profile every cached layer on its own.
    #[arg(long)]
    pub per_layer: bool,
    #[arg(long)]
    pub n_resamples: Option<usize>,
    #[arg(long)]
    pub n_perms: Option<usize>,
    /// Fit on all rows and store the probe in the run directory.
    #[arg(long)]
    pub save_probe: bool,
    #[command(flatten)]
    pub probe: ProbeFlags,
}

pub fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: tooldag::Error| e.to_string())
}

impl ProbeArgs {
    pub fn overrides(&self, seed: Option<u64>) -> Overrides {
        let mut o = Overrides::default();
        self.corpus.apply(&mut o, "");
        o.set("features", self.features.as_ref())
            .set("task", self.task)
            .set("group_by", self.group_by)
            .set("baseline", self.baseline.as_ref())
            .switch("per_layer", self.per_layer)
            .set("n_resamples", self.n_resamples)
            .set("n_perms", self.n_perms)
            .switch("save_probe", self.save_probe)
            .set("seed", seed);
        if self.no_baseline {
            o.set("baseline", Some(serde_json::Value::Null));
        }
        self.probe.apply(&mut o);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeCommandConfig {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    pub features: String,
    pub task: Task,
    pub group_by: GroupBy,
    pub baseline: Option<String>,
    pub per_layer: bool,
    pub strata: bool,
    /// Score direction-reversed pairs with the forward probe (strata only).
    pub reversed: bool,
    pub n_resamples: usize,
    pub n_perms: usize,
    pub seed: u64,
    pub probe: ProbeConfig,
    pub save_probe: bool,
}

impl Default for ProbeCommandConfig {
    fn default() -> Self {
        ProbeCommandConfig {
            corpus: CorpusConfig::default(),
            features: "residual:V1".into(),
            task: Task::Direct,
            group_by: GroupBy::Trajectory,
            baseline: Some("positional".into()),
            per_layer: false,
            strata: true,
            reversed: true,
            n_resamples: 2000,
            n_perms: 0,
            seed: tooldag::DEFAULT_SEED,
            probe: ProbeConfig::default(),
            save_probe: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct ScoreRow<'a> {
    trajectory_id: &'a str,
    i: usize,
    j: usize,
    label: bool,
    score: Option<f64>,
}

#[derive(Debug, Serialize)]
struct StratumRow {
    kind: &'static str,
    name: String,
    n_pairs: Option<usize>,
    n_positive: Option<usize>,
    auroc: Option<f64>,
    skipped: bool,
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub family: String,
    pub task: Task,
    pub n_pairs: usize,
    pub n_positive: usize,
    pub n_groups: usize,
    pub auroc: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub perm_p: Option<f64>,
    pub perm_null_mean: Option<f64>,
    pub untestable: Option<String>,
}

impl SummaryRow {
    pub fn of(r: &EvalReport) -> Self {
        SummaryRow {
            family: r.family.clone(),
            task: r.task,
            n_pairs: r.n_pairs,
            n_positive: r.n_positive,
            n_groups: r.n_groups,
            auroc: r.auroc,
            ci_lo: r.ci.as_ref().map(|c| c.lo),
            ci_hi: r.ci.as_ref().map(|c| c.hi),
            perm_p: r.permutation.as_ref().map(|p| p.p_value),
            perm_null_mean: r.permutation.as_ref().map(|p| p.null_mean),
            untestable: r.untestable.clone(),
        }
    }
}

/// The `reversed:` twin of a single-variant residual family, when the
/// dataset carries it.
fn reversed_family(family: &FeatureSpec, ds: &PairDataset<f64>) -> Option<FeatureSpec> {
    if family.scaffold || family.blocks.len() != 1 {
        return None;
    }
    let variant = family.blocks[0].strip_prefix("residual:")?;
    let block = tooldag::eval::reversed_block(variant);
    ds.block(&block).ok()?;
    Some(FeatureSpec::new(&[block.as_str()]))
}

pub fn run(cfg: &ProbeCommandConfig, dir: &Path) -> CliResult<()> {
    let family = parse_family(&cfg.features)?;
    let baseline = cfg.baseline.as_deref().map(parse_family).transpose()?;
    let corpus = load_corpus(&cfg.corpus)?;

    let mut specs = vec![&family];
    if let Some(b) = &baseline {
        specs.push(b);
    }
    let mut opts = options_for(cfg.group_by, &specs)?;
    if cfg.per_layer {
        if let Some(store) = corpus.stores.first() {
            opts.per_layer = store.layer_ids().to_vec();
        }
    }
    let can_reverse = cfg.strata && cfg.reversed && family.blocks.len() == 1 && family.blocks[0].starts_with("residual:");
    opts.reversed = can_reverse;
    let ds = corpus.dataset(&opts)?;

    let eval_opts = EvalOptions {
        probe: cfg.probe,
        n_resamples: cfg.n_resamples,
        n_perms: cfg.n_perms,
        seed: cfg.seed,
    };
    let (mut report, scores) = evaluate(&ds, &family, cfg.task, &eval_opts)?;
    let labels = ds.labels(cfg.task);

    if report.untestable.is_none() {
        if let Some(b) = &baseline {
            if b == &family {
                log::warn!("baseline equals the probed family; no conditional gap");
            } else {
                report.conditional_gap =
                    Some(conditional_gap(&ds, &family, b, &labels, &cfg.probe, cfg.n_resamples, cfg.seed)?);
            }
        }
        if cfg.per_layer {
            report.per_layer = per_layer_profile(&ds, &opts.per_layer, &labels, &cfg.probe)?;
        }
        if let (true, Some(s)) = (cfg.strata, &scores) {
            let rev = match reversed_family(&family, &ds) {
                Some(r) => Some(logo_transfer(&ds, &family, &r, &labels, &cfg.probe)?.scores),
                None => None,
            };
            report.strata = Some(stratified_report(&ds.meta, cfg.task, &s.scores, rev.as_deref())?);
        }
    }

    if cfg.save_probe {
        if report.untestable.is_some() || family.scaffold {
            return Err(CliError::Usage(
                "--save-probe needs a testable task and a family without scaffold columns".into(),
            ));
        }
        let rows: Vec<usize> = (0..ds.len()).collect();
        let x = family.design(&ds, &rows, None)?;
        let probe = FittedProbe::fit(x.view(), &labels, &cfg.probe)?;
        save_probe(dir, "probe", &probe, &family.blocks)?;
    }

    write_json(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("summary.csv"), &[SummaryRow::of(&report)])?;
    let score_rows: Vec<ScoreRow> = ds
        .meta
        .iter()
        .enumerate()
        .map(|(r, m)| ScoreRow {
            trajectory_id: &m.trajectory_id,
            i: m.i,
            j: m.j,
            label: labels[r],
            score: scores.as_ref().and_then(|s| s.scores[r]),
        })
        .collect();
    write_csv(&dir.join("scores.csv"), &score_rows)?;
    if !report.per_layer.is_empty() {
        write_csv(&dir.join("per_layer.csv"), &report.per_layer)?;
    }
    if let Some(st) = &report.strata {
        let stratum = |kind, s: &'_ StratumAuroc| StratumRow {
            kind,
            name: s.name.clone(),
            n_pairs: Some(s.n_pairs),
            n_positive: Some(s.n_positive),
            auroc: s.auroc,
            skipped: s.skipped,
        };
        let mut rows: Vec<StratumRow> = st.hop.iter().map(|s| stratum("hop", s)).collect();
        rows.extend(st.length.iter().map(|s| stratum("length", s)));
        rows.push(StratumRow {
            kind: "tool_pair",
            name: format!("{} of {} strata", st.tool_pair.n_used, st.tool_pair.n_strata),
            n_pairs: None,
            n_positive: None,
            auroc: st.tool_pair.within_auroc,
            skipped: st.tool_pair.within_auroc.is_none(),
        });
        rows.push(StratumRow {
            kind: "reversed",
            name: "all".into(),
            n_pairs: None,
            n_positive: None,
            auroc: st.reversed_auroc,
            skipped: st.reversed_auroc.is_none(),
        });
        write_csv(&dir.join("strata.csv"), &rows)?;
    }
    Ok(())
}
