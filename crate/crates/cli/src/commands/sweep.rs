use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tooldag::eval::{benchmark_sweep, GroupBy, SweepConfig};
use tooldag::oracle::OracleKind;

use super::{options_for, parse_family, parse_group_by, parse_oracle, ProbeFlags};
use crate::config::Overrides;
use crate::corpus::{load_corpus, CorpusConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json};

pub const NAME: &str = "sweep";

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// `name=dir`, repeatable; each dir holds `log.jsonl` and `activations/`.
    #[arg(long = "corpus", value_parser = parse_named)]
    pub corpora: Vec<NamedCorpus>,
    #[arg(long, value_parser = parse_oracle)]
    pub oracle: Option<OracleKind>,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, value_parser = parse_group_by)]
    pub group_by: Option<GroupBy>,
    #[arg(long)]
    pub min_groups: Option<usize>,
    #[arg(long)]
    pub min_positives: Option<usize>,
    #[arg(long)]
    pub n_resamples: Option<usize>,
    #[command(flatten)]
    pub probe: ProbeFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCorpus {
    pub name: String,
    pub dir: PathBuf,
}

fn parse_named(s: &str) -> Result<NamedCorpus, String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok(NamedCorpus {
            name: name.into(),
            dir: dir.into(),
        }),
        _ => Err(format!("expected name=dir, got `{s}`")),
    }
}

impl SweepArgs {
    pub fn overrides(&self, seed: Option<u64>) -> CliResult<Overrides> {
        let mut o = Overrides::default();
        if !self.corpora.is_empty() {
            o.set("corpora", Some(&self.corpora));
        }
        let family = self.features.as_deref().map(parse_family).transpose()?;
        o.set("oracle", self.oracle)
            .set("family", family)
            .set("group_by", self.group_by)
            .set("min_groups", self.min_groups)
            .set("min_positives", self.min_positives)
            .set("n_resamples", self.n_resamples)
            .set("seed", seed);
        self.probe.apply(&mut o);
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepCommandConfig {
    pub corpora: Vec<NamedCorpus>,
    pub oracle: OracleKind,
    pub group_by: GroupBy,
    #[serde(flatten)]
    pub sweep: SweepConfig,
}

impl Default for SweepCommandConfig {
    fn default() -> Self {
        SweepCommandConfig {
            corpora: Vec::new(),
            oracle: OracleKind::Substring,
            group_by: GroupBy::Trajectory,
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Row<'a> {
    name: &'a str,
    n_groups: usize,
    n_pairs: usize,
    n_direct_positive: usize,
    n_transitive_positive: usize,
    direct_auroc: Option<f64>,
    transitive_auroc: Option<f64>,
    baseline_auroc: Option<f64>,
    delta: Option<f64>,
    delta_lo: Option<f64>,
    delta_hi: Option<f64>,
    effective_n: usize,
    underpowered: bool,
    position_trivial: bool,
}

pub fn run(cfg: &SweepCommandConfig, dir: &Path) -> CliResult<()> {
    if cfg.corpora.is_empty() {
        return Err(CliError::Usage("no corpora given (--corpus name=dir)".into()));
    }
    let opts = options_for(cfg.group_by, &[&cfg.sweep.family])?;
    let mut datasets = Vec::with_capacity(cfg.corpora.len());
    for c in &cfg.corpora {
        let cc = CorpusConfig {
            corpus: Some(c.dir.clone()),
            oracle: cfg.oracle,
            ..CorpusConfig::default()
        };
        log::info!("loading corpus {}", c.name);
        datasets.push((c.name.clone(), load_corpus(&cc)?.dataset(&opts)?));
    }
    let refs: Vec<(String, &_)> = datasets.iter().map(|(n, d)| (n.clone(), d)).collect();
    let table = benchmark_sweep(&refs, &cfg.sweep)?;
    let rows: Vec<Row> = table
        .rows
        .iter()
        .map(|r| Row {
            name: &r.name,
            n_groups: r.n_groups,
            n_pairs: r.n_pairs,
            n_direct_positive: r.n_direct_positive,
            n_transitive_positive: r.n_transitive_positive,
            direct_auroc: r.direct_auroc,
            transitive_auroc: r.transitive_auroc,
            baseline_auroc: r.baseline_auroc,
            delta: r.delta.as_ref().map(|d| d.point),
            delta_lo: r.delta.as_ref().map(|d| d.lo),
            delta_hi: r.delta.as_ref().map(|d| d.hi),
            effective_n: r.effective_n,
            underpowered: r.underpowered,
            position_trivial: r.position_trivial,
        })
        .collect();
    write_csv(&dir.join("sweep.csv"), &rows)?;
    write_json(&dir.join("sweep.json"), &table)
}
