use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use tooldag::eval::{
    corpus_threshold, decode_dag, logo_cv, scored_trajectories, symmetric_difference, transitive_consistency, GroupBy,
    Task, TransitiveConsistency,
};
use tooldag::oracle::pair_space;
use tooldag::probe::ProbeConfig;

use super::{options_for, parse_family, parse_group_by, CorpusArgs, ProbeFlags};
use crate::config::Overrides;
use crate::corpus::{load_corpus, CorpusConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json, write_jsonl};

pub const NAME: &str = "decode";

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, value_parser = parse_group_by)]
    pub group_by: Option<GroupBy>,
    /// Random graphs per trajectory for the transitive-consistency null.
    #[arg(long)]
    pub n_sims: Option<usize>,
    #[command(flatten)]
    pub probe: ProbeFlags,
}

impl DecodeArgs {
    pub fn overrides(&self, seed: Option<u64>) -> Overrides {
        let mut o = Overrides::default();
        self.corpus.apply(&mut o, "");
        o.set("features", self.features.as_ref())
            .set("group_by", self.group_by)
            .set("n_sims", self.n_sims)
            .set("seed", seed);
        self.probe.apply(&mut o);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    pub features: String,
    pub group_by: GroupBy,
    pub n_sims: usize,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            corpus: CorpusConfig::default(),
            features: "residual:V1".into(),
            group_by: GroupBy::Trajectory,
            n_sims: 1000,
            seed: tooldag::DEFAULT_SEED,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Decoded {
    trajectory_id: String,
    n_agent: usize,
    direct_edges: Vec<(usize, usize)>,
    oracle_edges: Vec<(usize, usize)>,
    sd: usize,
    acyclic: bool,
}

#[derive(Debug, Serialize)]
struct SdRow<'a> {
    trajectory_id: &'a str,
    n_agent: usize,
    n_decoded_edges: usize,
    n_oracle_edges: usize,
    sd: usize,
    acyclic: bool,
}

#[derive(Debug, Serialize)]
struct DecodeReport {
    family: String,
    threshold: f64,
    n_decoded: usize,
    /// Trajectories with unscored rows (skipped folds).
    dropped: Vec<String>,
    n_acyclic: usize,
    all_acyclic: bool,
    sd_mean: Option<f64>,
    sd_median: Option<f64>,
    frac_exact: Option<f64>,
    transitive_decoded: TransitiveConsistency,
    transitive_oracle: TransitiveConsistency,
}

pub fn run(cfg: &DecodeConfig, dir: &Path) -> CliResult<()> {
    let family = parse_family(&cfg.features)?;
    let corpus = load_corpus(&cfg.corpus)?;
    let ds = corpus.dataset(&options_for(cfg.group_by, &[&family])?)?;
    if let Some(why) = tooldag::eval::untestable_reason(&ds, Task::Direct) {
        return Err(CliError::Usage(format!("cannot decode: {why}")));
    }
    let labels = ds.labels(Task::Direct);
    let scores = logo_cv(&ds, &family, &labels, &cfg.probe)?;
    let threshold = corpus_threshold(&ds.meta, &scores.scores, Task::Direct)?;
    let (scored, dropped) = scored_trajectories(&ds.meta, &scores.scores)?;

    let mut decoded = Vec::with_capacity(scored.len());
    let mut graphs = Vec::with_capacity(scored.len());
    for t in &scored {
        let d = decode_dag(t.n, &t.scores, threshold)?;
        let sd = symmetric_difference(d.graph.direct_edges(), t.oracle.direct_edges(), &pair_space(t.n));
        decoded.push(Decoded {
            trajectory_id: t.trajectory_id.clone(),
            n_agent: t.n,
            direct_edges: d.graph.direct_edges().iter().copied().collect(),
            oracle_edges: t.oracle.direct_edges().iter().copied().collect(),
            sd,
            acyclic: d.acyclic,
        });
        graphs.push(d.graph);
    }
    let oracle_graphs: Vec<_> = scored.iter().map(|t| t.oracle.clone()).collect();

    let mut sds: Vec<usize> = decoded.iter().map(|d| d.sd).collect();
    sds.sort_unstable();
    let k = sds.len();
    let sd_median = (k > 0).then(|| {
        if k % 2 == 1 {
            sds[k / 2] as f64
        } else {
            (sds[k / 2 - 1] + sds[k / 2]) as f64 / 2.0
        }
    });
    let n_acyclic = decoded.iter().filter(|d| d.acyclic).count();
    let report = DecodeReport {
        family: family.name(),
        threshold,
        n_decoded: k,
        dropped,
        n_acyclic,
        all_acyclic: n_acyclic == k,
        sd_mean: (k > 0).then(|| sds.iter().sum::<usize>() as f64 / k as f64),
        sd_median,
        frac_exact: (k > 0).then(|| sds.iter().filter(|&&s| s == 0).count() as f64 / k as f64),
        transitive_decoded: transitive_consistency(&graphs, cfg.n_sims, cfg.seed)?,
        transitive_oracle: transitive_consistency(&oracle_graphs, cfg.n_sims, cfg.seed)?,
    };

    write_jsonl(&dir.join("decoded.jsonl"), &decoded)?;
    let rows: Vec<SdRow> = decoded
        .iter()
        .map(|d| SdRow {
            trajectory_id: &d.trajectory_id,
            n_agent: d.n_agent,
            n_decoded_edges: d.direct_edges.len(),
            n_oracle_edges: d.oracle_edges.len(),
            sd: d.sd,
            acyclic: d.acyclic,
        })
        .collect();
    write_csv(&dir.join("sd.csv"), &rows)?;
    write_json(&dir.join("decode.json"), &report)
}
