use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tooldag::eval::{
    compare_paired_sd, corpus_threshold, corrupt_id_field, logo_with_aux, scored_trajectories, skip_tool_rewrite,
    Corruption, GroupBy, ScoredTrajectory, SdMode, SdStats, Task,
};
use tooldag::probe::ProbeConfig;
use tooldag::trajlog::{pair_corpus, parse_log, write_log, Trajectory};

use super::{options_for, parse_family, CorpusArgs, ProbeFlags};
use crate::config::Overrides;
use crate::corpus::{load_corpus, load_schema, oracle_graphs, CorpusConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json, write_jsonl};

pub const NAME: &str = "counterfactual";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Transform {
    /// Flip characters of one `_id` field in the median call's output.
    ValueCorruption,
    /// Empty the median call's output.
    SkipTool,
}

#[derive(Args, Debug)]
pub struct CounterfactualArgs {
    /// The clean corpus.
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Write a counterpart log from the clean log instead of comparing.
    #[arg(long, value_enum)]
    pub transform: Option<Transform>,
    #[arg(long)]
    pub counterpart_corpus: Option<PathBuf>,
    #[arg(long)]
    pub counterpart_log: Option<PathBuf>,
    #[arg(long)]
    pub counterpart_activations: Option<PathBuf>,
    #[arg(long)]
    pub counterpart_edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<String>,
    #[command(flatten)]
    pub probe: ProbeFlags,
}

impl CounterfactualArgs {
    pub fn overrides(&self, seed: Option<u64>) -> Overrides {
        let mut o = Overrides::default();
        self.corpus.apply(&mut o, "");
        o.set("transform", self.transform)
            .set("counterpart.corpus", self.counterpart_corpus.as_ref())
            .set("counterpart.log", self.counterpart_log.as_ref())
            .set("counterpart.activations", self.counterpart_activations.as_ref())
            .set("counterpart.edges", self.counterpart_edges.as_ref())
            .set("features", self.features.as_ref())
            .set("seed", seed);
        self.probe.apply(&mut o);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterfactualConfig {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    pub counterpart: CorpusConfig,
    pub transform: Option<Transform>,
    pub features: String,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        CounterfactualConfig {
            corpus: CorpusConfig::default(),
            counterpart: CorpusConfig::default(),
            transform: None,
            features: "residual:V1".into(),
            seed: tooldag::DEFAULT_SEED,
            probe: ProbeConfig::default(),
        }
    }
}

pub fn run(cfg: &CounterfactualConfig, dir: &Path) -> CliResult<()> {
    match cfg.transform {
        Some(t) => run_transform(cfg, t, dir),
        None => run_compare(cfg, dir),
    }
}

#[derive(Debug, Serialize)]
struct TransformRow<'a> {
    trajectory_id: &'a str,
    counterpart_id: &'a str,
    call_index: usize,
    hit: Option<bool>,
    path: Option<&'a str>,
}

#[derive(Debug, Serialize)]
struct TransformSummary {
    transform: Transform,
    n_input: usize,
    n_written: usize,
    /// Non-probeable trajectories left out.
    skipped: Vec<String>,
    /// Value corruption only: a referenced field was corrupted.
    n_hit: Option<usize>,
    /// Value corruption only: some field was corrupted.
    n_changed: Option<usize>,
}

fn run_transform(cfg: &CounterfactualConfig, transform: Transform, dir: &Path) -> CliResult<()> {
    cfg.corpus.check()?;
    let all = parse_log(&cfg.corpus.log_path()?)?;
    let (clean, short): (Vec<Trajectory>, Vec<Trajectory>) = all.into_iter().partition(|t| t.is_probeable());
    let mut out = Vec::with_capacity(clean.len());
    let mut corruptions: Vec<Option<Corruption>> = Vec::with_capacity(clean.len());
    match transform {
        Transform::SkipTool => {
            for t in &clean {
                out.push(skip_tool_rewrite(t)?);
                corruptions.push(None);
            }
        }
        Transform::ValueCorruption => {
            let schema = cfg.corpus.schema.as_deref().map(load_schema).transpose()?;
            let graphs = oracle_graphs(&clean, cfg.corpus.oracle, schema.as_ref())?;
            for (k, (t, g)) in clean.iter().zip(&graphs).enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(k as u64);
                let (c, info) = corrupt_id_field(t, g, &mut rng)?;
                out.push(c);
                corruptions.push(Some(info));
            }
        }
    }
    write_log(&dir.join("log.jsonl"), &out)?;
    let rows: Vec<TransformRow> = clean
        .iter()
        .zip(&out)
        .zip(&corruptions)
        .map(|((t, c), info)| TransformRow {
            trajectory_id: &t.trajectory_id,
            counterpart_id: &c.trajectory_id,
            call_index: t.n_agent() / 2,
            hit: info.as_ref().map(|i| i.hit),
            path: info.as_ref().and_then(|i| i.path.as_deref()),
        })
        .collect();
    write_csv(&dir.join("transform.csv"), &rows)?;
    let infos: Vec<&Corruption> = corruptions.iter().flatten().collect();
    if transform == Transform::ValueCorruption {
        write_jsonl(&dir.join("corruptions.jsonl"), &infos)?;
    }
    let is_vc = transform == Transform::ValueCorruption;
    write_json(
        &dir.join("transform.json"),
        &TransformSummary {
            transform,
            n_input: clean.len() + short.len(),
            n_written: out.len(),
            skipped: short.into_iter().map(|t| t.trajectory_id).collect(),
            n_hit: is_vc.then(|| infos.iter().filter(|i| i.hit).count()),
            n_changed: is_vc.then(|| infos.iter().filter(|i| i.path.is_some()).count()),
        },
    )
}

#[derive(Debug, Serialize)]
struct PairRow<'a> {
    task_id: &'a str,
    clean_id: &'a str,
    counterpart_id: &'a str,
    sd_clean: usize,
    sd_counterpart: usize,
    sd_shift: usize,
}

#[derive(Debug, Serialize)]
struct Comparison {
    family: String,
    threshold: f64,
    n_pairs: usize,
    /// Task ids without a usable pair.
    excluded: Vec<String>,
    /// Trajectories left out because some of their rows were not scored.
    unscored: Vec<String>,
    plan_shift: SdStats,
    decoded_vs_oracle: SdStats,
}

fn run_compare(cfg: &CounterfactualConfig, dir: &Path) -> CliResult<()> {
    if cfg.counterpart.corpus.is_none() && cfg.counterpart.log.is_none() {
        return Err(CliError::Usage(
            "compare mode needs a counterpart corpus (--counterpart-corpus or --counterpart-log)".into(),
        ));
    }
    let family = parse_family(&cfg.features)?;
    let clean = load_corpus(&cfg.corpus)?;
    let cf = load_corpus(&cfg.counterpart)?;
    let pairing = pair_corpus(&clean.trajectories, &cf.trajectories)?;
    let opts = options_for(GroupBy::Task, &[&family])?;
    let ds = clean.dataset(&opts)?;
    let aux = cf.dataset(&opts)?;
    if let Some(why) = tooldag::eval::untestable_reason(&ds, Task::Direct) {
        return Err(CliError::Usage(format!("cannot compare: {why}")));
    }
    let labels = ds.labels(Task::Direct);
    let (scores, aux_scores) = logo_with_aux(&ds, &family, &labels, &cfg.probe, &aux)?;
    let threshold = corpus_threshold(&ds.meta, &scores.scores, Task::Direct)?;
    let (clean_scored, mut unscored) = scored_trajectories(&ds.meta, &scores.scores)?;
    let (cf_scored, cf_unscored) = scored_trajectories(&aux.meta, &aux_scores)?;
    unscored.extend(cf_unscored);
    let by_id = |v: Vec<ScoredTrajectory>| -> BTreeMap<String, ScoredTrajectory> {
        v.into_iter().map(|t| (t.trajectory_id.clone(), t)).collect()
    };
    let (clean_map, cf_map) = (by_id(clean_scored), by_id(cf_scored));
    let mut excluded = pairing.excluded.clone();
    let mut pairs = Vec::new();
    for (a, b) in &pairing.pairs {
        match (clean_map.get(&a.trajectory_id), cf_map.get(&b.trajectory_id)) {
            (Some(x), Some(y)) => pairs.push((x.clone(), y.clone())),
            _ => excluded.push(a.task_id.clone()),
        }
    }
    let plan_shift = compare_paired_sd(&pairs, SdMode::PlanShift, threshold)?;
    let decoded_vs_oracle = compare_paired_sd(&pairs, SdMode::DecodedVsOracle, threshold)?;

    let rows: Vec<PairRow> = pairs
        .iter()
        .enumerate()
        .map(|(k, (a, b))| PairRow {
            task_id: &a.task_id,
            clean_id: &a.trajectory_id,
            counterpart_id: &b.trajectory_id,
            sd_clean: decoded_vs_oracle.sd_clean[k],
            sd_counterpart: decoded_vs_oracle.sd_counterpart[k],
            sd_shift: plan_shift.sd_shift[k],
        })
        .collect();
    write_csv(&dir.join("pairs.csv"), &rows)?;
    write_json(
        &dir.join("counterfactual.json"),
        &Comparison {
            family: family.name(),
            threshold,
            n_pairs: pairs.len(),
            excluded,
            unscored,
            plan_shift,
            decoded_vs_oracle,
        },
    )
}
