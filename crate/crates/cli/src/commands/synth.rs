use std::fs;
use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tooldag::oracle::{DependencyGraph, EdgeListRecord, OracleKind};
use tooldag::synth::{generate_corpus, plan_change, typed_corpus, write_corpus, SignalMode, SynthConfig};
use tooldag::trajlog::{write_log, Trajectory};

use crate::config::Overrides;
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json, write_jsonl};

pub const NAME: &str = "synth";

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_trajectories: Option<usize>,
    #[arg(long)]
    pub min_calls: Option<usize>,
    #[arg(long)]
    pub max_calls: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Cached layer ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<u32>>,
    #[arg(long)]
    pub edge_density: Option<f64>,
    /// none, positional_only, planted_linear, planted_directional,
    /// layer_localized:<layer>, hop_graded or donor_contrast.
    #[arg(long)]
    pub signal_mode: Option<String>,
    #[arg(long)]
    pub signal_strength: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub n_tools: Option<usize>,
    #[arg(long)]
    pub trajectories_per_task: Option<usize>,
    /// Prefix of trajectory and task ids.
    #[arg(long)]
    pub name: Option<String>,
    /// Also write plan-changed counterparts under `counterpart/`.
    #[arg(long)]
    pub counterpart: bool,
    /// Write a typed-identifier corpus (log, schema, truth; no activations).
    #[arg(long)]
    pub typed: bool,
}

/// `layer_localized:28` and plain mode names to the tagged JSON form.
pub fn signal_mode_value(text: &str) -> CliResult<Value> {
    let value = match text.split_once(':') {
        Some((mode, layer)) => {
            let layer: u32 = layer
                .parse()
                .map_err(|_| CliError::Usage(format!("bad layer in signal mode `{text}`")))?;
            json!({ "mode": mode, "layer": layer })
        }
        None => json!({ "mode": text }),
    };
    serde_json::from_value::<SignalMode>(value.clone()).map_err(|e| CliError::Usage(format!("signal mode `{text}`: {e}")))?;
    Ok(value)
}

impl SynthArgs {
    pub fn overrides(&self, seed: Option<u64>) -> CliResult<Overrides> {
        let mut o = Overrides::default();
        let mode = self.signal_mode.as_deref().map(signal_mode_value).transpose()?;
        o.set("n_trajectories", self.n_trajectories)
            .set("min_calls", self.min_calls)
            .set("max_calls", self.max_calls)
            .set("hidden_dim", self.hidden_dim)
            .set("layer_ids", self.layers.as_ref())
            .set("edge_density", self.edge_density)
            .set("signal_mode", mode)
            .set("signal_strength", self.signal_strength)
            .set("noise_sd", self.noise_sd)
            .set("n_tools", self.n_tools)
            .set("trajectories_per_task", self.trajectories_per_task)
            .set("name", self.name.as_ref())
            .switch("counterpart", self.counterpart)
            .switch("typed", self.typed)
            .set("seed", seed);
        Ok(o)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthCommandConfig {
    #[serde(flatten)]
    pub synth: SynthConfig,
    pub counterpart: bool,
    pub typed: bool,
}

#[derive(Debug, Serialize)]
struct TrajRow<'a> {
    trajectory_id: &'a str,
    task_id: &'a str,
    n_agent: usize,
    n_direct: usize,
    n_transitive_only: usize,
}

#[derive(Debug, Serialize)]
struct Summary {
    n_trajectories: usize,
    n_direct_edges: usize,
    n_transitive_only_edges: usize,
    counterpart: bool,
    typed: bool,
}

fn describe(dir: &Path, trajectories: &[Trajectory], graphs: &[DependencyGraph], cfg: &SynthCommandConfig) -> CliResult<()> {
    let rows: Vec<TrajRow> = trajectories
        .iter()
        .zip(graphs)
        .map(|(t, g)| TrajRow {
            trajectory_id: &t.trajectory_id,
            task_id: &t.task_id,
            n_agent: t.n_agent(),
            n_direct: g.direct_edges().len(),
            n_transitive_only: g.transitive_only().len(),
        })
        .collect();
    write_csv(&dir.join("synth.csv"), &rows)?;
    write_json(
        &dir.join("synth.json"),
        &Summary {
            n_trajectories: rows.len(),
            n_direct_edges: rows.iter().map(|r| r.n_direct).sum(),
            n_transitive_only_edges: rows.iter().map(|r| r.n_transitive_only).sum(),
            counterpart: cfg.counterpart,
            typed: cfg.typed,
        },
    )
}

pub fn run(cfg: &SynthCommandConfig, dir: &Path) -> CliResult<()> {
    if cfg.typed {
        if cfg.counterpart {
            return Err(CliError::Usage("--typed corpora have no counterpart".into()));
        }
        let c = typed_corpus(cfg.synth.n_trajectories, cfg.synth.seed)?;
        write_log(&dir.join("log.jsonl"), &c.trajectories)?;
        let truth: Vec<EdgeListRecord> = c
            .trajectories
            .iter()
            .zip(&c.graphs)
            .map(|(t, g)| EdgeListRecord::new(t, g, OracleKind::Typed))
            .collect();
        write_jsonl(&dir.join("truth.jsonl"), &truth)?;
        write_json(&dir.join("schema.json"), &c.schema)?;
        return describe(dir, &c.trajectories, &c.graphs, cfg);
    }
    let corpus = generate_corpus(&cfg.synth)?;
    write_corpus(dir, &corpus)?;
    if cfg.counterpart {
        let cf_dir = dir.join("counterpart");
        fs::create_dir_all(&cf_dir).map_err(|e| CliError::io(&cf_dir, e))?;
        write_corpus(&cf_dir, &plan_change(&cfg.synth)?)?;
    }
    describe(dir, &corpus.trajectories, &corpus.graphs, cfg)
}
