//! Locating and loading a corpus: trajectory log, activation directory and
//! dependency graphs (an edge-list file or an oracle run over the log).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tooldag::eval::{CorpusEntry, DatasetOptions, PairDataset};
use tooldag::oracle::{build_graph, index_edge_lists, DependencyGraph, EdgeListRecord, OracleKind, TypedSchema};
use tooldag::trajlog::{activation_file_name, load_activations, parse_log, ActivationStore, Trajectory};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Directory holding `log.jsonl` and `activations/`; fills in unset paths.
    pub corpus: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub activations: Option<PathBuf>,
    /// Edge-list JSON lines; when absent the oracle runs on the log.
    pub edges: Option<PathBuf>,
    pub oracle: OracleKind,
    pub schema: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            corpus: None,
            log: None,
            activations: None,
            edges: None,
            oracle: OracleKind::Substring,
            schema: None,
        }
    }
}

impl CorpusConfig {
    pub fn log_path(&self) -> CliResult<PathBuf> {
        self.log
            .clone()
            .or_else(|| self.corpus.as_ref().map(|d| d.join("log.jsonl")))
            .ok_or_else(|| CliError::Usage("no trajectory log given (--log or --corpus)".into()))
    }

    pub fn activation_dir(&self) -> CliResult<PathBuf> {
        self.activations
            .clone()
            .or_else(|| self.corpus.as_ref().map(|d| d.join("activations")))
            .ok_or_else(|| CliError::Usage("no activation directory given (--activations or --corpus)".into()))
    }

    pub fn check(&self) -> CliResult<()> {
        if self.oracle == OracleKind::Typed && self.schema.is_none() && self.edges.is_none() {
            return Err(CliError::Usage("--oracle typed needs --schema".into()));
        }
        Ok(())
    }
}

pub fn load_schema(path: &Path) -> CliResult<TypedSchema> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read schema {}: {e}", path.display())))?;
    Ok(TypedSchema::from_json(&text)?)
}

/// Oracle graphs of every trajectory, in log order.
pub fn oracle_graphs(trajectories: &[Trajectory], kind: OracleKind, schema: Option<&TypedSchema>) -> CliResult<Vec<DependencyGraph>> {
    trajectories
        .par_iter()
        .map(|t| build_graph(t, kind, schema).map_err(CliError::from))
        .collect()
}

fn read_edges(path: &Path) -> CliResult<BTreeMap<String, DependencyGraph>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read edges {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: EdgeListRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Usage(format!("{} line {}: {e}", path.display(), k + 1)))?;
        records.push(r);
    }
    Ok(index_edge_lists(&records)?)
}

/// Probeable trajectories with their activations and graphs.
pub struct Corpus {
    pub trajectories: Vec<Trajectory>,
    pub stores: Vec<ActivationStore>,
    pub graphs: Vec<DependencyGraph>,
    /// Trajectories with fewer than two calls.
    pub skipped: Vec<String>,
}

impl Corpus {
    pub fn entries(&self) -> Vec<CorpusEntry<'_>> {
        self.trajectories
            .iter()
            .zip(&self.stores)
            .zip(&self.graphs)
            .map(|((traj, store), graph)| CorpusEntry { traj, store, graph })
            .collect()
    }

    pub fn dataset(&self, opts: &DatasetOptions) -> CliResult<PairDataset<f64>> {
        let mut ds = PairDataset::build(&self.entries(), opts)?;
        ds.skipped_trajectories.extend(self.skipped.iter().cloned());
        Ok(ds)
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.trajectories.iter().position(|t| t.trajectory_id == id)
    }
}

/// Load trajectories, activations and graphs. A probeable trajectory whose
/// activation file is missing is an error.
pub fn load_corpus(cfg: &CorpusConfig) -> CliResult<Corpus> {
    cfg.check()?;
    let log = cfg.log_path()?;
    let act = cfg.activation_dir()?;
    let all = parse_log(&log)?;
    let (trajectories, short): (Vec<Trajectory>, Vec<Trajectory>) = all.into_iter().partition(|t| t.is_probeable());
    let stores = trajectories
        .par_iter()
        .map(|t| {
            let path = act.join(activation_file_name(&t.trajectory_id));
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "missing activation file {} for trajectory {}",
                    path.display(),
                    t.trajectory_id
                )));
            }
            load_activations(&path, t).map_err(CliError::from)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let graphs = match &cfg.edges {
        Some(path) => {
            let map = read_edges(path)?;
            trajectories
                .iter()
                .map(|t| {
                    let g = map.get(&t.trajectory_id).ok_or_else(|| {
                        CliError::Usage(format!("no edge list for trajectory {} in {}", t.trajectory_id, path.display()))
                    })?;
                    if g.n() != t.n_agent() {
                        return Err(CliError::Usage(format!(
                            "edge list of {} covers {} calls, log has {}",
                            t.trajectory_id,
                            g.n(),
                            t.n_agent()
                        )));
                    }
                    Ok(g.clone())
                })
                .collect::<CliResult<Vec<_>>>()?
        }
        None => {
            let schema = cfg.schema.as_deref().map(load_schema).transpose()?;
            oracle_graphs(&trajectories, cfg.oracle, schema.as_ref())?
        }
    };
    Ok(Corpus {
        trajectories,
        stores,
        graphs,
        skipped: short.into_iter().map(|t| t.trajectory_id).collect(),
    })
}
