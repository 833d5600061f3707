use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use tooldag::oracle::{oracle_agreement, AgreementStats, EdgeListRecord, OracleKind};
use tooldag::trajlog::parse_log;

use super::CorpusArgs;
use crate::config::Overrides;
use crate::corpus::{load_schema, oracle_graphs, CorpusConfig};
use crate::error::CliResult;
use crate::output::{write_csv, write_json, write_jsonl};

pub const NAME: &str = "oracle";

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// With the typed oracle, also score it against the substring oracle.
    #[arg(long)]
    pub compare: bool,
}

impl OracleArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        self.corpus.apply(&mut o, "");
        o.switch("compare", self.compare);
        o
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    pub compare: bool,
}

#[derive(Debug, Serialize)]
struct Agreement {
    reference: OracleKind,
    candidate: OracleKind,
    counts: AgreementStats,
    precision: f64,
    precision_vacuous: bool,
    recall: f64,
    f1: f64,
    agreement: f64,
    /// Trajectories whose candidate edges are not all reference edges.
    n_not_subset: usize,
}

#[derive(Debug, Serialize)]
struct Summary {
    oracle: OracleKind,
    n_trajectories: usize,
    n_probeable: usize,
    n_direct_edges: usize,
    n_transitive_only_edges: usize,
    agreement: Option<Agreement>,
}

#[derive(Debug, Serialize)]
struct EdgeRow<'a> {
    trajectory_id: &'a str,
    i: usize,
    j: usize,
    kind: &'a str,
}

pub fn run(cfg: &OracleConfig, dir: &Path) -> CliResult<()> {
    cfg.corpus.check()?;
    let trajectories = parse_log(&cfg.corpus.log_path()?)?;
    let schema = cfg.corpus.schema.as_deref().map(load_schema).transpose()?;
    let graphs = oracle_graphs(&trajectories, cfg.corpus.oracle, schema.as_ref())?;

    let records: Vec<EdgeListRecord> = trajectories
        .iter()
        .zip(&graphs)
        .map(|(t, g)| EdgeListRecord::new(t, g, cfg.corpus.oracle))
        .collect();
    write_jsonl(&dir.join("edges.jsonl"), &records)?;
    let mut rows = Vec::new();
    for r in &records {
        for (edges, kind) in [(&r.direct_edges, "direct"), (&r.transitive_only_edges, "transitive_only")] {
            rows.extend(edges.iter().map(|&(i, j)| EdgeRow {
                trajectory_id: &r.trajectory_id,
                i,
                j,
                kind,
            }));
        }
    }
    write_csv(&dir.join("edges.csv"), &rows)?;

    let agreement = if cfg.compare && cfg.corpus.oracle == OracleKind::Typed {
        let reference = oracle_graphs(&trajectories, OracleKind::Substring, None)?;
        let mut counts = AgreementStats::default();
        let mut n_not_subset = 0;
        for (r, c) in reference.iter().zip(&graphs) {
            let s = oracle_agreement(r, c)?;
            n_not_subset += (s.false_positive > 0) as usize;
            counts.accumulate(&s);
        }
        Some(Agreement {
            reference: OracleKind::Substring,
            candidate: OracleKind::Typed,
            precision: counts.precision(),
            precision_vacuous: counts.precision_vacuous(),
            recall: counts.recall(),
            f1: counts.f1(),
            agreement: counts.agreement(),
            n_not_subset,
            counts,
        })
    } else {
        None
    };
    let summary = Summary {
        oracle: cfg.corpus.oracle,
        n_trajectories: trajectories.len(),
        n_probeable: trajectories.iter().filter(|t| t.is_probeable()).count(),
        n_direct_edges: records.iter().map(|r| r.direct_edges.len()).sum(),
        n_transitive_only_edges: records.iter().map(|r| r.transitive_only_edges.len()).sum(),
        agreement,
    };
    write_json(&dir.join("summary.json"), &summary)
}
