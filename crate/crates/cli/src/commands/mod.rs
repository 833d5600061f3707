//! One module per subcommand. Each exposes `NAME`, a clap argument struct
//! with `overrides`, a serialisable config with defaults, and `run`.

pub mod controls;
pub mod counterfactual;
pub mod decode;
pub mod oracle;
pub mod patch;
pub mod probe;
pub mod sweep;
pub mod synth;

use std::path::PathBuf;

use clap::Args;
use tooldag::eval::{DatasetOptions, FeatureSpec, GroupBy, SCAFFOLD};
use tooldag::oracle::OracleKind;

use crate::config::Overrides;
use crate::error::{CliError, CliResult};

/// Where the corpus lives and which oracle labels it.
#[derive(Args, Debug, Clone, Default)]
pub struct CorpusArgs {
    /// Corpus directory with `log.jsonl` and `activations/`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub activations: Option<PathBuf>,
    /// Precomputed edge lists (JSON lines); skips the oracle.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, value_parser = parse_oracle)]
    pub oracle: Option<OracleKind>,
    /// Typed-oracle schema (JSON).
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

impl CorpusArgs {
    /// Write these flags under `prefix` (empty for top level).
    pub fn apply(&self, o: &mut Overrides, prefix: &str) {
        let k = |name: &str| format!("{prefix}{name}");
        o.set(&k("corpus"), self.corpus.as_ref())
            .set(&k("log"), self.log.as_ref())
            .set(&k("activations"), self.activations.as_ref())
            .set(&k("edges"), self.edges.as_ref())
            .set(&k("oracle"), self.oracle)
            .set(&k("schema"), self.schema.as_ref());
    }
}

/// Probe hyperparameter flags.
#[derive(Args, Debug, Clone, Default)]
pub struct ProbeFlags {
    /// Inverse L2 strength.
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl ProbeFlags {
    pub fn apply(&self, o: &mut Overrides) {
        o.set("probe.c", self.c).set("probe.max_iter", self.max_iter);
    }
}

pub fn parse_oracle(s: &str) -> Result<OracleKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown oracle `{s}` (substring, typed)"))
}

pub fn parse_group_by(s: &str) -> Result<GroupBy, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown grouping `{s}` (trajectory, task)"))
}

/// Parse a family written as blocks joined by `+`, e.g.
/// `positional+residual:V1` or `scaffold`.
pub fn parse_family(text: &str) -> CliResult<FeatureSpec> {
    let mut spec = FeatureSpec {
        blocks: Vec::new(),
        scaffold: false,
    };
    for part in text.split('+').map(str::trim) {
        match part {
            "" => return Err(CliError::Usage(format!("empty block in feature family `{text}`"))),
            SCAFFOLD => spec.scaffold = true,
            b if spec.blocks.iter().any(|x| x == b) => {}
            b => spec.blocks.push(b.to_string()),
        }
    }
    // Reject unknown blocks before any data is loaded.
    DatasetOptions::default()
        .require(&spec)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

/// Dataset options covering every family in `specs`.
pub fn options_for(group_by: GroupBy, specs: &[&FeatureSpec]) -> CliResult<DatasetOptions> {
    let mut opts = DatasetOptions::bare(group_by);
    for s in specs {
        opts.require(s).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(opts)
}
