use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tooldag::eval::{patch_estimate, residual_block, FeatureSpec, GroupBy, PatchInput, PatchResult, Task};
use tooldag::features::FeatureVariant;
use tooldag::oracle::{select_minimal_pairs, MinimalPair};
use tooldag::probe::{load_probe, FittedProbe, ProbeConfig};

use super::{options_for, CorpusArgs, ProbeFlags};
use crate::config::Overrides;
use crate::corpus::{load_corpus, CorpusConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json};

pub const NAME: &str = "patch";

#[derive(Args, Debug)]
pub struct PatchArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Residual variant the probe reads (V0..V4).
    #[arg(long)]
    pub variant: Option<String>,
    /// Layers to patch; defaults to every cached layer.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<u32>>,
    /// JSON array of minimal pairs; otherwise pairs are selected from the corpus.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Directory of a probe saved by `probe --save-probe`.
    #[arg(long)]
    pub probe_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_resamples: Option<usize>,
    #[command(flatten)]
    pub probe: ProbeFlags,
}

impl PatchArgs {
    pub fn overrides(&self, seed: Option<u64>) -> Overrides {
        let mut o = Overrides::default();
        self.corpus.apply(&mut o, "");
        o.set("variant", self.variant.as_ref())
            .set("layers", self.layers.as_ref())
            .set("pairs", self.pairs.as_ref())
            .set("probe_dir", self.probe_dir.as_ref())
            .set("n_resamples", self.n_resamples)
            .set("seed", seed);
        self.probe.apply(&mut o);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    #[serde(flatten)]
    pub corpus: CorpusConfig,
    pub variant: String,
    pub layers: Option<Vec<u32>>,
    pub pairs: Option<PathBuf>,
    pub probe_dir: Option<PathBuf>,
    pub n_resamples: usize,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            corpus: CorpusConfig::default(),
            variant: "V1".into(),
            layers: None,
            pairs: None,
            probe_dir: None,
            n_resamples: 2000,
            seed: tooldag::DEFAULT_SEED,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct PatchReport {
    variant: String,
    probe_source: String,
    n_pairs: usize,
    pairs: Vec<MinimalPair>,
    layers: Vec<PatchResult>,
}

#[derive(Debug, Serialize)]
struct LayerRow {
    layer: u32,
    n_pairs: usize,
    mean: f64,
    lo: Option<f64>,
    hi: Option<f64>,
    frac_toward_donor: f64,
    structural_zero: bool,
}

#[derive(Debug, Serialize)]
struct DeltaRow<'a> {
    layer: u32,
    donor_id: &'a str,
    target_id: &'a str,
    delta: f64,
}

fn read_pairs(path: &Path) -> CliResult<Vec<MinimalPair>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read pairs {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("pairs file {}: {e}", path.display())))
}

pub fn run(cfg: &PatchConfig, dir: &Path) -> CliResult<()> {
    let variant = FeatureVariant::by_name(&cfg.variant).map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus = load_corpus(&cfg.corpus)?;
    let pairs = match &cfg.pairs {
        Some(p) => read_pairs(p)?,
        None => {
            let list: Vec<_> = corpus.trajectories.iter().zip(&corpus.graphs).collect();
            select_minimal_pairs(&list)
        }
    };
    if pairs.is_empty() {
        return Err(CliError::Usage("no minimal pairs to patch".into()));
    }
    let lookup = |id: &str| {
        corpus
            .index(id)
            .ok_or_else(|| CliError::Usage(format!("pair member {id} is not a probeable trajectory of the corpus")))
    };
    let inputs: Vec<PatchInput> = pairs
        .iter()
        .map(|p| {
            let (d, t) = (lookup(&p.donor_id)?, lookup(&p.target_id)?);
            Ok(PatchInput {
                pair: p,
                donor: &corpus.trajectories[d],
                donor_store: &corpus.stores[d],
                target: &corpus.trajectories[t],
                target_store: &corpus.stores[t],
            })
        })
        .collect::<CliResult<_>>()?;

    let block = residual_block(&variant.name);
    let (probe, source): (FittedProbe<f64>, String) = match &cfg.probe_dir {
        Some(pd) => {
            let (probe, blocks) = load_probe(pd, "probe")?;
            if blocks != [block.clone()] {
                return Err(CliError::Usage(format!(
                    "saved probe reads {blocks:?}, patching needs [{block}]"
                )));
            }
            (probe, pd.display().to_string())
        }
        None => {
            let spec = FeatureSpec::residual(&variant.name);
            let ds = corpus.dataset(&options_for(GroupBy::Trajectory, &[&spec])?)?;
            if let Some(why) = tooldag::eval::untestable_reason(&ds, Task::Direct) {
                return Err(CliError::Usage(format!("cannot fit a probe: {why}")));
            }
            let rows: Vec<usize> = (0..ds.len()).collect();
            let x = spec.design(&ds, &rows, None)?;
            (FittedProbe::fit(x.view(), &ds.labels(Task::Direct), &cfg.probe)?, "fit on corpus".into())
        }
    };

    let layers = match &cfg.layers {
        Some(l) => l.clone(),
        None => corpus.stores[0].layer_ids().to_vec(),
    };
    let results = layers
        .iter()
        .map(|&l| patch_estimate(&inputs, &probe, &variant, l, cfg.n_resamples, cfg.seed))
        .collect::<tooldag::Result<Vec<_>>>()?;

    let layer_rows: Vec<LayerRow> = results
        .iter()
        .map(|r| LayerRow {
            layer: r.layer,
            n_pairs: r.n_pairs,
            mean: r.mean,
            lo: r.ci.as_ref().map(|c| c.lo),
            hi: r.ci.as_ref().map(|c| c.hi),
            frac_toward_donor: r.frac_toward_donor,
            structural_zero: r.structural_zero,
        })
        .collect();
    write_csv(&dir.join("patch.csv"), &layer_rows)?;
    let mut deltas = Vec::new();
    for r in &results {
        for (p, &d) in pairs.iter().zip(&r.per_pair_delta) {
            deltas.push(DeltaRow {
                layer: r.layer,
                donor_id: &p.donor_id,
                target_id: &p.target_id,
                delta: d,
            });
        }
    }
    write_csv(&dir.join("deltas.csv"), &deltas)?;
    write_json(
        &dir.join("patch.json"),
        &PatchReport {
            variant: variant.name.clone(),
            probe_source: source,
            n_pairs: pairs.len(),
            pairs: pairs.clone(),
            layers: results,
        },
    )
}
