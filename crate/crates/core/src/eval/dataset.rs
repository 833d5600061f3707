use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, surface_block, FeatureVariant, ScaffoldVocab};
use crate::oracle::DependencyGraph;
use crate::scalar::Scalar;
use crate::trajlog::{ActivationStore, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Direct,
    /// Reachable but not directly connected; direct edges count as negatives.
    TransitiveOnly,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Direct => "direct",
            Task::TransitiveOnly => "transitive_only",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Task::Direct),
            "transitive_only" | "transitive" => Ok(Task::TransitiveOnly),
            _ => Err(Error::Invalid(format!("unknown task `{s}`"))),
        }
    }
}

/// Which key defines a cross-validation group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    #[default]
    Trajectory,
    Task,
}

/// Labels and bookkeeping of one pair row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub trajectory_id: String,
    pub task_id: String,
    pub group: String,
    pub i: usize,
    pub j: usize,
    pub n_agent: usize,
    pub label_direct: bool,
    pub label_transitive_only: bool,
    /// Shortest direct-edge path length, `None` when `j` is unreachable.
    pub hop: Option<usize>,
    pub tool_i: String,
    pub tool_j: String,
}

impl PairMeta {
    pub fn label(&self, task: Task) -> bool {
        match task {
            Task::Direct => self.label_direct,
            Task::TransitiveOnly => self.label_transitive_only,
        }
    }
}

/// One trajectory with its activations and oracle graph.
#[derive(Debug, Clone, Copy)]
pub struct CorpusEntry<'a> {
    pub traj: &'a Trajectory,
    pub store: &'a ActivationStore,
    pub graph: &'a DependencyGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    /// Residual variants, stored as `residual:<name>` blocks.
    pub variants: Vec<FeatureVariant>,
    /// Layers for single-layer blocks `residual:L<layer>`.
    pub per_layer: Vec<u32>,
    pub surface: bool,
    /// Add `reversed:<name>` for every variant with separate endpoints.
    pub reversed: bool,
    pub group_by: GroupBy,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            variants: vec![FeatureVariant::v1()],
            per_layer: Vec::new(),
            surface: false,
            reversed: false,
            group_by: GroupBy::Trajectory,
        }
    }
}

impl DatasetOptions {
    /// Options with no residual blocks; grow them with [`Self::require`].
    pub fn bare(group_by: GroupBy) -> Self {
        DatasetOptions {
            variants: Vec::new(),
            group_by,
            ..Self::default()
        }
    }

    /// Extend the options so the dataset carries every block of `spec`.
    pub fn require(&mut self, spec: &FeatureSpec) -> Result<()> {
        let add_variant = |name: &str, variants: &mut Vec<FeatureVariant>| -> Result<()> {
            let v = FeatureVariant::by_name(name)?;
            if !variants.iter().any(|x| x.name == v.name) {
                variants.push(v);
            }
            Ok(())
        };
        for b in &spec.blocks {
            if b == POSITIONAL {
                continue;
            }
            if b == SURFACE {
                self.surface = true;
            } else if let Some(v) = b.strip_prefix("residual:") {
                match v.strip_prefix('L').and_then(|l| l.parse::<u32>().ok()) {
                    Some(l) if !self.per_layer.contains(&l) => self.per_layer.push(l),
                    Some(_) => {}
                    None => add_variant(v, &mut self.variants)?,
                }
            } else if let Some(v) = b.strip_prefix("reversed:") {
                self.reversed = true;
                add_variant(v, &mut self.variants)?;
            } else {
                return Err(Error::Invalid(format!("unknown feature block `{b}`")));
            }
        }
        Ok(())
    }
}

pub const POSITIONAL: &str = "positional";
pub const SURFACE: &str = "surface";
pub const SCAFFOLD: &str = "scaffold";

pub fn residual_block(variant: &str) -> String {
    format!("residual:{variant}")
}

pub fn reversed_block(variant: &str) -> String {
    format!("reversed:{variant}")
}

/// Pair rows of a corpus with named feature blocks sharing one row order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset<F: Scalar> {
    pub meta: Vec<PairMeta>,
    pub blocks: BTreeMap<String, Array2<F>>,
    /// Trajectories with fewer than two calls, which contribute no pairs.
    pub skipped_trajectories: Vec<String>,
}

struct TrajRows<F: Scalar> {
    meta: Vec<PairMeta>,
    blocks: Vec<(String, Vec<Vec<F>>)>,
}

fn trajectory_rows<F: Scalar>(entry: &CorpusEntry, opts: &DatasetOptions) -> Result<TrajRows<F>> {
    let CorpusEntry { traj, store, graph } = *entry;
    if store.trajectory_id() != traj.trajectory_id {
        return Err(Error::Invalid(format!(
            "activation store `{}` paired with trajectory `{}`",
            store.trajectory_id(),
            traj.trajectory_id
        )));
    }
    let n = traj.n_agent();
    if graph.n() != n {
        return Err(Error::Dimension(format!(
            "graph over {} calls for trajectory {} with {n}",
            graph.n(),
            traj.trajectory_id
        )));
    }
    let group = match opts.group_by {
        GroupBy::Trajectory => traj.trajectory_id.clone(),
        GroupBy::Task => traj.task_id.clone(),
    };
    let mut meta = Vec::with_capacity(n * (n - 1) / 2);
    let mut positional = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            meta.push(PairMeta {
                trajectory_id: traj.trajectory_id.clone(),
                task_id: traj.task_id.clone(),
                group: group.clone(),
                i,
                j,
                n_agent: n,
                label_direct: graph.has_direct(i, j),
                label_transitive_only: graph.is_transitive_only(i, j),
                hop: graph.hop_distance(i, j),
                tool_i: traj.calls[i].tool_name.clone(),
                tool_j: traj.calls[j].tool_name.clone(),
            });
            positional.push(features::positional::<F>(i, j, n).to_vec());
        }
    }
    let mut blocks: Vec<(String, Vec<Vec<F>>)> = vec![(POSITIONAL.into(), positional)];
    let mut push_variant = |variant: &FeatureVariant, reversed: bool| -> Result<()> {
        let examples = features::build_pair_features::<F>(traj, store, graph, variant)?;
        blocks.push((
            residual_block(&variant.name),
            examples.iter().map(|e| e.residual.to_vec()).collect(),
        ));
        if reversed {
            let rows = examples
                .iter()
                .map(|e| features::reverse_residual(variant, &e.residual).map(|r| r.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            blocks.push((reversed_block(&variant.name), rows));
        }
        Ok(())
    };
    for v in &opts.variants {
        push_variant(v, opts.reversed && v.endpoints.i && v.endpoints.j)?;
    }
    for &l in &opts.per_layer {
        let v = FeatureVariant::single_layer(l);
        if !opts.variants.iter().any(|x| x.name == v.name) {
            push_variant(&v, false)?;
        }
    }
    if opts.surface {
        blocks.push((SURFACE.into(), surface_block::<F>(traj)?));
    }
    Ok(TrajRows { meta, blocks })
}

fn stack<F: Scalar>(rows: Vec<Vec<F>>) -> Result<Array2<F>> {
    let width = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::Dimension("ragged feature block".into()));
        }
        flat.extend(r);
    }
    Array2::from_shape_vec((n, width), flat).map_err(|e| Error::Dimension(e.to_string()))
}

impl<F: Scalar> PairDataset<F> {
    /// Build rows for every probeable trajectory, in corpus order and
    /// `i`-major within a trajectory.
    pub fn build(corpus: &[CorpusEntry], opts: &DatasetOptions) -> Result<Self> {
        let probeable: Vec<&CorpusEntry> = corpus.iter().filter(|e| e.traj.n_agent() >= 2).collect();
        let skipped = corpus
            .iter()
            .filter(|e| e.traj.n_agent() < 2)
            .map(|e| e.traj.trajectory_id.clone())
            .collect();
        let parts: Vec<TrajRows<F>> = probeable
            .par_iter()
            .map(|e| trajectory_rows(e, opts))
            .collect::<Result<_>>()?;
        let mut meta = Vec::new();
        let mut columns: BTreeMap<String, Vec<Vec<F>>> = BTreeMap::new();
        for part in parts {
            meta.extend(part.meta);
            for (name, rows) in part.blocks {
                columns.entry(name).or_default().extend(rows);
            }
        }
        let mut blocks = BTreeMap::new();
        for (name, rows) in columns {
            if rows.len() != meta.len() {
                return Err(Error::Dimension(format!("block {name} has {} rows, expected {}", rows.len(), meta.len())));
            }
            blocks.insert(name, stack(rows)?);
        }
        Ok(PairDataset {
            meta,
            blocks,
            skipped_trajectories: skipped,
        })
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn labels(&self, task: Task) -> Vec<bool> {
        self.meta.iter().map(|m| m.label(task)).collect()
    }

    pub fn n_positive(&self, task: Task) -> usize {
        self.meta.iter().filter(|m| m.label(task)).count()
    }

    /// Group names in sorted order and each row's index into them.
    pub fn groups(&self) -> (Vec<String>, Vec<usize>) {
        let names: Vec<String> = self
            .meta
            .iter()
            .map(|m| m.group.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(k, g)| (g.as_str(), k)).collect();
        let rows = self.meta.iter().map(|m| index[m.group.as_str()]).collect();
        (names, rows)
    }

    pub fn n_groups(&self) -> usize {
        self.groups().0.len()
    }

    pub fn block(&self, name: &str) -> Result<&Array2<F>> {
        self.blocks
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("feature block `{name}` is not in the dataset")))
    }

    pub fn add_block(&mut self, name: &str, block: Array2<F>) -> Result<()> {
        if block.nrows() != self.len() {
            return Err(Error::Dimension(format!(
                "block {name} has {} rows, dataset has {}",
                block.nrows(),
                self.len()
            )));
        }
        self.blocks.insert(name.to_string(), block);
        Ok(())
    }

    /// Copy `other`'s blocks in under `prefix`, e.g. residuals computed from
    /// a second activation directory over the same trajectories.
    pub fn merge_blocks(&mut self, other: &PairDataset<F>, prefix: &str) -> Result<()> {
        if other.meta != self.meta {
            return Err(Error::Invalid("datasets cover different pair rows".into()));
        }
        for (name, block) in &other.blocks {
            if name != POSITIONAL && name != SURFACE {
                self.blocks.insert(format!("{prefix}{name}"), block.clone());
            }
        }
        Ok(())
    }
}

/// A feature family: named blocks concatenated in order, optionally with
/// scaffold one-hots fitted on each training fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub blocks: Vec<String>,
    pub scaffold: bool,
}

impl FeatureSpec {
    pub fn new(blocks: &[&str]) -> Self {
        FeatureSpec {
            blocks: blocks.iter().map(|b| b.to_string()).collect(),
            scaffold: false,
        }
    }

    pub fn positional() -> Self {
        Self::new(&[POSITIONAL])
    }

    pub fn residual(variant: &str) -> Self {
        FeatureSpec {
            blocks: vec![residual_block(variant)],
            scaffold: false,
        }
    }

    pub fn scaffold() -> Self {
        FeatureSpec {
            blocks: Vec::new(),
            scaffold: true,
        }
    }

    /// Blocks of both families, without duplicates.
    pub fn join(&self, other: &FeatureSpec) -> FeatureSpec {
        let mut blocks = self.blocks.clone();
        for b in &other.blocks {
            if !blocks.contains(b) {
                blocks.push(b.clone());
            }
        }
        FeatureSpec {
            blocks,
            scaffold: self.scaffold || other.scaffold,
        }
    }

    pub fn name(&self) -> String {
        let mut parts = self.blocks.clone();
        if self.scaffold {
            parts.push(SCAFFOLD.into());
        }
        parts.join("+")
    }

    pub fn validate<F: Scalar>(&self, ds: &PairDataset<F>) -> Result<()> {
        if self.blocks.is_empty() && !self.scaffold {
            return Err(Error::Invalid("empty feature family".into()));
        }
        for b in &self.blocks {
            ds.block(b)?;
        }
        Ok(())
    }

    /// Width of the fixed (non-scaffold) part.
    pub fn fixed_width<F: Scalar>(&self, ds: &PairDataset<F>) -> Result<usize> {
        self.blocks.iter().map(|b| Ok(ds.block(b)?.ncols())).sum()
    }

    /// Fit the scaffold vocabulary on `rows` when the family uses it.
    pub fn fit_vocab<F: Scalar>(&self, ds: &PairDataset<F>, rows: &[usize]) -> Option<ScaffoldVocab> {
        self.scaffold.then(|| {
            ScaffoldVocab::fit(
                rows.iter()
                    .map(|&r| (ds.meta[r].tool_i.as_str(), ds.meta[r].tool_j.as_str())),
            )
        })
    }

    /// Design matrix of `rows`: fixed blocks, then scaffold columns.
    pub fn design<F: Scalar>(&self, ds: &PairDataset<F>, rows: &[usize], vocab: Option<&ScaffoldVocab>) -> Result<Array2<F>> {
        let mut parts: Vec<Array2<F>> = Vec::with_capacity(self.blocks.len() + 1);
        for b in &self.blocks {
            parts.push(ds.block(b)?.select(Axis(0), rows));
        }
        if self.scaffold {
            let vocab = vocab.ok_or_else(|| Error::Invalid("scaffold family needs a fitted vocabulary".into()))?;
            let scaffold: Vec<Vec<F>> = rows
                .iter()
                .map(|&r| {
                    let m = &ds.meta[r];
                    vocab.transform(&m.tool_i, &m.tool_j, m.i, m.j, m.n_agent)
                })
                .collect();
            parts.push(stack(scaffold)?);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        if views.len() == 1 {
            return Ok(parts.pop().expect("one part"));
        }
        ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Dimension(e.to_string()))
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    /// `+`-separated block names; `scaffold` toggles the fold-fitted block.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = FeatureSpec {
            blocks: Vec::new(),
            scaffold: false,
        };
        for part in s.split('+').map(str::trim) {
            match part {
                "" => return Err(Error::Invalid(format!("empty block name in `{s}`"))),
                SCAFFOLD => spec.scaffold = true,
                p if !spec.blocks.iter().any(|b| b == p) => spec.blocks.push(p.to_string()),
                _ => {}
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
