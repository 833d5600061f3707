use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{PairMeta, Task};
use crate::error::{Error, Result};
use crate::oracle::{pair_space, DependencyGraph, EdgeSet};
use crate::stats::{auroc, cohens_d_paired, resample_rng, wilcoxon_signed_rank, CohenD, WilcoxonResult};

/// Cut maximising F1 of `score >= t` over the unique observed scores plus
/// one value above the maximum. Ties go to the lowest cut.
pub fn f1_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as u128;
    if n_pos == 0 || n_pos == labels.len() as u128 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // Scan cuts from the top; (2 tp, 2 tp + fp + fn) as an exact fraction.
    let max = scores[order[0]];
    let mut best = (0u128, n_pos, max + 1.0);
    let (mut tp, mut fp) = (0u128, 0u128);
    let mut k = 0;
    while k < order.len() {
        let cut = scores[order[k]];
        while k < order.len() && scores[order[k]] == cut {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (num, den) = (2 * tp, 2 * tp + fp + (n_pos - tp));
        // Lower cuts come later, so `>=` keeps the lowest among ties.
        if num * best.1 >= best.0 * den {
            best = (num, den, cut);
        }
    }
    Ok(best.2)
}

/// A thresholded graph and the outcome of an independent acyclicity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedGraph {
    pub graph: DependencyGraph,
    pub acyclic: bool,
}

/// Kahn's algorithm over the edge set, not relying on edge orientation.
pub fn is_acyclic(n: usize, edges: &EdgeSet) -> bool {
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return false;
        }
        succ[a].push(b);
        indeg[b] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    seen == n
}

/// Edges `(i, j)` with `score >= threshold`; every `i < j < n` needs a score.
pub fn decode_dag(n: usize, scores: &BTreeMap<(usize, usize), f64>, threshold: f64) -> Result<DecodedGraph> {
    let mut edges = EdgeSet::new();
    for pair in pair_space(n) {
        let s = scores
            .get(&pair)
            .ok_or_else(|| Error::Invalid(format!("no score for pair {pair:?}")))?;
        if *s >= threshold {
            edges.insert(pair);
        }
    }
    let acyclic = is_acyclic(n, &edges);
    Ok(DecodedGraph {
        graph: DependencyGraph::new(n, edges)?,
        acyclic,
    })
}

/// `|a △ b|` restricted to `space`.
pub fn symmetric_difference(a: &EdgeSet, b: &EdgeSet, space: &EdgeSet) -> usize {
    space.iter().filter(|e| a.contains(e) != b.contains(e)).count()
}

/// Pair scores of one trajectory with its oracle graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrajectory {
    pub trajectory_id: String,
    pub task_id: String,
    pub n: usize,
    pub oracle: DependencyGraph,
    pub scores: BTreeMap<(usize, usize), f64>,
}

/// Regroup dataset rows by trajectory. Trajectories with any unscored row
/// are left out and their ids returned.
pub fn scored_trajectories(meta: &[PairMeta], scores: &[Option<f64>]) -> Result<(Vec<ScoredTrajectory>, Vec<String>)> {
    if meta.len() != scores.len() {
        return Err(Error::Dimension(format!("{} rows, {} scores", meta.len(), scores.len())));
    }
    let mut out: Vec<(ScoredTrajectory, bool, EdgeSet)> = Vec::new();
    for (m, s) in meta.iter().zip(scores) {
        if out.last().is_none_or(|(t, _, _)| t.trajectory_id != m.trajectory_id) {
            out.push((
                ScoredTrajectory {
                    trajectory_id: m.trajectory_id.clone(),
                    task_id: m.task_id.clone(),
                    n: m.n_agent,
                    oracle: DependencyGraph::empty(m.n_agent),
                    scores: BTreeMap::new(),
                },
                true,
                EdgeSet::new(),
            ));
        }
        let (t, complete, edges) = out.last_mut().expect("pushed above");
        match s {
            Some(v) => {
                t.scores.insert((m.i, m.j), *v);
            }
            None => *complete = false,
        }
        if m.label_direct {
            edges.insert((m.i, m.j));
        }
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (mut t, complete, edges) in out {
        if complete {
            t.oracle = DependencyGraph::new(t.n, edges)?;
            kept.push(t);
        } else {
            dropped.push(t.trajectory_id);
        }
    }
    Ok((kept, dropped))
}

/// In-sample F1 cut over scored rows for `task`.
pub fn corpus_threshold(meta: &[PairMeta], scores: &[Option<f64>], task: Task) -> Result<f64> {
    let (s, y): (Vec<f64>, Vec<bool>) = meta
        .iter()
        .zip(scores)
        .filter_map(|(m, s)| s.map(|s| (s, m.label(task))))
        .unzip();
    f1_threshold(&s, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdMode {
    /// Each side's decoded graph against its own oracle; differences are
    /// counterpart minus clean.
    DecodedVsOracle,
    /// Clean decoded graph against counterpart decoded graph on the shared
    /// pair space.
    PlanShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdStats {
    pub mode: SdMode,
    pub threshold: f64,
    pub trajectory_ids: Vec<String>,
    /// Decoded-vs-oracle SD of the clean side (decoded_vs_oracle mode).
    pub sd_clean: Vec<usize>,
    pub sd_counterpart: Vec<usize>,
    /// Per-pair SD between the two decoded graphs (plan_shift mode).
    pub sd_shift: Vec<usize>,
    /// Values tested against zero.
    pub diffs: Vec<f64>,
    pub median_clean: Option<f64>,
    pub median_counterpart: Option<f64>,
    pub median_shift: Option<f64>,
    pub mean_shift: f64,
    pub frac_nonzero_shift: f64,
    pub wilcoxon: WilcoxonResult,
    pub cohens_d: CohenD,
    /// Every difference is zero; `cohens_d.d` is reported as 0.
    pub degenerate: bool,
    /// SD as a score for "is the counterpart"; decoded_vs_oracle only.
    pub drift_auroc_counterpart_positive: Option<f64>,
    /// The same with the clean side as the positive class.
    pub drift_auroc_clean_positive: Option<f64>,
    pub n_decoded: usize,
    pub n_acyclic: usize,
}

fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let k = v.len();
    Some(if k % 2 == 1 {
        v[k / 2] as f64
    } else {
        (v[k / 2 - 1] + v[k / 2]) as f64 / 2.0
    })
}

/// Paired SD analysis over matched clean/counterpart trajectories decoded at
/// one threshold.
pub fn compare_paired_sd(pairs: &[(ScoredTrajectory, ScoredTrajectory)], mode: SdMode, threshold: f64) -> Result<SdStats> {
    if pairs.is_empty() {
        return Err(Error::Invalid("no matched pairs".into()));
    }
    let mut ids = Vec::new();
    let (mut sd_clean, mut sd_cf, mut sd_shift) = (Vec::new(), Vec::new(), Vec::new());
    let (mut n_decoded, mut n_acyclic) = (0, 0);
    for (a, b) in pairs {
        let da = decode_dag(a.n, &a.scores, threshold)?;
        let db = decode_dag(b.n, &b.scores, threshold)?;
        n_decoded += 2;
        n_acyclic += da.acyclic as usize + db.acyclic as usize;
        ids.push(a.trajectory_id.clone());
        match mode {
            SdMode::DecodedVsOracle => {
                sd_clean.push(symmetric_difference(
                    da.graph.direct_edges(),
                    a.oracle.direct_edges(),
                    &pair_space(a.n),
                ));
                sd_cf.push(symmetric_difference(
                    db.graph.direct_edges(),
                    b.oracle.direct_edges(),
                    &pair_space(b.n),
                ));
            }
            SdMode::PlanShift => {
                let space = pair_space(a.n.min(b.n));
                sd_shift.push(symmetric_difference(da.graph.direct_edges(), db.graph.direct_edges(), &space));
            }
        }
    }
    let diffs: Vec<f64> = match mode {
        SdMode::DecodedVsOracle => sd_cf.iter().zip(&sd_clean).map(|(&b, &a)| b as f64 - a as f64).collect(),
        SdMode::PlanShift => sd_shift.iter().map(|&v| v as f64).collect(),
    };
    let degenerate = diffs.iter().all(|&d| d == 0.0);
    let mut cohens_d = cohens_d_paired(&diffs);
    if degenerate {
        cohens_d.d = 0.0;
    }
    let (drift_cf, drift_clean) = match mode {
        SdMode::DecodedVsOracle => {
            let scores: Vec<f64> = sd_clean.iter().chain(&sd_cf).map(|&v| v as f64).collect();
            let labels: Vec<bool> = (0..scores.len()).map(|k| k >= sd_clean.len()).collect();
            let a = auroc(&scores, &labels)?;
            (Some(a), Some(1.0 - a))
        }
        SdMode::PlanShift => (None, None),
    };
    let n = diffs.len() as f64;
    Ok(SdStats {
        mode,
        threshold,
        trajectory_ids: ids,
        median_clean: median(&sd_clean),
        median_counterpart: median(&sd_cf),
        median_shift: median(&sd_shift),
        sd_clean,
        sd_counterpart: sd_cf,
        sd_shift,
        mean_shift: diffs.iter().sum::<f64>() / n,
        frac_nonzero_shift: diffs.iter().filter(|&&d| d != 0.0).count() as f64 / n,
        wilcoxon: wilcoxon_signed_rank(&diffs),
        cohens_d,
        degenerate,
        diffs,
        drift_auroc_counterpart_positive: drift_cf,
        drift_auroc_clean_positive: drift_clean,
        n_decoded,
        n_acyclic,
    })
}

/// Pooled `P(edge(i,k) | edge(i,j), edge(j,k))` against a per-trajectory
/// independent-edge null with the observed edge rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitiveConsistency {
    pub observed: Option<f64>,
    pub null: Option<f64>,
    pub n_triples: usize,
    pub n_closed: usize,
    pub n_trajectories: usize,
    /// Trajectories with at least one qualifying triple.
    pub n_contributing: usize,
    pub n_sims: usize,
    /// One-sided test of per-trajectory observed minus null.
    pub wilcoxon: Option<WilcoxonResult>,
    /// No qualifying triples anywhere.
    pub undefined: bool,
}

/// `(triples, closed)` counts of a graph given as an adjacency test.
fn triple_counts(n: usize, edge: impl Fn(usize, usize) -> bool) -> (usize, usize) {
    let (mut triples, mut closed) = (0, 0);
    for i in 0..n {
        for j in i + 1..n {
            if !edge(i, j) {
                continue;
            }
            for k in j + 1..n {
                if edge(j, k) {
                    triples += 1;
                    closed += edge(i, k) as usize;
                }
            }
        }
    }
    (triples, closed)
}

pub fn transitive_consistency(graphs: &[DependencyGraph], n_sims: usize, seed: u64) -> Result<TransitiveConsistency> {
    if n_sims == 0 {
        return Err(Error::Invalid("n_sims must be positive".into()));
    }
    let per: Vec<(usize, usize, Option<f64>)> = graphs
        .par_iter()
        .enumerate()
        .map(|(t, g)| {
            let n = g.n();
            let (triples, closed) = triple_counts(n, |a, b| g.has_direct(a, b));
            if triples == 0 {
                return (0, 0, None);
            }
            let p = g.direct_edges().len() as f64 / (n * (n - 1) / 2) as f64;
            let mut rng = resample_rng(seed, t);
            let (mut sim_t, mut sim_c) = (0usize, 0usize);
            let mut adj = vec![false; n * n];
            for _ in 0..n_sims {
                for a in 0..n {
                    for b in a + 1..n {
                        adj[a * n + b] = rng.random::<f64>() < p;
                    }
                }
                let (st, sc) = triple_counts(n, |a, b| adj[a * n + b]);
                sim_t += st;
                sim_c += sc;
            }
            let null = (sim_t > 0).then(|| sim_c as f64 / sim_t as f64);
            (triples, closed, null)
        })
        .collect();
    let n_triples: usize = per.iter().map(|p| p.0).sum();
    let n_closed: usize = per.iter().map(|p| p.1).sum();
    let contributing: Vec<&(usize, usize, Option<f64>)> = per.iter().filter(|p| p.0 > 0).collect();
    if n_triples == 0 {
        return Ok(TransitiveConsistency {
            observed: None,
            null: None,
            n_triples: 0,
            n_closed: 0,
            n_trajectories: graphs.len(),
            n_contributing: 0,
            n_sims,
            wilcoxon: None,
            undefined: true,
        });
    }
    // Null pooled with the observed triple counts as weights.
    let (mut wsum, mut wnull) = (0.0, 0.0);
    let mut diffs = Vec::new();
    for &&(t, c, null) in &contributing {
        if let Some(q) = null {
            wsum += t as f64;
            wnull += t as f64 * q;
            diffs.push(c as f64 / t as f64 - q);
        }
    }
    Ok(TransitiveConsistency {
        observed: Some(n_closed as f64 / n_triples as f64),
        null: (wsum > 0.0).then(|| wnull / wsum),
        n_triples,
        n_closed,
        n_trajectories: graphs.len(),
        n_contributing: contributing.len(),
        n_sims,
        wilcoxon: (!diffs.is_empty()).then(|| wilcoxon_signed_rank(&diffs)),
        undefined: false,
    })
}
