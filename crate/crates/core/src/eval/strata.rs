use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{PairMeta, Task};
use crate::error::{Error, Result};
use crate::stats::auroc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAuroc {
    pub name: String,
    pub n_pairs: usize,
    pub n_positive: usize,
    pub auroc: Option<f64>,
    /// Single-class stratum; no AUROC.
    pub skipped: bool,
}

/// Tool-name-pair strata pooled as `sum(U) / sum(P N)` over strata with
/// both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolPairStrata {
    pub n_strata: usize,
    pub n_used: usize,
    pub n_skipped: usize,
    pub within_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    /// Positives at each hop distance against unreachable pairs.
    pub hop: Vec<StratumAuroc>,
    /// Task AUROC within trajectory-length bins.
    pub length: Vec<StratumAuroc>,
    pub tool_pair: ToolPairStrata,
    /// Forward-trained probe scored on direction-reversed features.
    pub reversed_auroc: Option<f64>,
}

fn stratum(name: &str, rows: &[(f64, bool)]) -> StratumAuroc {
    let (s, y): (Vec<f64>, Vec<bool>) = rows.iter().copied().unzip();
    let a = auroc(&s, &y).ok();
    StratumAuroc {
        name: name.to_string(),
        n_pairs: rows.len(),
        n_positive: y.iter().filter(|&&v| v).count(),
        auroc: a,
        skipped: a.is_none(),
    }
}

pub const HOP_BINS: [&str; 3] = ["1", "2", "3+"];
pub const LENGTH_BINS: [&str; 3] = ["2-3", "4-6", "7+"];

fn hop_bin(h: usize) -> usize {
    h.clamp(1, 3) - 1
}

fn length_bin(n: usize) -> usize {
    match n {
        0..=3 => 0,
        4..=6 => 1,
        _ => 2,
    }
}

/// Break scored rows down by hop distance, trajectory length and tool-name
/// pair. Rows without a score are ignored.
pub fn stratified_report(
    meta: &[PairMeta],
    task: Task,
    scores: &[Option<f64>],
    reversed: Option<&[Option<f64>]>,
) -> Result<Strata> {
    if scores.len() != meta.len() || reversed.is_some_and(|r| r.len() != meta.len()) {
        return Err(Error::Dimension("scores do not cover the dataset rows".into()));
    }
    let scored: Vec<(&PairMeta, f64)> = meta.iter().zip(scores).filter_map(|(m, s)| s.map(|s| (m, s))).collect();

    let unreachable: Vec<(f64, bool)> = scored.iter().filter(|(m, _)| m.hop.is_none()).map(|&(_, s)| (s, false)).collect();
    let hop = HOP_BINS
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let mut rows: Vec<(f64, bool)> = scored
                .iter()
                .filter(|(m, _)| m.hop.is_some_and(|h| hop_bin(h) == b))
                .map(|&(_, s)| (s, true))
                .collect();
            rows.extend_from_slice(&unreachable);
            stratum(name, &rows)
        })
        .collect();

    let length = LENGTH_BINS
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let rows: Vec<(f64, bool)> = scored
                .iter()
                .filter(|(m, _)| length_bin(m.n_agent) == b)
                .map(|&(m, s)| (s, m.label(task)))
                .collect();
            stratum(name, &rows)
        })
        .collect();

    let mut by_tools: BTreeMap<(&str, &str), Vec<(f64, bool)>> = BTreeMap::new();
    for &(m, s) in &scored {
        by_tools.entry((&m.tool_i, &m.tool_j)).or_default().push((s, m.label(task)));
    }
    let (mut u_sum, mut pn_sum, mut used) = (0.0, 0.0, 0);
    for rows in by_tools.values() {
        let st = stratum("", rows);
        if let Some(a) = st.auroc {
            let pn = (st.n_positive * (st.n_pairs - st.n_positive)) as f64;
            u_sum += a * pn;
            pn_sum += pn;
            used += 1;
        }
    }
    let tool_pair = ToolPairStrata {
        n_strata: by_tools.len(),
        n_used: used,
        n_skipped: by_tools.len() - used,
        within_auroc: (pn_sum > 0.0).then(|| u_sum / pn_sum),
    };

    let reversed_auroc = match reversed {
        Some(r) => {
            let (s, y): (Vec<f64>, Vec<bool>) = meta
                .iter()
                .zip(r)
                .filter_map(|(m, s)| s.map(|s| (s, m.label(task))))
                .unzip();
            auroc(&s, &y).ok()
        }
        None => None,
    };
    Ok(Strata {
        hop,
        length,
        tool_pair,
        reversed_auroc,
    })
}
