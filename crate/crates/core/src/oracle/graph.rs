use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered call-index pairs `(i, j)` with `i < j`.
pub type EdgeSet = BTreeSet<(usize, usize)>;

/// Direct dependency edges of one trajectory plus their transitive closure.
///
/// Every edge points forward in call order, so the identity order on call
/// indices is a topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    n: usize,
    direct: EdgeSet,
    closure: EdgeSet,
}

fn check_edges(direct: &EdgeSet, n: usize) -> Result<()> {
    match direct.iter().find(|&&(i, j)| i >= j || j >= n) {
        Some(&(i, j)) => Err(Error::InvalidEdge(i, j, n)),
        None => Ok(()),
    }
}

/// Reachability pairs of a forward-only edge set.
pub fn transitive_closure(direct: &EdgeSet, n: usize) -> Result<EdgeSet> {
    check_edges(direct, n)?;
    let words = n.div_ceil(64).max(1);
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in direct {
        succ[i].push(j);
    }
    // Reverse index order visits every successor before its predecessors.
    let mut reach = vec![vec![0u64; words]; n];
    for i in (0..n).rev() {
        let mut row = vec![0u64; words];
        for &j in &succ[i] {
            row[j / 64] |= 1 << (j % 64);
            for (w, r) in row.iter_mut().zip(&reach[j]) {
                *w |= r;
            }
        }
        reach[i] = row;
    }
    let mut out = EdgeSet::new();
    for (i, row) in reach.iter().enumerate() {
        for j in i + 1..n {
            if row[j / 64] >> (j % 64) & 1 == 1 {
                out.insert((i, j));
            }
        }
    }
    Ok(out)
}

impl DependencyGraph {
    pub fn new(n: usize, direct: EdgeSet) -> Result<Self> {
        let closure = transitive_closure(&direct, n)?;
        Ok(DependencyGraph { n, direct, closure })
    }

    pub fn empty(n: usize) -> Self {
        DependencyGraph {
            n,
            direct: EdgeSet::new(),
            closure: EdgeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direct_edges(&self) -> &EdgeSet {
        &self.direct
    }

    pub fn closure_edges(&self) -> &EdgeSet {
        &self.closure
    }

    pub fn has_direct(&self, i: usize, j: usize) -> bool {
        self.direct.contains(&(i, j))
    }

    pub fn reaches(&self, i: usize, j: usize) -> bool {
        self.closure.contains(&(i, j))
    }

    /// Reachable but not directly connected pairs.
    pub fn transitive_only(&self) -> EdgeSet {
        self.closure.difference(&self.direct).copied().collect()
    }

    pub fn is_transitive_only(&self, i: usize, j: usize) -> bool {
        self.reaches(i, j) && !self.has_direct(i, j)
    }

    /// Shortest path length from `i` to `j` in direct edges.
    pub fn hop_distance(&self, i: usize, j: usize) -> Option<usize> {
        if !self.reaches(i, j) {
            return None;
        }
        let mut dist = vec![usize::MAX; self.n];
        dist[i] = 0;
        let mut queue = VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            for &(_, v) in self.direct.range((u, 0)..(u + 1, 0)) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    if v == j {
                        return Some(dist[v]);
                    }
                    queue.push_back(v);
                }
            }
        }
        None
    }

    /// Direct edges restricted to the first `m` calls.
    pub fn project(&self, m: usize) -> DependencyGraph {
        let direct: EdgeSet = self.direct.iter().filter(|&&(_, j)| j < m).copied().collect();
        DependencyGraph::new(m.min(self.n), direct).expect("subset of a valid edge set")
    }
}

/// Every ordered pair `i < j < n`.
pub fn pair_space(n: usize) -> EdgeSet {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Direct-edge agreement of a candidate graph against a reference graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n_pairs: usize,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl AgreementStats {
    pub fn accumulate(&mut self, other: &AgreementStats) {
        self.n_pairs += other.n_pairs;
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
        self.true_negative += other.true_negative;
    }

    /// Set when the candidate has no edges; precision is then reported as 1.
    pub fn precision_vacuous(&self) -> bool {
        self.true_positive + self.false_positive == 0
    }

    pub fn recall_vacuous(&self) -> bool {
        self.true_positive + self.false_negative == 0
    }

    pub fn precision(&self) -> f64 {
        if self.precision_vacuous() {
            1.0
        } else {
            self.true_positive as f64 / (self.true_positive + self.false_positive) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.recall_vacuous() {
            1.0
        } else {
            self.true_positive as f64 / (self.true_positive + self.false_negative) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Fraction of all `i < j` pairs on which the two graphs agree.
    pub fn agreement(&self) -> f64 {
        if self.n_pairs == 0 {
            1.0
        } else {
            (self.true_positive + self.true_negative) as f64 / self.n_pairs as f64
        }
    }
}

/// Compare `candidate`'s direct edges against `reference`'s.
pub fn oracle_agreement(reference: &DependencyGraph, candidate: &DependencyGraph) -> Result<AgreementStats> {
    if reference.n != candidate.n {
        return Err(Error::Dimension(format!(
            "graphs over {} and {} calls",
            reference.n, candidate.n
        )));
    }
    let n_pairs = reference.n * reference.n.saturating_sub(1) / 2;
    let tp = reference.direct.intersection(&candidate.direct).count();
    let fp = candidate.direct.len() - tp;
    let fn_ = reference.direct.len() - tp;
    Ok(AgreementStats {
        n_pairs,
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        true_negative: n_pairs - tp - fp - fn_,
    })
}
