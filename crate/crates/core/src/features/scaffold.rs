use std::collections::BTreeMap;

use crate::scalar::Scalar;

/// Tool-name and bigram vocabularies fitted on one training fold.
///
/// Layout of a transformed row: one-hot `tool_i` (vocabulary then OOV),
/// one-hot `tool_j` (same), one-hot bigram over observed bigrams then OOV,
/// `j - i`, then the 5 positional scalars.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScaffoldVocab {
    tools: BTreeMap<String, usize>,
    bigrams: BTreeMap<(String, String), usize>,
}

impl ScaffoldVocab {
    pub fn fit<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut tools = BTreeMap::new();
        let mut bigrams = BTreeMap::new();
        for (a, b) in pairs {
            for t in [a, b] {
                if !tools.contains_key(t) {
                    tools.insert(t.to_string(), 0);
                }
            }
            bigrams.entry((a.to_string(), b.to_string())).or_insert(0);
        }
        for (k, v) in tools.values_mut().enumerate() {
            *v = k;
        }
        for (k, v) in bigrams.values_mut().enumerate() {
            *v = k;
        }
        ScaffoldVocab { tools, bigrams }
    }

    pub fn n_tools(&self) -> usize {
        self.tools.len()
    }

    pub fn n_bigrams(&self) -> usize {
        self.bigrams.len()
    }

    pub fn width(&self) -> usize {
        2 * (self.n_tools() + 1) + self.n_bigrams() + 1 + 1 + 5
    }

    pub fn transform<F: Scalar>(&self, tool_i: &str, tool_j: &str, i: usize, j: usize, n_agent: usize) -> Vec<F> {
        let k = self.n_tools() + 1;
        let mut out = vec![F::zero(); self.width()];
        let slot = |t: &str| self.tools.get(t).copied().unwrap_or(k - 1);
        out[slot(tool_i)] = F::one();
        out[k + slot(tool_j)] = F::one();
        let b = self
            .bigrams
            .get(&(tool_i.to_string(), tool_j.to_string()))
            .copied()
            .unwrap_or(self.n_bigrams());
        out[2 * k + b] = F::one();
        let tail = 2 * k + self.n_bigrams() + 1;
        out[tail] = F::from_usize(j - i).expect("distance");
        out[tail + 1..].copy_from_slice(&super::positional::<F>(i, j, n_agent));
        out
    }
}
