use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::EdgeSet;

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
pub const TOKEN_LEN: usize = 8;

/// Draws tokens whose 4-grams are new within one trajectory.
pub struct TokenPool {
    seen: HashSet<[u8; 4]>,
}

impl TokenPool {
    pub fn new() -> Self {
        TokenPool { seen: HashSet::new() }
    }

    pub fn draw(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let tok: Vec<u8> = (0..TOKEN_LEN).map(|_| ALNUM[rng.random_range(0..ALNUM.len())]).collect();
            let grams: Vec<[u8; 4]> = tok.windows(4).map(|w| [w[0], w[1], w[2], w[3]]).collect();
            let fresh = grams.iter().all(|g| !self.seen.contains(g))
                && grams.iter().collect::<HashSet<_>>().len() == grams.len();
            if fresh {
                self.seen.extend(grams);
                return String::from_utf8(tok).expect("ascii");
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Texts {
    /// Output tokens per call, joined with single spaces.
    pub outputs: Vec<Vec<String>>,
    /// Argument `(key, value)` entries per call, in insertion order.
    pub args: Vec<Vec<(String, String)>>,
    pub edge_tokens: BTreeMap<(usize, usize), String>,
}

pub fn arg_key(source: usize) -> String {
    format!("in_{source}_id")
}

/// Outputs and arguments whose substring graph is exactly `edges`.
pub fn realize(n: usize, edges: &EdgeSet, rng: &mut ChaCha8Rng) -> Texts {
    let mut pool = TokenPool::new();
    let mut outputs: Vec<Vec<String>> = (0..n).map(|_| vec![pool.draw(rng)]).collect();
    let mut args: Vec<Vec<(String, String)>> = (0..n).map(|_| vec![("q".to_string(), pool.draw(rng))]).collect();
    let mut edge_tokens = BTreeMap::new();
    for &(i, j) in edges {
        let tok = pool.draw(rng);
        outputs[i].push(tok.clone());
        args[j].push((arg_key(i), tok.clone()));
        edge_tokens.insert((i, j), tok);
    }
    Texts {
        outputs,
        args,
        edge_tokens,
    }
}

impl Texts {
    /// The same texts with one edge's token removed from both ends.
    pub fn without_edge(&self, i: usize, j: usize) -> Texts {
        let mut out = self.clone();
        if let Some(tok) = out.edge_tokens.remove(&(i, j)) {
            out.outputs[i].retain(|t| *t != tok);
            out.args[j].retain(|(_, v)| *v != tok);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn keys_have_no_alphanumeric_window() {
        for k in [0, 7, 42, 999] {
            let key = arg_key(k);
            let b = key.as_bytes();
            assert!(b.windows(4).all(|w| w.iter().any(|c| !c.is_ascii_alphanumeric())), "{key}");
        }
    }

    #[test]
    fn tokens_share_no_4gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pool = TokenPool::new();
        let toks: Vec<String> = (0..300).map(|_| pool.draw(&mut rng)).collect();
        let mut all = HashSet::new();
        for t in &toks {
            for w in t.as_bytes().windows(4) {
                assert!(all.insert(w.to_vec()));
            }
        }
    }
}
