//! Common-substring machinery over Unicode scalar values.

/// Suffix automaton of a fixed text; recognises exactly its substrings.
#[derive(Debug, Clone)]
pub struct SuffixAutomaton {
    len: Vec<usize>,
    link: Vec<Option<usize>>,
    // Transitions kept as small sorted vectors; alphabets per text are tiny.
    next: Vec<Vec<(char, usize)>>,
}

impl SuffixAutomaton {
    pub fn new(text: &[char]) -> Self {
        let mut sa = SuffixAutomaton {
            len: vec![0],
            link: vec![None],
            next: vec![Vec::new()],
        };
        let mut last = 0;
        for &c in text {
            last = sa.extend(last, c);
        }
        sa
    }

    fn go(&self, state: usize, c: char) -> Option<usize> {
        let edges = &self.next[state];
        edges
            .binary_search_by(|(k, _)| k.cmp(&c))
            .ok()
            .map(|pos| edges[pos].1)
    }

    fn set(&mut self, state: usize, c: char, to: usize) {
        let edges = &mut self.next[state];
        match edges.binary_search_by(|(k, _)| k.cmp(&c)) {
            Ok(pos) => edges[pos].1 = to,
            Err(pos) => edges.insert(pos, (c, to)),
        }
    }

    fn push_state(&mut self, len: usize, link: Option<usize>, next: Vec<(char, usize)>) -> usize {
        self.len.push(len);
        self.link.push(link);
        self.next.push(next);
        self.len.len() - 1
    }

    fn extend(&mut self, last: usize, c: char) -> usize {
        let cur = self.push_state(self.len[last] + 1, None, Vec::new());
        let mut p = Some(last);
        while let Some(s) = p {
            if self.go(s, c).is_some() {
                break;
            }
            self.set(s, c, cur);
            p = self.link[s];
        }
        match p {
            None => self.link[cur] = Some(0),
            Some(s) => {
                let q = self.go(s, c).expect("loop stopped on existing edge");
                if self.len[s] + 1 == self.len[q] {
                    self.link[cur] = Some(q);
                } else {
                    let clone = self.push_state(self.len[s] + 1, self.link[q], self.next[q].clone());
                    let mut p = Some(s);
                    while let Some(t) = p {
                        if self.go(t, c) != Some(q) {
                            break;
                        }
                        self.set(t, c, clone);
                        p = self.link[t];
                    }
                    self.link[q] = Some(clone);
                    self.link[cur] = Some(clone);
                }
            }
        }
        cur
    }

    pub fn contains(&self, pattern: &[char]) -> bool {
        let mut s = 0;
        for &c in pattern {
            match self.go(s, c) {
                Some(t) => s = t,
                None => return false,
            }
        }
        true
    }

    /// For each position `k` of `query`, the length of the longest suffix of
    /// `query[..=k]` that occurs in the automaton's text.
    pub fn matching_statistics(&self, query: &[char]) -> Vec<usize> {
        let mut out = Vec::with_capacity(query.len());
        let mut state = 0;
        let mut len = 0;
        for &c in query {
            loop {
                if let Some(t) = self.go(state, c) {
                    state = t;
                    len += 1;
                    break;
                }
                match self.link[state] {
                    Some(l) => {
                        state = l;
                        len = self.len[state];
                    }
                    None => {
                        len = 0;
                        break;
                    }
                }
            }
            out.push(len);
        }
        out
    }
}

/// A common substring of `query` and `text` that cannot be extended in
/// `query` on either side while still occurring in `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaximalHit {
    /// Start offset in the query, in chars.
    pub start: usize,
    pub len: usize,
    pub text: String,
}

/// Maximal common substrings of `query` found in `text` with length at least
/// `min_len`, in query order. The longest common substring is always among them.
pub fn maximal_hits(query: &[char], text: &[char], min_len: usize) -> Vec<MaximalHit> {
    let sa = SuffixAutomaton::new(text);
    let ms = sa.matching_statistics(query);
    let mut hits = Vec::new();
    for k in 0..ms.len() {
        let extends_right = k + 1 < ms.len() && ms[k + 1] == ms[k] + 1;
        if ms[k] >= min_len.max(1) && !extends_right {
            let start = k + 1 - ms[k];
            hits.push(MaximalHit {
                start,
                len: ms[k],
                text: query[start..=k].iter().collect(),
            });
        }
    }
    hits
}

/// Length of the longest common substring, in chars.
pub fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    SuffixAutomaton::new(b)
        .matching_statistics(a)
        .into_iter()
        .max()
        .unwrap_or(0)
}
