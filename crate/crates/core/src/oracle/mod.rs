//! Ground-truth dependency DAGs.
//!
//! Two oracles are provided. The substring oracle adds `i -> j` when a
//! whitespace-normalised, case-sensitive substring of length at least
//! [`MIN_HIT_LEN`] of call `i`'s output occurs verbatim in call `j`'s
//! serialised arguments. The typed oracle adds `i -> j` only when a typed
//! identifier value produced by call `i` is passed unchanged under a typed
//! argument key of call `j`.

mod graph;
pub mod lcs;
mod text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::trajlog::Trajectory;

pub use graph::{oracle_agreement, pair_space, transitive_closure, AgreementStats, DependencyGraph, EdgeSet};
pub use lcs::{longest_common_substring, maximal_hits, MaximalHit, SuffixAutomaton};
pub use text::{is_regex_space, normalize_text, python_float_repr, serialize_args, serialize_value};

/// Minimum length, in characters, of a reused substring.
pub const MIN_HIT_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Substring,
    Typed,
}

/// Normalised output texts and argument serialisations of a trajectory.
pub struct NormalizedCalls {
    pub outputs: Vec<Vec<char>>,
    pub arguments: Vec<Vec<char>>,
}

impl NormalizedCalls {
    pub fn new(traj: &Trajectory) -> Result<Self> {
        let mut outputs = Vec::with_capacity(traj.n_agent());
        let mut arguments = Vec::with_capacity(traj.n_agent());
        for call in &traj.calls {
            outputs.push(normalize_text(&call.output_text).chars().collect());
            arguments.push(normalize_text(&serialize_args(&call.arguments)?).chars().collect());
        }
        Ok(NormalizedCalls { outputs, arguments })
    }
}

/// Maximal reused substrings from call `i`'s output into call `j`'s arguments.
pub fn pair_hits(calls: &NormalizedCalls, i: usize, j: usize) -> Vec<MaximalHit> {
    maximal_hits(&calls.outputs[i], &calls.arguments[j], MIN_HIT_LEN)
}

/// Substring value-reuse oracle.
pub fn substring_edges(traj: &Trajectory) -> Result<DependencyGraph> {
    let calls = NormalizedCalls::new(traj)?;
    let n = traj.n_agent();
    // One automaton per argument text, matched against every earlier output.
    let mut direct = EdgeSet::new();
    for j in 1..n {
        if calls.arguments[j].len() < MIN_HIT_LEN {
            continue;
        }
        let sa = SuffixAutomaton::new(&calls.arguments[j]);
        for i in 0..j {
            if calls.outputs[i].len() < MIN_HIT_LEN {
                continue;
            }
            let longest = sa.matching_statistics(&calls.outputs[i]).into_iter().max().unwrap_or(0);
            if longest >= MIN_HIT_LEN {
                direct.insert((i, j));
            }
        }
    }
    DependencyGraph::new(n, direct)
}

/// Which keys and tools carry typed identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedSchema {
    #[serde(default = "default_suffixes")]
    pub typed_key_suffixes: Vec<String>,
    /// Tools whose entire output is one identifier.
    #[serde(default)]
    pub bare_entity_tools: Vec<String>,
}

fn default_suffixes() -> Vec<String> {
    vec!["_id".to_string()]
}

impl Default for TypedSchema {
    fn default() -> Self {
        TypedSchema {
            typed_key_suffixes: default_suffixes(),
            bare_entity_tools: Vec::new(),
        }
    }
}

impl TypedSchema {
    pub fn is_typed_key(&self, key: &str) -> bool {
        self.typed_key_suffixes.iter().any(|s| key.ends_with(s.as_str()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn push_scalars(value: &Value, out: &mut Vec<Value>) {
    match value {
        Value::String(_) | Value::Number(_) => out.push(value.clone()),
        Value::Array(items) => items.iter().for_each(|v| push_scalars(v, out)),
        _ => {}
    }
}

/// Scalar values found under typed keys anywhere inside `value`.
pub fn typed_values(value: &Value, schema: &TypedSchema) -> Vec<Value> {
    let mut out = Vec::new();
    collect_typed(value, schema, &mut out);
    out
}

fn collect_typed(value: &Value, schema: &TypedSchema, out: &mut Vec<Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                if schema.is_typed_key(k) {
                    push_scalars(v, out);
                }
                collect_typed(v, schema, out);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_typed(v, schema, out)),
        _ => {}
    }
}

/// Typed identifier values produced by a call's output.
pub fn produced_values(tool_name: &str, output_text: &str, schema: &TypedSchema) -> Vec<Value> {
    let parsed: Option<Value> = serde_json::from_str(output_text).ok();
    let mut out = Vec::new();
    if schema.bare_entity_tools.iter().any(|t| t == tool_name) {
        match &parsed {
            Some(v @ (Value::String(_) | Value::Number(_))) => out.push(v.clone()),
            _ => {
                let trimmed = output_text.trim();
                if !trimmed.is_empty() {
                    out.push(Value::String(trimmed.to_string()));
                }
            }
        }
    }
    if let Some(v) = &parsed {
        out.extend(typed_values(v, schema));
    }
    out
}

/// Schema-typed value-equality oracle (no substring containment).
pub fn typed_edges(traj: &Trajectory, schema: &TypedSchema) -> Result<DependencyGraph> {
    let n = traj.n_agent();
    let produced: Vec<Vec<Value>> = traj
        .calls
        .iter()
        .map(|c| produced_values(&c.tool_name, &c.output_text, schema))
        .collect();
    let consumed: Vec<Vec<Value>> = traj
        .calls
        .iter()
        .map(|c| typed_values(&Value::Object(c.arguments.clone()), schema))
        .collect();
    let mut direct = EdgeSet::new();
    for j in 1..n {
        for i in 0..j {
            if produced[i].iter().any(|p| consumed[j].contains(p)) {
                direct.insert((i, j));
            }
        }
    }
    DependencyGraph::new(n, direct)
}

pub fn build_graph(traj: &Trajectory, kind: OracleKind, schema: Option<&TypedSchema>) -> Result<DependencyGraph> {
    match kind {
        OracleKind::Substring => substring_edges(traj),
        OracleKind::Typed => {
            let default = TypedSchema::default();
            typed_edges(traj, schema.unwrap_or(&default))
        }
    }
}

/// Two trajectories sharing a tool-name prefix whose direct edges on that
/// prefix differ in exactly one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub donor_id: String,
    pub target_id: String,
    pub shared_prefix_len: usize,
    pub differing_edge: (usize, usize),
    /// Whether the donor's oracle contains the differing edge.
    pub donor_has_edge: bool,
}

pub const MIN_SHARED_PREFIX: usize = 2;

/// Scan all unordered trajectory pairs (corpus order gives donor, target).
pub fn select_minimal_pairs(corpus: &[(&Trajectory, &DependencyGraph)]) -> Vec<MinimalPair> {
    let mut out = Vec::new();
    for a in 0..corpus.len() {
        for b in a + 1..corpus.len() {
            let (ta, ga) = corpus[a];
            let (tb, gb) = corpus[b];
            let prefix = ta
                .tool_names()
                .zip(tb.tool_names())
                .take_while(|(x, y)| x == y)
                .count();
            if prefix < MIN_SHARED_PREFIX {
                continue;
            }
            let on_prefix = |g: &DependencyGraph| -> EdgeSet {
                g.direct_edges().iter().filter(|&&(_, j)| j < prefix).copied().collect()
            };
            let (ea, eb) = (on_prefix(ga), on_prefix(gb));
            let diff: Vec<(usize, usize)> = ea.symmetric_difference(&eb).copied().collect();
            if let [edge] = diff[..] {
                out.push(MinimalPair {
                    donor_id: ta.trajectory_id.clone(),
                    target_id: tb.trajectory_id.clone(),
                    shared_prefix_len: prefix,
                    differing_edge: edge,
                    donor_has_edge: ea.contains(&edge),
                });
            }
        }
    }
    out
}

impl MinimalPair {
    /// The same pair with donor and target swapped.
    pub fn reversed(&self) -> MinimalPair {
        MinimalPair {
            donor_id: self.target_id.clone(),
            target_id: self.donor_id.clone(),
            shared_prefix_len: self.shared_prefix_len,
            differing_edge: self.differing_edge,
            donor_has_edge: !self.donor_has_edge,
        }
    }
}

/// Per-trajectory edge-list export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeListRecord {
    pub trajectory_id: String,
    pub task_id: String,
    pub n_agent: usize,
    pub oracle: OracleKind,
    pub direct_edges: Vec<(usize, usize)>,
    pub transitive_only_edges: Vec<(usize, usize)>,
}

impl EdgeListRecord {
    pub fn new(traj: &Trajectory, graph: &DependencyGraph, oracle: OracleKind) -> Self {
        EdgeListRecord {
            trajectory_id: traj.trajectory_id.clone(),
            task_id: traj.task_id.clone(),
            n_agent: traj.n_agent(),
            oracle,
            direct_edges: graph.direct_edges().iter().copied().collect(),
            transitive_only_edges: graph.transitive_only().into_iter().collect(),
        }
    }

    pub fn graph(&self) -> Result<DependencyGraph> {
        DependencyGraph::new(self.n_agent, self.direct_edges.iter().copied().collect())
    }
}

/// Edge lists keyed by trajectory id.
pub fn index_edge_lists(records: &[EdgeListRecord]) -> Result<BTreeMap<String, DependencyGraph>> {
    records
        .iter()
        .map(|r| Ok((r.trajectory_id.clone(), r.graph()?)))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::trajlog::{Condition, ToolCall};
    use proptest::prelude::*;
    use serde_json::{json, Map};

    pub(crate) fn call(k: usize, tool: &str, args: Value, output: &str) -> ToolCall {
        ToolCall {
            index: k,
            tool_name: tool.into(),
            arguments: args.as_object().cloned().unwrap_or_else(Map::new),
            output_text: output.into(),
            boundary_index: k,
        }
    }

    pub(crate) fn traj(calls: Vec<ToolCall>) -> Trajectory {
        Trajectory {
            trajectory_id: "t".into(),
            task_id: "task".into(),
            condition: Condition::Clean,
            reward: None,
            calls,
        }
    }

    fn two(output: &str, args: Value) -> Trajectory {
        traj(vec![call(0, "a", json!({}), output), call(1, "b", args, "")])
    }

    #[test]
    fn substring_threshold_cases() {
        assert!(substring_edges(&two("id: ABCD", json!({"x": "ABCD"}))).unwrap().has_direct(0, 1));
        assert!(substring_edges(&two("ab c", json!({"x": "ab c"}))).unwrap().has_direct(0, 1));
        assert!(!substring_edges(&two("xyz", json!({"x": "xyz"}))).unwrap().has_direct(0, 1));
        // whitespace runs collapse before matching
        assert!(substring_edges(&two("ab \n\t c", json!({"x": "ab c"}))).unwrap().has_direct(0, 1));
        // case-sensitive
        assert!(!substring_edges(&two("abcd", json!({"x": "ABCD"}))).unwrap().has_direct(0, 1));
    }

    #[test]
    fn only_forward_pairs() {
        let t = traj(vec![
            call(0, "a", json!({"q": "WXYZ"}), "PQRS"),
            call(1, "b", json!({"q": "PQRS"}), "WXYZ"),
        ]);
        let g = substring_edges(&t).unwrap();
        assert_eq!(g.direct_edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    fn brute(traj: &Trajectory) -> EdgeSet {
        let calls = NormalizedCalls::new(traj).unwrap();
        let mut out = EdgeSet::new();
        for j in 0..traj.n_agent() {
            let a: String = calls.arguments[j].iter().collect();
            for i in 0..j {
                let o = &calls.outputs[i];
                if o.windows(4).any(|w| a.contains(&w.iter().collect::<String>())) {
                    out.insert((i, j));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn substring_matches_window_oracle(
            outs in proptest::collection::vec("[ab \"{}:,\t]{0,14}", 2..5),
            vals in proptest::collection::vec("[ab \n]{0,10}", 2..5),
        ) {
            let n = outs.len().min(vals.len());
            let calls = (0..n).map(|k| call(k, "t", json!({"k": vals[k]}), &outs[k])).collect();
            let t = traj(calls);
            let g = substring_edges(&t).unwrap();
            prop_assert_eq!(g.direct_edges(), &brute(&t));
        }
    }

    #[test]
    fn typed_examples() {
        let schema = TypedSchema::default();
        let t = two(r#"{"user_id": "yusuf_rossi_9620"}"#, json!({"user_id": "yusuf_rossi_9620"}));
        assert!(typed_edges(&t, &schema).unwrap().has_direct(0, 1));
        let t = two(r#"{"user_id": "123"}"#, json!({"note": "user 123 called"}));
        assert!(!typed_edges(&t, &schema).unwrap().has_direct(0, 1));
        // type matters: a string id does not match a numeric argument
        let t = two(r#"{"order_id": "5521"}"#, json!({"order_id": 5521}));
        assert!(!typed_edges(&t, &schema).unwrap().has_direct(0, 1));
        // nested output fields and array arguments
        let t = two(
            r##"{"orders": [{"order_id": "#W1234"}, {"order_id": "#W9999"}]}"##,
            json!({"order_ids": ["#W9999"]}),
        );
        let schema2 = TypedSchema {
            typed_key_suffixes: vec!["_id".into(), "_ids".into()],
            bare_entity_tools: vec![],
        };
        assert!(typed_edges(&t, &schema2).unwrap().has_direct(0, 1));
    }

    #[test]
    fn bare_entity_tools() {
        let schema = TypedSchema {
            typed_key_suffixes: vec!["_id".into()],
            bare_entity_tools: vec!["find_user_id".into()],
        };
        let mk = |out: &str| {
            traj(vec![
                call(0, "find_user_id", json!({"email": "a@b.c"}), out),
                call(1, "get_user_details", json!({"user_id": "yusuf_rossi_9620"}), "{}"),
            ])
        };
        assert!(typed_edges(&mk("\"yusuf_rossi_9620\""), &schema).unwrap().has_direct(0, 1));
        assert!(typed_edges(&mk("yusuf_rossi_9620\n"), &schema).unwrap().has_direct(0, 1));
        assert!(!typed_edges(&mk("not json, no match"), &schema).unwrap().has_direct(0, 1));
        // without the declaration the plain string output carries no typed value
        assert!(!typed_edges(&mk("\"yusuf_rossi_9620\""), &TypedSchema::default())
            .unwrap()
            .has_direct(0, 1));
    }

    #[test]
    fn schema_json() {
        let s = TypedSchema::from_json(r#"{"bare_entity_tools": ["find_user_id"]}"#).unwrap();
        assert_eq!(s.typed_key_suffixes, vec!["_id"]);
        assert!(s.is_typed_key("order_id"));
        assert!(!s.is_typed_key("identity"));
    }

    fn named(id: &str, tools: &[&str]) -> Trajectory {
        let mut t = traj(tools.iter().enumerate().map(|(k, n)| call(k, n, json!({}), "")).collect());
        t.trajectory_id = id.into();
        t
    }

    fn g(n: usize, e: &[(usize, usize)]) -> DependencyGraph {
        DependencyGraph::new(n, e.iter().copied().collect()).unwrap()
    }

    #[test]
    fn minimal_pair_basic() {
        let a = named("A", &["x", "y", "z"]);
        let b = named("B", &["x", "y", "z"]);
        let (ga, gb) = (g(3, &[(0, 1)]), g(3, &[(0, 1), (0, 2)]));
        let pairs = select_minimal_pairs(&[(&a, &ga), (&b, &gb)]);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].differing_edge, (0, 2));
        assert_eq!(pairs[0].shared_prefix_len, 3);
        assert!(!pairs[0].donor_has_edge);
        assert!(pairs[0].reversed().donor_has_edge);
        assert!(select_minimal_pairs(&[(&a, &ga), (&b, &ga)]).is_empty());
    }

    #[test]
    fn minimal_pair_prefix_restriction() {
        // Edges beyond the shared prefix do not count.
        let a = named("A", &["x", "y", "q", "w"]);
        let b = named("B", &["x", "y", "z"]);
        let ga = g(4, &[(0, 1), (1, 3), (2, 3)]);
        let gb = g(3, &[(0, 2)]);
        let pairs = select_minimal_pairs(&[(&a, &ga), (&b, &gb)]);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].shared_prefix_len, 2);
        assert_eq!(pairs[0].differing_edge, (0, 1));
        // prefix of one is too short
        let c = named("C", &["x", "k"]);
        let gc = g(2, &[]);
        assert!(select_minimal_pairs(&[(&b, &gb), (&c, &gc)]).is_empty());
    }

    #[test]
    fn edge_list_round_trip() {
        let t = named("A", &["x", "y", "z"]);
        let gr = g(3, &[(0, 1), (1, 2)]);
        let rec = EdgeListRecord::new(&t, &gr, OracleKind::Substring);
        assert_eq!(rec.transitive_only_edges, vec![(0, 2)]);
        let text = serde_json::to_string(&rec).unwrap();
        let back: EdgeListRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.graph().unwrap(), gr);
    }
}
