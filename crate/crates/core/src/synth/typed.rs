//! Corpora with JSON tool outputs carrying typed identifiers, for checking
//! the typed oracle against the substring oracle.

use std::collections::HashSet;

use rand::Rng;
use serde_json::{json, Map, Value};

use super::stream;
use crate::error::Result;
use crate::oracle::{DependencyGraph, EdgeSet, TypedSchema};
use crate::trajlog::{Condition, ToolCall, Trajectory};

const BARE_TOOLS: [&str; 2] = ["find_user_id_by_email", "find_user_id_by_name_zip"];
const JSON_TOOLS: [&str; 4] = ["get_order_details", "get_user_details", "list_payments", "get_product"];

#[derive(Debug, Clone)]
pub struct TypedCorpus {
    pub trajectories: Vec<Trajectory>,
    /// Edges placed through typed keys; equal to the typed oracle's graph.
    pub graphs: Vec<DependencyGraph>,
    pub schema: TypedSchema,
}

pub fn typed_schema() -> TypedSchema {
    TypedSchema {
        typed_key_suffixes: vec!["_id".into(), "_ids".into()],
        bare_entity_tools: BARE_TOOLS.iter().map(|s| s.to_string()).collect(),
    }
}

/// A produced identifier and the argument key that would carry it.
struct Produced {
    key: String,
    value: Value,
}

fn fresh<R: Rng>(rng: &mut R, used: &mut HashSet<String>, make: impl Fn(&mut R) -> Value) -> Value {
    loop {
        let v = make(rng);
        let repr = match &v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        // Keep every identifier distinct from, and not nested in, any other.
        if used.iter().all(|u| !u.contains(&repr) && !repr.contains(u.as_str())) {
            used.insert(repr);
            return v;
        }
    }
}

fn letters<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect()
}

fn digits<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n).map(|_| (b'0' + rng.random_range(0..10u8)) as char).collect()
}

pub fn typed_corpus(n_trajectories: usize, seed: u64) -> Result<TypedCorpus> {
    let mut trajectories = Vec::with_capacity(n_trajectories);
    let mut graphs = Vec::with_capacity(n_trajectories);
    for t in 0..n_trajectories {
        let mut rng = stream(seed, t as u64);
        let n = rng.random_range(2..=7);
        let mut used = HashSet::new();
        let mut produced: Vec<Vec<Produced>> = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut tools = Vec::with_capacity(n);
        let mut notes = Vec::with_capacity(n);
        for _ in 0..n {
            let note = fresh(&mut rng, &mut used, |r| Value::String(format!("note {}", letters(r, 6))));
            if rng.random::<f64>() < 0.25 {
                let tool = BARE_TOOLS[rng.random_range(0..BARE_TOOLS.len())];
                let v = fresh(&mut rng, &mut used, |r| Value::String(format!("user_{}_{}", letters(r, 5), digits(r, 4))));
                outputs.push(v.as_str().expect("string id").to_string());
                produced.push(vec![Produced {
                    key: "user_id".into(),
                    value: v,
                }]);
                tools.push(tool.to_string());
            } else {
                let tool = JSON_TOOLS[rng.random_range(0..JSON_TOOLS.len())];
                let order = fresh(&mut rng, &mut used, |r| Value::String(format!("#W{}", digits(r, 7))));
                let payment = fresh(&mut rng, &mut used, |r| Value::String(format!("credit_card_{}", digits(r, 7))));
                let item = fresh(&mut rng, &mut used, |r| json!(r.random_range(10_000_000u64..99_999_999)));
                let body = json!({
                    "order_id": order,
                    "status": "pending",
                    "note": note,
                    "payment_methods": [{"payment_method_id": payment, "kind": "card"}],
                    "items": [{"item_id": item, "price": 12.5}],
                });
                outputs.push(serde_json::to_string(&body)?);
                produced.push(vec![
                    Produced {
                        key: "order_id".into(),
                        value: order,
                    },
                    Produced {
                        key: "payment_method_id".into(),
                        value: payment,
                    },
                    Produced {
                        key: "item_ids".into(),
                        value: item,
                    },
                ]);
                tools.push(tool.to_string());
            }
            notes.push(note);
        }
        let mut edges = EdgeSet::new();
        let mut calls = Vec::with_capacity(n);
        for j in 0..n {
            let mut args = Map::new();
            args.insert("reason".into(), Value::String(format!("because {}", letters(&mut rng, 7))));
            for i in 0..j {
                let r: f64 = rng.random();
                if r < 0.35 {
                    let p = &produced[i][rng.random_range(0..produced[i].len())];
                    let value = if p.key.ends_with("_ids") { json!([p.value]) } else { p.value.clone() };
                    if !args.contains_key(&p.key) {
                        args.insert(p.key.clone(), value);
                        edges.insert((i, j));
                    }
                } else if r < 0.45 {
                    // Untyped reuse: visible to the substring oracle only.
                    args.insert(format!("note_{i}"), notes[i].clone());
                }
            }
            calls.push(ToolCall {
                index: j,
                tool_name: tools[j].clone(),
                arguments: args,
                output_text: outputs[j].clone(),
                boundary_index: j,
            });
        }
        trajectories.push(Trajectory {
            trajectory_id: format!("typed-{t:04}"),
            task_id: format!("typed-task-{t:04}"),
            condition: Condition::Clean,
            reward: None,
            calls,
        });
        graphs.push(DependencyGraph::new(n, edges)?);
    }
    Ok(TypedCorpus {
        trajectories,
        graphs,
        schema: typed_schema(),
    })
}
