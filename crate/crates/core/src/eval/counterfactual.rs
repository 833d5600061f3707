use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::oracle::{serialize_args, serialize_value, DependencyGraph};
use crate::trajlog::{Condition, Trajectory};

/// Where a corruption was applied, if anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub call_index: usize,
    /// The chosen field's value was referenced by a downstream oracle edge.
    pub hit: bool,
    /// JSON pointer of the corrupted field.
    pub path: Option<String>,
    pub original: Option<String>,
    pub corrupted: Option<String>,
}

/// `_id`-suffixed scalar fields in document order, as (pointer, text).
fn id_fields(value: &Value, pointer: &str, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let p = format!("{pointer}/{}", k.replace('~', "~0").replace('/', "~1"));
                match v {
                    Value::String(s) if k.ends_with("_id") => out.push((p, s.clone())),
                    Value::Number(n) if k.ends_with("_id") => out.push((p, n.to_string())),
                    _ => id_fields(v, &p, out),
                }
            }
        }
        Value::Array(items) => {
            for (k, v) in items.iter().enumerate() {
                id_fields(v, &format!("{pointer}/{k}"), out);
            }
        }
        _ => {}
    }
}

/// Replace 2 or 3 alphanumeric characters, each with a different character
/// of the same class. A leading digit of a number never becomes 0.
fn flip_chars(text: &str, numeric: bool, rng: &mut ChaCha8Rng) -> Option<String> {
    let mut chars: Vec<char> = text.chars().collect();
    let slots: Vec<usize> = (0..chars.len()).filter(|&k| chars[k].is_ascii_alphanumeric()).collect();
    if slots.is_empty() {
        return None;
    }
    let want = rng.random_range(2..=3).min(slots.len());
    for pick in sample(rng, slots.len(), want).into_vec() {
        let k = slots[pick];
        let c = chars[k];
        let pool: Vec<char> = if c.is_ascii_digit() {
            let lo = if numeric && k == slots[0] { b'1' } else { b'0' };
            (lo..=b'9').map(char::from).collect()
        } else if c.is_ascii_lowercase() {
            ('a'..='z').collect()
        } else {
            ('A'..='Z').collect()
        };
        let choices: Vec<char> = pool.into_iter().filter(|&x| x != c).collect();
        if choices.is_empty() {
            continue;
        }
        chars[k] = choices[rng.random_range(0..choices.len())];
    }
    Some(chars.into_iter().collect())
}

/// Corrupt one `_id` field in the output of the median call `n_agent / 2`.
///
/// Prefers the first field whose value occurs in the serialised arguments of
/// a downstream call the oracle links to this call; otherwise takes the
/// first `_id` field and reports no hit. Outputs that are not JSON, or have
/// no `_id` field, are left untouched.
pub fn corrupt_id_field(traj: &Trajectory, oracle: &DependencyGraph, rng: &mut ChaCha8Rng) -> Result<(Trajectory, Corruption)> {
    let n = traj.n_agent();
    if n == 0 {
        return Err(Error::Invalid(format!("trajectory {} has no calls", traj.trajectory_id)));
    }
    if oracle.n() != n {
        return Err(Error::Dimension(format!("oracle over {} calls, trajectory has {n}", oracle.n())));
    }
    let m = n / 2;
    let mut out = traj.clone();
    out.trajectory_id = format!("{}-vc", traj.trajectory_id);
    out.condition = Condition::ValueCorrupted;
    let mut info = Corruption {
        call_index: m,
        hit: false,
        path: None,
        original: None,
        corrupted: None,
    };
    let Ok(mut doc) = serde_json::from_str::<Value>(&traj.calls[m].output_text) else {
        return Ok((out, info));
    };
    let mut fields = Vec::new();
    id_fields(&doc, "", &mut fields);
    if fields.is_empty() {
        return Ok((out, info));
    }
    let downstream: Vec<String> = oracle
        .direct_edges()
        .iter()
        .filter(|&&(i, _)| i == m)
        .map(|&(_, j)| serialize_args(&traj.calls[j].arguments))
        .collect::<Result<_>>()?;
    let referenced = fields
        .iter()
        .position(|(_, v)| downstream.iter().any(|args| args.contains(v.as_str())));
    let (path, original) = fields[referenced.unwrap_or(0)].clone();
    let slot = doc.pointer_mut(&path).expect("pointer from the same document");
    let numeric = slot.is_number();
    let Some(flipped) = flip_chars(&original, numeric, rng) else {
        return Ok((out, info));
    };
    *slot = if numeric {
        match flipped.parse::<u64>().ok().map(Number::from).or_else(|| flipped.parse::<i64>().ok().map(Number::from)) {
            Some(num) => Value::Number(num),
            None => return Ok((out, info)),
        }
    } else {
        Value::String(flipped.clone())
    };
    out.calls[m].output_text = serialize_value(&doc)?;
    info.hit = referenced.is_some();
    info.path = Some(path);
    info.original = Some(original);
    info.corrupted = Some(flipped);
    Ok((out, info))
}

/// Replace the output of call `n_agent / 2` with the literal `{}`.
pub fn skip_tool_rewrite(traj: &Trajectory) -> Result<Trajectory> {
    let n = traj.n_agent();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "trajectory {} has {n} calls; skipping needs at least 2",
            traj.trajectory_id
        )));
    }
    let mut out = traj.clone();
    out.trajectory_id = format!("{}-skip", traj.trajectory_id);
    out.condition = Condition::SkipTool;
    out.calls[n / 2].output_text = "{}".into();
    Ok(out)
}
