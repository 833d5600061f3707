//! Trajectory logs and activation dumps.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::tensorfile::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    ValueCorrupted,
    SkipTool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub index: usize,
    pub tool_name: String,
    /// Insertion order is preserved from the log.
    pub arguments: Map<String, Value>,
    pub output_text: String,
    pub boundary_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub task_id: String,
    pub condition: Condition,
    pub reward: Option<bool>,
    pub calls: Vec<ToolCall>,
}

impl Trajectory {
    pub fn n_agent(&self) -> usize {
        self.calls.len()
    }

    /// Probing needs at least one ordered pair of calls.
    pub fn is_probeable(&self) -> bool {
        self.n_agent() >= 2
    }

    pub fn tool_names(&self) -> impl Iterator<Item = &str> {
        self.calls.iter().map(|c| c.tool_name.as_str())
    }

    pub fn max_boundary(&self) -> Option<usize> {
        self.calls.iter().map(|c| c.boundary_index).max()
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.trajectory_id;
        if id.is_empty() {
            return Err(Error::validation(id, "trajectory_id", "empty"));
        }
        let mut seen = HashSet::new();
        for (pos, call) in self.calls.iter().enumerate() {
            if call.tool_name.is_empty() {
                return Err(Error::validation(
                    id,
                    &format!("calls[{pos}].tool_name"),
                    "empty tool name",
                ));
            }
            if pos > 0 && call.index <= self.calls[pos - 1].index {
                return Err(Error::validation(
                    id,
                    &format!("calls[{pos}].index"),
                    format!(
                        "index {} does not increase over {}",
                        call.index,
                        self.calls[pos - 1].index
                    ),
                ));
            }
            if !seen.insert(call.boundary_index) {
                return Err(Error::validation(
                    id,
                    &format!("calls[{pos}].boundary_index"),
                    format!("duplicate boundary_index {}", call.boundary_index),
                ));
            }
        }
        Ok(())
    }
}

const TRAJECTORY_FIELDS: [&str; 5] = ["trajectory_id", "task_id", "condition", "reward", "calls"];
const CALL_FIELDS: [&str; 5] = [
    "index",
    "tool_name",
    "arguments",
    "output_text",
    "boundary_index",
];

fn check_fields(value: &Value) -> std::result::Result<(), (String, String)> {
    let obj = value
        .as_object()
        .ok_or_else(|| ("<root>".to_string(), "line is not a JSON object".to_string()))?;
    for f in TRAJECTORY_FIELDS {
        if !obj.contains_key(f) {
            return Err((f.to_string(), "missing field".into()));
        }
    }
    let calls = obj["calls"]
        .as_array()
        .ok_or_else(|| ("calls".to_string(), "expected an array".to_string()))?;
    for (k, call) in calls.iter().enumerate() {
        let cobj = call
            .as_object()
            .ok_or_else(|| (format!("calls[{k}]"), "expected an object".to_string()))?;
        for f in CALL_FIELDS {
            if !cobj.contains_key(f) {
                return Err((format!("calls[{k}].{f}"), "missing field".into()));
            }
        }
        if !cobj["arguments"].is_object() {
            return Err((format!("calls[{k}].arguments"), "expected an object".into()));
        }
    }
    Ok(())
}

/// Parse one JSON-lines record. `line` is 1-based and only used for errors.
pub fn parse_line(text: &str, line: usize) -> Result<Trajectory> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let id = value
        .get("trajectory_id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("<line {line}>"));
    if let Err((field, message)) = check_fields(&value) {
        return Err(Error::validation(&id, &field, message));
    }
    let traj: Trajectory =
        serde_json::from_value(value).map_err(|e| Error::validation(&id, "<schema>", e.to_string()))?;
    traj.validate()?;
    Ok(traj)
}

pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: k + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, k + 1)?);
    }
    Ok(out)
}

/// Parse a JSON-lines trajectory log, one trajectory per line, in file order.
pub fn parse_log(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_log(BufReader::new(file))
}

pub fn to_jsonl(trajectories: &[Trajectory]) -> Result<String> {
    let mut s = String::new();
    for t in trajectories {
        s.push_str(&serde_json::to_string(t)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_log(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(trajectories)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Residual-stream vectors of one trajectory, `[boundary][layer][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStore {
    trajectory_id: String,
    layer_ids: Vec<u32>,
    hidden_dim: usize,
    n_boundaries: usize,
    values: Vec<f32>,
}

impl ActivationStore {
    pub fn new(
        trajectory_id: impl Into<String>,
        layer_ids: Vec<u32>,
        hidden_dim: usize,
        n_boundaries: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if hidden_dim == 0 {
            return Err(Error::Dimension("hidden_dim must be positive".into()));
        }
        if layer_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dimension(format!(
                "layer ids not strictly increasing: {layer_ids:?}"
            )));
        }
        let expected = n_boundaries * layer_ids.len() * hidden_dim;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "{} values for {n_boundaries}x{}x{hidden_dim}",
                values.len(),
                layer_ids.len()
            )));
        }
        let n_layers = layer_ids.len();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let dim = pos % hidden_dim;
            let layer = layer_ids[(pos / hidden_dim) % n_layers];
            let boundary = pos / (hidden_dim * n_layers);
            return Err(Error::NonFinite {
                boundary,
                layer,
                dim,
            });
        }
        Ok(ActivationStore {
            trajectory_id: trajectory_id.into(),
            layer_ids,
            hidden_dim,
            n_boundaries,
            values,
        })
    }

    pub fn zeros(trajectory_id: &str, layer_ids: Vec<u32>, hidden_dim: usize, n_boundaries: usize) -> Result<Self> {
        let n = n_boundaries * layer_ids.len() * hidden_dim;
        Self::new(trajectory_id, layer_ids, hidden_dim, n_boundaries, vec![0.0; n])
    }

    pub fn trajectory_id(&self) -> &str {
        &self.trajectory_id
    }

    pub fn layer_ids(&self) -> &[u32] {
        &self.layer_ids
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn n_boundaries(&self) -> usize {
        self.n_boundaries
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layer_position(&self, layer: u32) -> Option<usize> {
        self.layer_ids.binary_search(&layer).ok()
    }

    fn offset(&self, boundary: usize, layer_pos: usize) -> usize {
        (boundary * self.layer_ids.len() + layer_pos) * self.hidden_dim
    }

    /// Vector at `(boundary, layer id)`.
    pub fn vector(&self, boundary: usize, layer: u32) -> Result<&[f32]> {
        if boundary >= self.n_boundaries {
            return Err(Error::Dimension(format!(
                "boundary {boundary} out of range ({} boundaries)",
                self.n_boundaries
            )));
        }
        let pos = self
            .layer_position(layer)
            .ok_or_else(|| Error::Dimension(format!("layer {layer} not in store")))?;
        let off = self.offset(boundary, pos);
        Ok(&self.values[off..off + self.hidden_dim])
    }

    /// Copy of the store with one `(boundary, layer)` vector overwritten.
    pub fn with_vector(&self, boundary: usize, layer: u32, vector: &[f32]) -> Result<Self> {
        if vector.len() != self.hidden_dim {
            return Err(Error::Dimension(format!(
                "replacement vector has length {}, store dim {}",
                vector.len(),
                self.hidden_dim
            )));
        }
        self.vector(boundary, layer)?;
        let pos = self.layer_position(layer).expect("checked above");
        let off = self.offset(boundary, pos);
        let mut out = self.clone();
        out.values[off..off + self.hidden_dim].copy_from_slice(vector);
        Ok(out)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            name: self.trajectory_id.clone(),
            n_boundaries: self.n_boundaries,
            layer_ids: self.layer_ids.clone(),
            hidden_dim: self.hidden_dim,
            values: self.values.clone(),
        }
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        Self::new(t.name, t.layer_ids, t.hidden_dim, t.n_boundaries, t.values)
    }
}

pub fn write_activations(path: &Path, store: &ActivationStore) -> Result<()> {
    tensorfile::write(path, &store.to_tensor())
}

/// Load and validate the activation dump belonging to `expected`.
pub fn load_activations(path: &Path, expected: &Trajectory) -> Result<ActivationStore> {
    let tensor = tensorfile::read(path)?;
    if tensor.name != expected.trajectory_id {
        return Err(Error::validation(
            &expected.trajectory_id,
            "trajectory_id",
            format!("activation header names `{}`", tensor.name),
        ));
    }
    let store = ActivationStore::from_tensor(tensor)?;
    if let Some(max) = expected.max_boundary() {
        if store.n_boundaries() < max + 1 {
            return Err(Error::validation(
                &expected.trajectory_id,
                "boundary_index",
                format!(
                    "boundary {max} referenced but dump has {} boundaries",
                    store.n_boundaries()
                ),
            ));
        }
    }
    Ok(store)
}

/// Conventional dump file name for a trajectory inside an activation directory.
pub fn activation_file_name(trajectory_id: &str) -> String {
    let safe: String = trajectory_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}.tcpr")
}

#[derive(Debug, Clone)]
pub struct Pairing<'a> {
    pub pairs: Vec<(&'a Trajectory, &'a Trajectory)>,
    /// Task ids present on either side that did not yield a usable pair.
    pub excluded: Vec<String>,
}

fn index_by_task<'a>(list: &'a [Trajectory], side: &str) -> Result<BTreeMap<&'a str, &'a Trajectory>> {
    let mut map = BTreeMap::new();
    for t in list {
        if map.insert(t.task_id.as_str(), t).is_some() {
            return Err(Error::validation(
                &t.trajectory_id,
                "task_id",
                format!("duplicate task_id `{}` in {side} list", t.task_id),
            ));
        }
    }
    Ok(map)
}

/// Match clean and counterpart trajectories on `task_id`, keeping only pairs
/// where both members are probeable.
pub fn pair_corpus<'a>(clean: &'a [Trajectory], counterpart: &'a [Trajectory]) -> Result<Pairing<'a>> {
    let cmap = index_by_task(clean, "clean")?;
    let kmap = index_by_task(counterpart, "counterpart")?;
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for t in clean {
        match kmap.get(t.task_id.as_str()) {
            Some(k) if t.is_probeable() && k.is_probeable() => pairs.push((t, *k)),
            _ => excluded.push(t.task_id.clone()),
        }
    }
    for k in counterpart {
        if !cmap.contains_key(k.task_id.as_str()) {
            excluded.push(k.task_id.clone());
        }
    }
    Ok(Pairing { pairs, excluded })
}
