//! Pair feature families: pooled residual endpoints, positional scalars,
//! fold-fitted scaffold one-hots and surface-form overlap statistics.

mod scaffold;
mod surface;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use scaffold::ScaffoldVocab;
pub use surface::{surface_block, surface_features, tool_hash, SURFACE_WIDTH};

use crate::error::{Error, Result};
use crate::oracle::DependencyGraph;
use crate::scalar::Scalar;
use crate::tensorfile::{self, Tensor};
use crate::trajlog::{ActivationStore, Trajectory};

/// Which pooled endpoint vectors are concatenated, in `i, j, diff` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub i: bool,
    pub j: bool,
    /// `pooled_j - pooled_i`.
    pub diff: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVariant {
    pub name: String,
    pub endpoints: Endpoints,
    pub layer_ids: Vec<u32>,
}

const BOTH: Endpoints = Endpoints { i: true, j: true, diff: false };

impl FeatureVariant {
    pub fn v0() -> Self {
        Self::new("V0", Endpoints { i: true, j: true, diff: true }, crate::DEFAULT_LAYERS.to_vec())
    }

    /// The canonical probe input: both endpoints over the 7-layer pool.
    pub fn v1() -> Self {
        Self::new("V1", BOTH, crate::DEFAULT_LAYERS.to_vec())
    }

    pub fn v2() -> Self {
        Self::new("V2", Endpoints { i: false, j: true, diff: false }, crate::DEFAULT_LAYERS.to_vec())
    }

    pub fn v3() -> Self {
        Self::new("V3", BOTH, vec![41])
    }

    pub fn v4() -> Self {
        Self::new("V4", Endpoints { i: false, j: false, diff: true }, crate::DEFAULT_LAYERS.to_vec())
    }

    /// Both endpoints at one layer, used for per-layer profiles.
    pub fn single_layer(layer: u32) -> Self {
        Self::new(&format!("L{layer}"), BOTH, vec![layer])
    }

    pub fn new(name: &str, endpoints: Endpoints, layer_ids: Vec<u32>) -> Self {
        FeatureVariant {
            name: name.to_string(),
            endpoints,
            layer_ids,
        }
    }

    /// `V0`..`V4` or `L<layer>`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "V0" => Ok(Self::v0()),
            "V1" => Ok(Self::v1()),
            "V2" => Ok(Self::v2()),
            "V3" => Ok(Self::v3()),
            "V4" => Ok(Self::v4()),
            _ => name
                .strip_prefix('L')
                .and_then(|l| l.parse().ok())
                .map(Self::single_layer)
                .ok_or_else(|| Error::Invalid(format!("unknown feature variant `{name}`"))),
        }
    }

    /// Same endpoints over a different layer set.
    pub fn with_layers(&self, layer_ids: Vec<u32>) -> Self {
        FeatureVariant {
            layer_ids,
            ..self.clone()
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.endpoints.i as usize + self.endpoints.j as usize + self.endpoints.diff as usize
    }

    pub fn width(&self, hidden_dim: usize) -> usize {
        self.n_blocks() * hidden_dim
    }
}

/// Mean over `layer_ids` of the boundary's vectors, accumulated in `F`.
pub fn pool_residual<F: Scalar>(store: &ActivationStore, boundary: usize, layer_ids: &[u32]) -> Result<Array1<F>> {
    if layer_ids.is_empty() {
        return Err(Error::Invalid("empty pooling layer set".into()));
    }
    let mut acc = Array1::<F>::zeros(store.hidden_dim());
    for &layer in layer_ids {
        for (a, &v) in acc.iter_mut().zip(store.vector(boundary, layer)?) {
            *a += F::from_f32_value(v);
        }
    }
    let k = F::from_usize(layer_ids.len()).expect("layer count");
    acc.mapv_inplace(|v| v / k);
    Ok(acc)
}

/// `[i, j, j - i, n_agent, j / n_agent]`.
pub fn positional<F: Scalar>(i: usize, j: usize, n_agent: usize) -> [F; 5] {
    let f = |x: usize| F::from_usize(x).expect("index");
    [f(i), f(j), f(j - i), f(n_agent), f(j) / f(n_agent)]
}

/// One ordered call pair of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample<F: Scalar> {
    pub trajectory_id: String,
    pub i: usize,
    pub j: usize,
    pub n_agent: usize,
    pub label_direct: bool,
    pub label_transitive_only: bool,
    pub tool_i: String,
    pub tool_j: String,
    pub residual: Array1<F>,
    pub positional: [F; 5],
}

fn concat_endpoints<F: Scalar>(e: Endpoints, hi: &Array1<F>, hj: &Array1<F>) -> Array1<F> {
    let d = hi.len();
    let mut out = Vec::with_capacity(3 * d);
    if e.i {
        out.extend(hi.iter().copied());
    }
    if e.j {
        out.extend(hj.iter().copied());
    }
    if e.diff {
        out.extend(hj.iter().zip(hi.iter()).map(|(&b, &a)| b - a));
    }
    Array1::from(out)
}

/// Residual features of pair `(i, j)` from already pooled call vectors.
pub fn endpoint_features<F: Scalar>(variant: &FeatureVariant, pooled_i: &Array1<F>, pooled_j: &Array1<F>) -> Array1<F> {
    concat_endpoints(variant.endpoints, pooled_i, pooled_j)
}

/// Pooled vectors of every call, in call order.
pub fn pool_calls<F: Scalar>(traj: &Trajectory, store: &ActivationStore, layer_ids: &[u32]) -> Result<Vec<Array1<F>>> {
    traj.calls
        .iter()
        .map(|c| pool_residual(store, c.boundary_index, layer_ids))
        .collect()
}

/// All `i < j` pairs of a trajectory, `i`-major.
pub fn build_pair_features<F: Scalar>(
    traj: &Trajectory,
    store: &ActivationStore,
    graph: &DependencyGraph,
    variant: &FeatureVariant,
) -> Result<Vec<PairExample<F>>> {
    let n = traj.n_agent();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "trajectory {} has {n} calls; pairs need at least 2",
            traj.trajectory_id
        )));
    }
    if graph.n() != n {
        return Err(Error::Dimension(format!(
            "graph over {} calls for trajectory {} with {n}",
            graph.n(),
            traj.trajectory_id
        )));
    }
    let pooled = pool_calls::<F>(traj, store, &variant.layer_ids)?;
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(PairExample {
                trajectory_id: traj.trajectory_id.clone(),
                i,
                j,
                n_agent: n,
                label_direct: graph.has_direct(i, j),
                label_transitive_only: graph.is_transitive_only(i, j),
                tool_i: traj.calls[i].tool_name.clone(),
                tool_j: traj.calls[j].tool_name.clone(),
                residual: endpoint_features(variant, &pooled[i], &pooled[j]),
                positional: positional(i, j, n),
            });
        }
    }
    Ok(out)
}

/// Swap the `i` and `j` residual blocks; a diff block changes sign.
pub fn reverse_residual<F: Scalar>(variant: &FeatureVariant, residual: &Array1<F>) -> Result<Array1<F>> {
    let e = variant.endpoints;
    if !(e.i && e.j) {
        return Err(Error::Invalid(format!(
            "variant {} lacks separate i and j blocks",
            variant.name
        )));
    }
    if residual.len() % variant.n_blocks() != 0 {
        return Err(Error::Dimension(format!(
            "residual length {} is not a multiple of {} blocks",
            residual.len(),
            variant.n_blocks()
        )));
    }
    let d = residual.len() / variant.n_blocks();
    let mut out = Vec::with_capacity(residual.len());
    out.extend(residual.slice(ndarray::s![d..2 * d]).iter().copied());
    out.extend(residual.slice(ndarray::s![..d]).iter().copied());
    if e.diff {
        out.extend(residual.slice(ndarray::s![2 * d..]).iter().map(|&v| -v));
    }
    Ok(Array1::from(out))
}

/// The example with its residual endpoints reversed; labels are unchanged.
pub fn reverse_direction<F: Scalar>(variant: &FeatureVariant, example: &PairExample<F>) -> Result<PairExample<F>> {
    Ok(PairExample {
        residual: reverse_residual(variant, &example.residual)?,
        ..example.clone()
    })
}

/// Stack residual blocks into a matrix.
pub fn residual_matrix<F: Scalar>(examples: &[PairExample<F>]) -> Result<Array2<F>> {
    let width = examples.first().map_or(0, |e| e.residual.len());
    let mut flat = Vec::with_capacity(examples.len() * width);
    for e in examples {
        if e.residual.len() != width {
            return Err(Error::Dimension("ragged residual features".into()));
        }
        flat.extend(e.residual.iter().copied());
    }
    Array2::from_shape_vec((examples.len(), width), flat).map_err(|e| Error::Dimension(e.to_string()))
}

/// JSON sidecar written next to an exported feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub block: String,
    pub variant: Option<FeatureVariant>,
    pub n_rows: usize,
    pub n_cols: usize,
    /// `trajectory_id, i, j` for each row.
    pub rows: Vec<(String, usize, usize)>,
}

/// Write `<stem>.tcpr` (values as f32) and `<stem>.json`.
pub fn export_features<F: Scalar>(dir: &Path, stem: &str, matrix: &Array2<F>, sidecar: &FeatureSidecar) -> Result<()> {
    let values = matrix.iter().map(|v| v.to_f64_value() as f32).collect();
    tensorfile::write(
        &dir.join(format!("{stem}.tcpr")),
        &Tensor::matrix(stem, matrix.nrows(), matrix.ncols(), values),
    )?;
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(sidecar)?).map_err(|e| Error::io(&path, e))
}
