//! Standardisation and the L2 logistic edge probe.

mod logistic;
mod standardize;

use std::fs;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use logistic::{
    fit_logistic, fit_logistic_from, fit_logistic_with, ClassWeight, Objective, Preconditioner, ProbeConfig, ProbeModel,
};
pub use standardize::Standardizer;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorfile::{self, Tensor};

/// Standardiser and classifier fitted together on one training fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedProbe<F: Scalar> {
    pub standardizer: Standardizer<F>,
    pub model: ProbeModel<F>,
}

impl<F: Scalar> FittedProbe<F> {
    pub fn fit(x: ArrayView2<F>, labels: &[bool], cfg: &ProbeConfig) -> Result<Self> {
        let standardizer = Standardizer::fit(x)?;
        let z = standardizer.transform(x)?;
        let model = fit_logistic(z.view(), labels, cfg)?;
        Ok(FittedProbe { standardizer, model })
    }

    pub fn width(&self) -> usize {
        self.model.width()
    }

    /// Decision values `w . z + b` on standardised rows.
    pub fn scores(&self, x: ArrayView2<F>) -> Result<Vec<F>> {
        let z = self.standardizer.transform(x)?;
        self.model.decision(z.view())
    }

    pub fn score_row(&self, row: ArrayView1<F>) -> Result<F> {
        let z = self.standardizer.transform_row(row)?;
        Ok(z.dot(&self.model.weights) + self.model.bias)
    }
}

/// Edge probabilities: logistic link of the decision values.
pub fn predict_scores<F: Scalar>(model: &ProbeModel<F>, std: &Standardizer<F>, x: ArrayView2<F>) -> Result<Vec<F>> {
    if std.width() != model.width() {
        return Err(Error::Dimension(format!(
            "standardizer width {} vs probe width {}",
            std.width(),
            model.width()
        )));
    }
    Ok(model
        .decision(std.transform(x)?.view())?
        .into_iter()
        .map(logistic::sigmoid)
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeHeader {
    n_features: usize,
    c: f64,
    class_weights: [f64; 2],
    bias: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    feature_blocks: Vec<String>,
    weights_file: String,
}

/// Write `<stem>.json` plus `<stem>.tcpr` holding weights, means and scales
/// as a 3-row matrix. Values are stored as f32.
pub fn save_probe<F: Scalar>(dir: &Path, stem: &str, probe: &FittedProbe<F>, feature_blocks: &[String]) -> Result<()> {
    let d = probe.width();
    let weights_file = format!("{stem}.tcpr");
    let mut values = Vec::with_capacity(3 * d);
    for row in [&probe.model.weights, &probe.standardizer.means, &probe.standardizer.scales] {
        values.extend(row.iter().map(|v| v.to_f64_value() as f32));
    }
    tensorfile::write(&dir.join(&weights_file), &Tensor::matrix(stem, 3, d, values))?;
    let header = ProbeHeader {
        n_features: d,
        c: probe.model.c,
        class_weights: probe.model.class_weights,
        bias: probe.model.bias.to_f64_value(),
        converged: probe.model.converged,
        iterations: probe.model.iterations,
        grad_norm: probe.model.grad_norm,
        feature_blocks: feature_blocks.to_vec(),
        weights_file,
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&path, e))
}

/// Inverse of [`save_probe`]; returns the probe and its feature block names.
pub fn load_probe<F: Scalar>(dir: &Path, stem: &str) -> Result<(FittedProbe<F>, Vec<String>)> {
    let path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let h: ProbeHeader = serde_json::from_str(&text)?;
    let t = tensorfile::read(&dir.join(&h.weights_file))?;
    if t.n_boundaries != 3 || t.hidden_dim != h.n_features || t.n_layers() != 1 {
        return Err(Error::Dimension(format!(
            "probe payload {}x{} does not match header width {}",
            t.n_boundaries, t.hidden_dim, h.n_features
        )));
    }
    let d = h.n_features;
    let row = |k: usize| -> Array1<F> { t.values[k * d..(k + 1) * d].iter().map(|&v| F::from_f32_value(v)).collect() };
    Ok((
        FittedProbe {
            standardizer: Standardizer {
                means: row(1),
                scales: row(2),
            },
            model: ProbeModel {
                weights: row(0),
                bias: F::lit(h.bias),
                c: h.c,
                class_weights: h.class_weights,
                converged: h.converged,
                iterations: h.iterations,
                grad_norm: h.grad_norm,
            },
        },
        h.feature_blocks,
    ))
}
