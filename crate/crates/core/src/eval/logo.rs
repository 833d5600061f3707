use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{FeatureSpec, PairDataset};
use crate::error::{Error, Result};
use crate::probe::{fit_logistic_with, Preconditioner, ProbeConfig, Standardizer};
use crate::scalar::Scalar;
use crate::stats::auroc;

/// Out-of-fold decision values of one feature family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogoScores {
    pub family: String,
    /// One entry per dataset row; `None` only for rows of skipped folds.
    pub scores: Vec<Option<f64>>,
    pub n_folds: usize,
    /// Held-out groups whose training folds had a single class.
    pub skipped_groups: Vec<String>,
    pub nonconverged_fits: usize,
}

impl LogoScores {
    /// AUROC over the concatenated out-of-fold scores of scored rows.
    pub fn auroc(&self, labels: &[bool]) -> Option<f64> {
        let (s, y): (Vec<f64>, Vec<bool>) = self
            .scores
            .iter()
            .zip(labels)
            .filter_map(|(s, &y)| s.map(|s| (s, y)))
            .unzip();
        auroc(&s, &y).ok()
    }

    /// Scored rows bucketed by group, in sorted group order.
    pub fn by_group<F: Scalar>(&self, ds: &PairDataset<F>, labels: &[bool]) -> Vec<(String, Vec<bool>, Vec<f64>)> {
        let mut map: BTreeMap<&str, (Vec<bool>, Vec<f64>)> = BTreeMap::new();
        for ((m, s), &y) in ds.meta.iter().zip(&self.scores).zip(labels) {
            if let Some(s) = s {
                let e = map.entry(m.group.as_str()).or_default();
                e.0.push(y);
                e.1.push(*s);
            }
        }
        map.into_iter().map(|(g, (y, s))| (g.to_string(), y, s)).collect()
    }
}

struct FoldOut {
    test_rows: Vec<usize>,
    scores: Option<Vec<f64>>,
    aux: Option<(Vec<usize>, Vec<f64>)>,
    converged: bool,
}

/// Rows of a second dataset scored by the fold that holds out their group.
struct Aux<'a, F: Scalar> {
    ds: &'a PairDataset<F>,
    rows_by_group: Vec<Vec<usize>>,
}

fn run_logo<F: Scalar>(
    ds: &PairDataset<F>,
    train_spec: &FeatureSpec,
    eval_spec: &FeatureSpec,
    labels: &[bool],
    cfg: &ProbeConfig,
    aux: Option<&Aux<F>>,
) -> Result<(LogoScores, Vec<FoldOut>)> {
    if labels.len() != ds.len() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), ds.len())));
    }
    train_spec.validate(ds)?;
    eval_spec.validate(ds)?;
    if train_spec.scaffold != eval_spec.scaffold || train_spec.fixed_width(ds)? != eval_spec.fixed_width(ds)? {
        return Err(Error::Dimension(format!(
            "families {train_spec} and {eval_spec} have different layouts"
        )));
    }
    let (names, group_of) = ds.groups();
    if names.len() < 2 {
        return Err(Error::Invalid(format!("LOGO needs at least 2 groups, got {}", names.len())));
    }
    let mut rows_by_group = vec![Vec::new(); names.len()];
    for (r, &g) in group_of.iter().enumerate() {
        rows_by_group[g].push(r);
    }

    // Every fold starts from the full-data optimum, carried over as a raw
    // decision function; only the iteration count depends on the start.
    // The full-data curvature bound preconditions every fold.
    let (raw_init, precond): (Option<(Vec<F>, F)>, Option<Preconditioner>) = if train_spec.scaffold {
        (None, None)
    } else {
        let all: Vec<usize> = (0..ds.len()).collect();
        let x = train_spec.design(ds, &all, None)?;
        let std = Standardizer::fit(x.view())?;
        let xs = std.transform(x.view())?;
        let precond = Preconditioner::bohning(xs.view(), labels, cfg)?;
        let model = fit_logistic_with(xs.view(), labels, cfg, None, Some(&precond))?;
        let w: Vec<F> = model.weights.iter().zip(&std.scales).map(|(&w, &s)| w / s).collect();
        let b = model.bias - w.iter().zip(&std.means).fold(F::zero(), |acc, (&w, &m)| acc + w * m);
        (Some((w, b)), Some(precond))
    };
    let fold_init = |std: &Standardizer<F>| -> Option<Vec<F>> {
        let (w, b) = raw_init.as_ref()?;
        let mut theta: Vec<F> = w.iter().zip(&std.scales).map(|(&w, &s)| w * s).collect();
        theta.push(*b + w.iter().zip(&std.means).fold(F::zero(), |acc, (&w, &m)| acc + w * m));
        Some(theta)
    };

    let folds: Vec<FoldOut> = (0..names.len())
        .into_par_iter()
        .map(|g| -> Result<FoldOut> {
            let test_rows = rows_by_group[g].clone();
            let train: Vec<usize> = (0..ds.len()).filter(|&r| group_of[r] != g).collect();
            assert!(
                train.iter().all(|&r| ds.meta[r].group != names[g]),
                "group {} leaked into its own training fold",
                names[g]
            );
            let y: Vec<bool> = train.iter().map(|&r| labels[r]).collect();
            if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
                return Ok(FoldOut {
                    test_rows,
                    scores: None,
                    aux: None,
                    converged: true,
                });
            }
            let vocab = train_spec.fit_vocab(ds, &train);
            let x = train_spec.design(ds, &train, vocab.as_ref())?;
            let std = Standardizer::fit(x.view())?;
            let model = fit_logistic_with(
                std.transform(x.view())?.view(),
                &y,
                cfg,
                fold_init(&std).as_deref(),
                precond.as_ref(),
            )?;
            let score = |data: &PairDataset<F>, rows: &[usize]| -> Result<Vec<f64>> {
                let xt = eval_spec.design(data, rows, vocab.as_ref())?;
                Ok(model
                    .decision(std.transform(xt.view())?.view())?
                    .into_iter()
                    .map(Scalar::to_f64_value)
                    .collect())
            };
            let scores = score(ds, &test_rows)?;
            let aux_out = match aux {
                Some(a) if !a.rows_by_group[g].is_empty() => {
                    Some((a.rows_by_group[g].clone(), score(a.ds, &a.rows_by_group[g])?))
                }
                _ => None,
            };
            Ok(FoldOut {
                test_rows,
                scores: Some(scores),
                aux: aux_out,
                converged: model.converged,
            })
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![None; ds.len()];
    let mut skipped = Vec::new();
    for (g, f) in folds.iter().enumerate() {
        match &f.scores {
            Some(s) => {
                for (&r, &v) in f.test_rows.iter().zip(s) {
                    assert!(scores[r].is_none(), "row {r} scored twice");
                    scores[r] = Some(v);
                }
            }
            None => skipped.push(names[g].clone()),
        }
    }
    let out = LogoScores {
        family: eval_spec.name(),
        scores,
        n_folds: names.len(),
        skipped_groups: skipped,
        nonconverged_fits: folds.iter().filter(|f| !f.converged).count(),
    };
    Ok((out, folds))
}

/// Leave-one-group-out: per fold, fit standardiser and probe on the other
/// groups and score the held-out group.
pub fn logo_cv<F: Scalar>(ds: &PairDataset<F>, spec: &FeatureSpec, labels: &[bool], cfg: &ProbeConfig) -> Result<LogoScores> {
    Ok(run_logo(ds, spec, spec, labels, cfg, None)?.0)
}

/// LOGO where each fold's probe, trained on `train_spec`, scores held-out
/// rows built from `eval_spec` (same layout, e.g. direction-reversed).
pub fn logo_transfer<F: Scalar>(
    ds: &PairDataset<F>,
    train_spec: &FeatureSpec,
    eval_spec: &FeatureSpec,
    labels: &[bool],
    cfg: &ProbeConfig,
) -> Result<LogoScores> {
    Ok(run_logo(ds, train_spec, eval_spec, labels, cfg, None)?.0)
}

/// LOGO on `ds` that also scores every row of `aux` with the fold model
/// holding out the row's group. Rows whose group is absent from `ds` stay
/// unscored.
pub fn logo_with_aux<F: Scalar>(
    ds: &PairDataset<F>,
    spec: &FeatureSpec,
    labels: &[bool],
    cfg: &ProbeConfig,
    aux: &PairDataset<F>,
) -> Result<(LogoScores, Vec<Option<f64>>)> {
    spec.validate(aux)?;
    let (names, _) = ds.groups();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(k, g)| (g.as_str(), k)).collect();
    let mut rows_by_group = vec![Vec::new(); names.len()];
    for (r, m) in aux.meta.iter().enumerate() {
        if let Some(&g) = index.get(m.group.as_str()) {
            rows_by_group[g].push(r);
        }
    }
    let a = Aux { ds: aux, rows_by_group };
    let (out, folds) = run_logo(ds, spec, spec, labels, cfg, Some(&a))?;
    let mut aux_scores = vec![None; aux.len()];
    for f in folds {
        if let Some((rows, s)) = f.aux {
            for (r, v) in rows.into_iter().zip(s) {
                aux_scores[r] = Some(v);
            }
        }
    }
    Ok((out, aux_scores))
}
