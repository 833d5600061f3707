use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::rank::auroc;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    Bca,
    PercentilePaired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_resamples: usize,
    /// Resamples on which the statistic was undefined and was skipped.
    pub n_skipped: usize,
    pub method: BootstrapMethod,
    pub resample_unit: String,
    /// All resampled values were identical.
    pub degenerate: bool,
    /// Paired deltas only: fraction of resampled deltas at or below zero.
    pub p_delta_le_zero: Option<f64>,
    #[serde(skip)]
    pub resamples: Vec<f64>,
}

pub const CONFIDENCE: f64 = 0.95;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Random generator of resample `b`: one ChaCha stream per resample so the
/// draw does not depend on scheduling.
pub(crate) fn resample_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

fn draw<'a, G>(groups: &'a [G], rng: &mut ChaCha8Rng) -> Vec<&'a G> {
    (0..groups.len()).map(|_| &groups[rng.random_range(0..groups.len())]).collect()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample_values<G, S>(groups: &[G], statistic: &S, n_resamples: usize, seed: u64) -> (Vec<f64>, usize)
where
    G: Sync,
    S: Fn(&[&G]) -> Option<f64> + Sync,
{
    let raw: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|b| statistic(&draw(groups, &mut resample_rng(seed, b))))
        .collect();
    let skipped = raw.iter().filter(|v| v.is_none()).count();
    (raw.into_iter().flatten().collect(), skipped)
}

/// Bias-corrected and accelerated percentile interval, resampling whole
/// groups; acceleration comes from the leave-one-group-out jackknife.
pub fn bca_ci<G, S>(groups: &[G], statistic: S, n_resamples: usize, seed: u64, unit: &str) -> Result<BootstrapResult>
where
    G: Sync,
    S: Fn(&[&G]) -> Option<f64> + Sync,
{
    if groups.len() < 2 {
        return Err(Error::Invalid(format!("bootstrap needs at least 2 groups, got {}", groups.len())));
    }
    if n_resamples == 0 {
        return Err(Error::Invalid("n_resamples must be positive".into()));
    }
    let all: Vec<&G> = groups.iter().collect();
    let point = statistic(&all).ok_or_else(|| Error::Undefined("statistic undefined on full sample".into()))?;
    let (mut values, n_skipped) = resample_values(groups, &statistic, n_resamples, seed);
    if values.is_empty() {
        return Err(Error::Undefined("statistic undefined on every resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let mut out = BootstrapResult {
        point,
        lo: point,
        hi: point,
        n_resamples,
        n_skipped,
        method: BootstrapMethod::Bca,
        resample_unit: unit.to_string(),
        degenerate: false,
        p_delta_le_zero: None,
        resamples: Vec::new(),
    };
    if values[0] == values[values.len() - 1] {
        out.degenerate = true;
        out.resamples = values;
        return Ok(out);
    }

    let b = values.len() as f64;
    let less = values.iter().filter(|&&v| v < point).count() as f64;
    let equal = values.iter().filter(|&&v| v == point).count() as f64;
    let prop = ((less + 0.5 * equal) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let normal = std_normal();
    let z0 = normal.inverse_cdf(prop);

    let jack: Vec<f64> = (0..groups.len())
        .into_par_iter()
        .filter_map(|k| {
            let rest: Vec<&G> = groups.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, g)| g).collect();
            statistic(&rest)
        })
        .collect();
    let accel = if jack.len() < 2 {
        0.0
    } else {
        let mean = jack.iter().sum::<f64>() / jack.len() as f64;
        let s2: f64 = jack.iter().map(|t| (mean - t).powi(2)).sum();
        let s3: f64 = jack.iter().map(|t| (mean - t).powi(3)).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s3 / (6.0 * s2.powf(1.5))
        }
    };

    let alpha = (1.0 - CONFIDENCE) / 2.0;
    let adjust = |q: f64| {
        let z = normal.inverse_cdf(q);
        normal.cdf(z0 + (z0 + z) / (1.0 - accel * (z0 + z)))
    };
    out.lo = quantile_sorted(&values, adjust(alpha));
    out.hi = quantile_sorted(&values, adjust(1.0 - alpha));
    out.resamples = values;
    Ok(out)
}

/// Plain percentile interval of the resampled values.
pub fn percentile_ci<G, S>(groups: &[G], statistic: S, n_resamples: usize, seed: u64) -> Result<(f64, f64)>
where
    G: Sync,
    S: Fn(&[&G]) -> Option<f64> + Sync,
{
    let (mut values, _) = resample_values(groups, &statistic, n_resamples, seed);
    if values.is_empty() {
        return Err(Error::Undefined("statistic undefined on every resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - CONFIDENCE) / 2.0;
    Ok((quantile_sorted(&values, alpha), quantile_sorted(&values, 1.0 - alpha)))
}

/// Resample groups jointly and record `metric_a - metric_b`.
pub fn paired_bootstrap_delta<G, A, B>(
    groups: &[G],
    metric_a: A,
    metric_b: B,
    n_resamples: usize,
    seed: u64,
    unit: &str,
) -> Result<BootstrapResult>
where
    G: Sync,
    A: Fn(&[&G]) -> Option<f64> + Sync,
    B: Fn(&[&G]) -> Option<f64> + Sync,
{
    if groups.len() < 2 {
        return Err(Error::Invalid(format!("bootstrap needs at least 2 groups, got {}", groups.len())));
    }
    let delta = |gs: &[&G]| Some(metric_a(gs)? - metric_b(gs)?);
    let all: Vec<&G> = groups.iter().collect();
    let point = delta(&all).ok_or_else(|| Error::Undefined("metric undefined on full sample".into()))?;
    let (mut values, n_skipped) = resample_values(groups, &delta, n_resamples, seed);
    if values.is_empty() {
        return Err(Error::Undefined("metric undefined on every resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - CONFIDENCE) / 2.0;
    let le_zero = values.iter().filter(|&&v| v <= 0.0).count() as f64 / values.len() as f64;
    Ok(BootstrapResult {
        point,
        lo: quantile_sorted(&values, alpha),
        hi: quantile_sorted(&values, 1.0 - alpha),
        n_resamples,
        n_skipped,
        method: BootstrapMethod::PercentilePaired,
        resample_unit: unit.to_string(),
        degenerate: values[0] == values[values.len() - 1],
        p_delta_le_zero: Some(le_zero),
        resamples: values,
    })
}

/// Out-of-fold predictions of one group under two systems.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub group: String,
    pub labels: Vec<bool>,
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
}

/// Pooled AUROC over a resample of groups; `None` if one class is missing.
pub fn pooled_auroc<'a>(groups: &[&'a GroupScores], pick: impl Fn(&'a GroupScores) -> &'a [f64]) -> Option<f64> {
    let mut s = Vec::new();
    let mut y = Vec::new();
    for g in groups {
        s.extend_from_slice(pick(g));
        y.extend_from_slice(&g.labels);
    }
    auroc(&s, &y).ok()
}

/// Zip per-group predictions of two systems, checking they cover the same
/// groups and labels.
pub fn pair_groups(
    a: &[(String, Vec<bool>, Vec<f64>)],
    b: &[(String, Vec<bool>, Vec<f64>)],
) -> Result<Vec<GroupScores>> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("{} groups vs {}", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|((ga, la, sa), (gb, lb, sb))| {
            if ga != gb || la != lb || sa.len() != la.len() || sb.len() != lb.len() {
                return Err(Error::Invalid(format!("group mismatch: `{ga}` vs `{gb}`")));
            }
            Ok(GroupScores {
                group: ga.clone(),
                labels: la.clone(),
                scores_a: sa.clone(),
                scores_b: sb.clone(),
            })
        })
        .collect()
}

/// Paired AUROC difference `A - B` with group resampling.
pub fn paired_auroc_delta(groups: &[GroupScores], n_resamples: usize, seed: u64, unit: &str) -> Result<BootstrapResult> {
    paired_bootstrap_delta(
        groups,
        |g| pooled_auroc(g, |x| &x.scores_a),
        |g| pooled_auroc(g, |x| &x.scores_b),
        n_resamples,
        seed,
        unit,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn mean(gs: &[&f64]) -> Option<f64> {
        Some(gs.iter().copied().sum::<f64>() / gs.len() as f64)
    }

    #[test]
    fn constant_groups_collapse() {
        let r = bca_ci(&[2.5; 10], mean, 500, 1, "trajectory").unwrap();
        assert!(r.degenerate);
        assert_eq!((r.lo, r.point, r.hi), (2.5, 2.5, 2.5));
    }

    #[test]
    fn too_few_groups() {
        assert!(bca_ci(&[1.0], mean, 10, 1, "t").is_err());
    }

    #[test]
    fn symmetric_bca_close_to_percentile() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Symmetric around 0 by construction.
        let half: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
        let data: Vec<f64> = half.iter().copied().chain(half.iter().map(|v| -v)).collect();
        let r = bca_ci(&data, mean, 2000, 5, "t").unwrap();
        let (plo, phi) = percentile_ci(&data, mean, 2000, 5).unwrap();
        assert!((r.lo - plo).abs() < 0.03, "{} vs {plo}", r.lo);
        assert!((r.hi - phi).abs() < 0.03, "{} vs {phi}", r.hi);
        assert!(r.lo <= r.point && r.point <= r.hi);
    }

    #[test]
    fn deterministic_under_any_pool() {
        let data: Vec<f64> = (0..30).map(|k| (k as f64 * 1.7).sin()).collect();
        let a = bca_ci(&data, mean, 400, 9, "t").unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| bca_ci(&data, mean, 400, 9, "t").unwrap());
        assert_eq!(a, b);
    }

    fn groups(dominant: bool) -> Vec<GroupScores> {
        (0..12)
            .map(|g| {
                let labels = vec![true, false, true, false];
                let good = vec![0.9, 0.1, 0.8, 0.2];
                let bad = vec![0.4, 0.6, 0.5 + 0.01 * g as f64, 0.3];
                GroupScores {
                    group: format!("g{g}"),
                    labels,
                    scores_a: good.clone(),
                    scores_b: if dominant { bad } else { good },
                }
            })
            .collect()
    }

    #[test]
    fn paired_delta_cases() {
        let same = paired_auroc_delta(&groups(false), 300, 1, "t").unwrap();
        assert_eq!(same.point, 0.0);
        assert!(same.degenerate);
        assert_eq!(same.p_delta_le_zero, Some(1.0));

        let gs = groups(true);
        let dom = paired_auroc_delta(&gs, 300, 1, "t").unwrap();
        assert_eq!(dom.p_delta_le_zero, Some(0.0));
        let all: Vec<&GroupScores> = gs.iter().collect();
        let direct = pooled_auroc(&all, |x| &x.scores_a).unwrap() - pooled_auroc(&all, |x| &x.scores_b).unwrap();
        assert_eq!(dom.point, direct);
    }

    #[test]
    fn group_mismatch() {
        let a = vec![("x".to_string(), vec![true], vec![0.1])];
        let b = vec![("y".to_string(), vec![true], vec![0.1])];
        assert!(pair_groups(&a, &b).is_err());
        assert!(pair_groups(&a, &a).is_ok());
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.0), 1.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 1.0), 2.0);
    }
}
