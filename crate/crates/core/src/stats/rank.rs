use crate::error::{Error, Result};

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via the Mann-Whitney rank sum.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Pearson correlation of midranks; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (s, &y) in scores.iter().zip(labels) {
            if !y {
                continue;
            }
            for (t, &z) in scores.iter().zip(labels) {
                if z {
                    continue;
                }
                den += 1.0;
                num += if s > t { 1.0 } else if s == t { 0.5 } else { 0.0 };
            }
        }
        num / den
    }

    #[test]
    fn basics() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(Error::SingleClass)));
        assert!(auroc(&[f64::NAN, 1.0], &[true, false]).is_err());
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    proptest! {
        #[test]
        fn matches_pair_counting(v in proptest::collection::vec((0u8..6, any::<bool>()), 2..50)) {
            let scores: Vec<f64> = v.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = v.iter().map(|(_, y)| *y).collect();
            let n_pos = labels.iter().filter(|&&y| y).count();
            prop_assume!(n_pos > 0 && n_pos < labels.len());
            let a = auroc(&scores, &labels).unwrap();
            prop_assert!((a - brute(&scores, &labels)).abs() <= 1e-12);
            let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            prop_assert!((auroc(&flipped, &labels).unwrap() - (1.0 - a)).abs() <= 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
            prop_assert_eq!(auroc(&warped, &labels).unwrap(), a);
        }
    }
}
