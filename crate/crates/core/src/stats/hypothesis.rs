use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_factorial;

use super::rank::midranks;

/// Largest sample (after dropping zeros) handled by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub p_two_sided: f64,
    /// Alternative: differences tend to be positive.
    pub p_greater: f64,
    pub p_less: f64,
    pub exact: bool,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Signed-rank test; zeros dropped, midranks for ties.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> WilcoxonResult {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            p_two_sided: 1.0,
            p_greater: 1.0,
            p_less: 1.0,
            exact: true,
            degenerate: true,
        };
    }
    let ranks = midranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = ranks.iter().zip(&nz).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();
    let (p_greater, p_less, exact) = if n <= WILCOXON_EXACT_MAX {
        // Doubled midranks are integers, so subset sums can be counted.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let obs = (2.0 * w_plus).round() as usize;
        let all = 2f64.powi(n as i32);
        let ge: u64 = counts[obs..].iter().sum();
        let le: u64 = counts[..=obs].iter().sum();
        (ge as f64 / all, le as f64 / all, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut k = 0;
        while k < sorted.len() {
            let mut m = k + 1;
            while m < sorted.len() && sorted[m] == sorted[k] {
                m += 1;
            }
            let t = (m - k) as f64;
            tie_term += t * t * t - t;
            k = m;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let sd = var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (
            normal.sf((w_plus - mean - 0.5) / sd),
            normal.cdf((w_plus - mean + 0.5) / sd),
            false,
        )
    };
    WilcoxonResult {
        n,
        w_plus,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        p_greater,
        p_less,
        exact,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohenD {
    pub n: usize,
    pub d: f64,
    /// `sqrt(1/n + d^2 / (2n))`.
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    /// Zero spread or fewer than two differences; `d` is NaN.
    pub undefined: bool,
}

/// Paired standardised mean difference `d_z` with a normal-theory interval.
pub fn cohens_d_paired(diffs: &[f64]) -> CohenD {
    let n = diffs.len();
    let undefined = |n| CohenD {
        n,
        d: f64::NAN,
        se: f64::NAN,
        lo: f64::NAN,
        hi: f64::NAN,
        undefined: true,
    };
    if n < 2 {
        return undefined(n);
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        return undefined(n);
    }
    let d = mean / sd;
    let se = (1.0 / nf + d * d / (2.0 * nf)).sqrt();
    let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.975);
    CohenD {
        n,
        d,
        se,
        lo: d - z * se,
        hi: d + z * se,
        undefined: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub p_value: f64,
    /// A row or column margin was empty.
    pub degenerate: bool,
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`: sum of the
/// probabilities of all tables with the same margins that are no more
/// likely than the observed one.
pub fn fisher_exact_2x2(table: [[u64; 2]; 2]) -> FisherResult {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    if r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return FisherResult {
            p_value: 1.0,
            degenerate: true,
        };
    }
    let lf = |k: u64| ln_factorial(k);
    let log_p = |x: u64| {
        lf(r1) + lf(r2) + lf(c1) + lf(n - c1) - lf(n) - lf(x) - lf(r1 - x) - lf(c1 - x) - lf(r2 + x - c1)
    };
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let obs = log_p(a).exp();
    let p: f64 = (lo..=hi)
        .map(|x| log_p(x).exp())
        .filter(|&px| px <= obs * (1.0 + 1e-7))
        .sum();
    FisherResult {
        p_value: p.min(1.0),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as RNormal};

    #[test]
    fn wilcoxon_exact_small() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]);
        assert_eq!(r.p_greater, 0.125);
        assert!(r.exact);
        let r = wilcoxon_signed_rank(&[1.0, -1.0]);
        assert_eq!(r.p_two_sided, 1.0);
        let r = wilcoxon_signed_rank(&[0.0, 0.0]);
        assert!(r.degenerate);
        assert_eq!(r.p_two_sided, 1.0);
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration() {
        let diffs = [0.5, -1.5, 2.0, 2.0, -0.25, 3.0, 0.0, 1.0];
        let r = wilcoxon_signed_rank(&diffs);
        let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
        let ranks = midranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let mut ge = 0;
        for mask in 0..(1u32 << nz.len()) {
            let w: f64 = (0..nz.len()).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
            if w >= r.w_plus - 1e-9 {
                ge += 1;
            }
        }
        assert_eq!(r.p_greater, ge as f64 / 128.0);
    }

    #[test]
    fn wilcoxon_large_sample_reference() {
        // scipy.stats.wilcoxon(d, correction=True, method="approx", alternative="greater")
        let diffs: Vec<f64> = (1..=20).map(|k| if k % 4 == 0 { -(k as f64) } else { k as f64 }).collect();
        let r = wilcoxon_signed_rank(&diffs);
        assert!(!r.exact);
        assert_eq!(r.w_plus, 150.0);
        assert!((r.p_greater - 0.04832622368253196).abs() < 1e-9, "{}", r.p_greater);
    }

    #[test]
    fn cohen_cases() {
        assert_eq!(cohens_d_paired(&[1.0, -1.0]).d, 0.0);
        assert!(cohens_d_paired(&[1.0, 1.0, 1.0]).undefined);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = RNormal::new(0.5, 1.0).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        assert!((cohens_d_paired(&draws).d - 0.5).abs() < 0.05);
    }

    #[test]
    fn cohen_interval_at_reference_size() {
        // d = 0.06 over 103 pairs: se = sqrt(1/103 + 0.0036/206).
        let se = (1.0f64 / 103.0 + 0.0036 / 206.0).sqrt();
        let z = 1.959963984540054;
        assert!(((0.06 - z * se) - -0.13).abs() < 0.005);
        assert!(((0.06 + z * se) - 0.25).abs() < 0.005);
    }

    #[test]
    fn fisher_cases() {
        assert_eq!(fisher_exact_2x2([[1, 0], [0, 1]]).p_value, 1.0);
        assert_eq!(fisher_exact_2x2([[3, 5], [3, 5]]).p_value, 1.0);
        assert!(fisher_exact_2x2([[0, 0], [2, 3]]).degenerate);
        let p = fisher_exact_2x2([[15, 105], [22, 98]]).p_value;
        assert!((p - 0.27).abs() <= 0.02, "{p}");
        // scipy.stats.fisher_exact
        assert!((p - 0.2834016855243852).abs() < 1e-9);
    }
}
