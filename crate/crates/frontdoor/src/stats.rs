//! Pre-registered statistical machinery.
//!
//! Exact McNemar for paired accuracy, Holm-Bonferroni multiplicity control,
//! seeded bootstrap percentile intervals for quantiles, Welch's t for
//! latency and cost means, and an O'Brien-Fleming two-look group-sequential
//! plan via the Lan-DeMets spending function.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::metrics::nearest_rank;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("paired test requires identical case sets ({left} vs {right} cases)")]
    CaseSetMismatch { left: usize, right: usize },
    #[error("not enough data: {0}")]
    NotEnoughData(&'static str),
    #[error("both samples have zero variance")]
    DegenerateVariance,
}

// ---------------------------------------------------------------------------
// Exact McNemar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Cases the first arm got right and the second wrong.
    pub b: usize,
    /// Cases the second arm got right and the first wrong.
    pub c: usize,
    pub p_value: f64,
}

/// Exact two-sided McNemar test on the discordant counts: twice the smaller
/// binomial(b + c, 1/2) tail, capped at 1. No discordant pairs gives p = 1.
///
/// The tail is summed directly from the coefficient recurrence rather than
/// going through a continuous incomplete-beta approximation, so small cases
/// (e.g. b = 0, c = 10) come out bit-exact.
pub fn mcnemar_exact(b: usize, c: usize) -> McNemarResult {
    let n = b + c;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = b.min(c);
        let mut coeff = 1.0f64;
        let mut sum = 1.0f64;
        for i in 1..=k {
            coeff = coeff * (n - i + 1) as f64 / i as f64;
            sum += coeff;
        }
        (2.0 * sum * 0.5f64.powi(n as i32)).min(1.0)
    };
    McNemarResult { b, c, p_value }
}

/// Discordant counts between two arms' per-case correctness maps. The maps
/// must cover exactly the same cases.
pub fn paired_discordants(
    left: &BTreeMap<String, bool>,
    right: &BTreeMap<String, bool>,
) -> Result<(usize, usize), StatsError> {
    if left.len() != right.len() || left.keys().ne(right.keys()) {
        return Err(StatsError::CaseSetMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    let mut b = 0;
    let mut c = 0;
    for (case_id, &l) in left {
        let r = right[case_id];
        match (l, r) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

// ---------------------------------------------------------------------------
// Holm-Bonferroni
// ---------------------------------------------------------------------------

/// Holm-Bonferroni step-down at level `alpha`. Returns one rejection flag
/// per input p-value, in the original order. Ties sort by original index.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .partial_cmp(&p_values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut reject = vec![false; m];
    for (rank, &idx) in order.iter().enumerate() {
        let threshold = alpha / (m - rank) as f64;
        if p_values[idx] <= threshold {
            reject[idx] = true;
        } else {
            break; // step-down: first failure stops all later rejections
        }
    }
    reject
}

// ---------------------------------------------------------------------------
// Bootstrap percentile CI for a nearest-rank quantile
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
}

/// Seeded bootstrap percentile interval for the nearest-rank `q` quantile.
///
/// Resamples with replacement `n_resamples` times, computes the quantile of
/// each resample, and takes the nearest-rank `alpha/2` and `1 - alpha/2`
/// percentiles of those statistics. Fully deterministic given `seed`.
pub fn bootstrap_quantile_ci(
    values: &[f64],
    q: f64,
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<ConfidenceInterval, StatsError> {
    if values.is_empty() {
        return Err(StatsError::NotEnoughData("empty sample"));
    }
    if n_resamples == 0 {
        return Err(StatsError::NotEnoughData("zero resamples"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_resamples);
    let mut resample = vec![0.0; values.len()];
    for _ in 0..n_resamples {
        for slot in resample.iter_mut() {
            *slot = values[rng.gen_range(0..values.len())];
        }
        resample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        stats.push(nearest_rank(&resample, q));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ConfidenceInterval {
        lo: nearest_rank(&stats, alpha / 2.0),
        hi: nearest_rank(&stats, 1.0 - alpha / 2.0),
    })
}

/// Seeded bootstrap percentile interval for the sample mean.
pub fn bootstrap_mean_ci(
    values: &[f64],
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<ConfidenceInterval, StatsError> {
    if values.is_empty() {
        return Err(StatsError::NotEnoughData("empty sample"));
    }
    if n_resamples == 0 {
        return Err(StatsError::NotEnoughData("zero resamples"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = values.len();
    let mut stats: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ConfidenceInterval {
        lo: nearest_rank(&stats, alpha / 2.0),
        hi: nearest_rank(&stats, 1.0 - alpha / 2.0),
    })
}

// ---------------------------------------------------------------------------
// Welch's t
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_and_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test, two-sided, with Welch-Satterthwaite
/// degrees of freedom. Both samples need at least two observations; if both
/// sample variances are exactly zero the statistic is undefined and the
/// caller must handle the degenerate comparison explicitly.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::NotEnoughData("need >= 2 observations per arm"));
    }
    let (mean_a, var_a) = mean_and_var(a);
    let (mean_b, var_b) = mean_and_var(b);
    if var_a == 0.0 && var_b == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let sa = var_a / a.len() as f64;
    let sb = var_b / b.len() as f64;
    let t = (mean_a - mean_b) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2)
        / (sa.powi(2) / (a.len() as f64 - 1.0) + sb.powi(2) / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p_value = 2.0 * dist.cdf(-t.abs());
    Ok(WelchResult { t, df, p_value })
}

// ---------------------------------------------------------------------------
// O'Brien-Fleming two-look group-sequential boundaries
// ---------------------------------------------------------------------------

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Lan-DeMets O'Brien-Fleming spending function: cumulative two-sided type I
/// error spent at information fraction `t`.
pub fn obf_spent_alpha(t: f64, alpha: f64) -> f64 {
    assert!(t > 0.0 && t <= 1.0, "information fraction must be in (0, 1]");
    let n = std_normal();
    let z_half = n.inverse_cdf(1.0 - alpha / 2.0);
    2.0 * (1.0 - n.cdf(z_half / t.sqrt()))
}

/// Interim two-sided z boundary at information fraction `t`.
pub fn obf_interim_boundary(t: f64, alpha: f64) -> f64 {
    std_normal().inverse_cdf(1.0 - obf_spent_alpha(t, alpha) / 2.0)
}

/// P(|Z1| < z1, |Z2| < z2) for standard bivariate normal with correlation
/// `rho`, by Simpson quadrature over the conditional decomposition.
fn bivariate_box(z1: f64, z2: f64, rho: f64) -> f64 {
    let n = std_normal();
    let s = (1.0 - rho * rho).sqrt();
    let inner = |x: f64| {
        let p = n.cdf((z2 - rho * x) / s) - n.cdf((-z2 - rho * x) / s);
        n.pdf(x) * p
    };
    // Simpson on [-z1, z1] with an even number of panels.
    let panels = 2000;
    let h = 2.0 * z1 / panels as f64;
    let mut acc = inner(-z1) + inner(z1);
    for i in 1..panels {
        let x = -z1 + i as f64 * h;
        acc += inner(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLookPlan {
    pub info_fraction: f64,
    pub alpha: f64,
    pub spent_interim: f64,
    pub interim_z: f64,
    pub final_z: f64,
}

/// Two-look O'Brien-Fleming plan: interim analysis at information fraction
/// `t`, final analysis at 1. The final boundary solves
/// P(|Z1| < z1, |Z2| >= z2) = alpha - alpha_spent(t) under the canonical
/// joint distribution (corr(Z1, Z2) = sqrt(t)), found by bisection.
pub fn two_look_plan(t: f64, alpha: f64) -> TwoLookPlan {
    let spent_interim = obf_spent_alpha(t, alpha);
    let interim_z = obf_interim_boundary(t, alpha);
    let rho = t.sqrt();
    let remaining = alpha - spent_interim;
    let n = std_normal();
    // P(|Z1| < z1, |Z2| >= z2) = P(|Z1| < z1) - box(z1, z2).
    let p_inside_z1 = 2.0 * n.cdf(interim_z) - 1.0;
    let excess = |z2: f64| p_inside_z1 - bivariate_box(interim_z, z2, rho) - remaining;
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    TwoLookPlan {
        info_fraction: t,
        alpha,
        spent_interim,
        interim_z,
        final_z: 0.5 * (lo + hi),
    }
}

/// Converts a two-sided p-value to an absolute z statistic for boundary
/// comparison.
pub fn p_to_abs_z(p: f64) -> f64 {
    let p = p.clamp(f64::MIN_POSITIVE, 1.0);
    std_normal().inverse_cdf(1.0 - p / 2.0).max(0.0)
}
