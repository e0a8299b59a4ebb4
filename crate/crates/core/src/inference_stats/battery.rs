use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::special::{chi2_sf, normal_two_sided_p};
use super::{BootstrapPlan, StatsError};

/// Normal-approximation guard for the proportion test.
pub const DEFAULT_MIN_CLT_N: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltTest {
    pub z: Vec<f64>,
    pub p_raw: Vec<f64>,
    /// Bonferroni-adjusted (×K, capped at 1).
    pub p_adjusted: Vec<f64>,
    pub min_adjusted_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WassersteinTest {
    pub w1: f64,
    pub p: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub chi2: ChiSquared,
    pub clt: CltTest,
    pub wasserstein: WassersteinTest,
    pub alpha: f64,
    /// chi-squared, CLT, Wasserstein, in that order.
    pub rejected: [bool; 3],
    pub biased: bool,
}

fn check_counts(counts: &[u64]) -> Result<u64, StatsError> {
    if counts.len() < 2 {
        return Err(StatsError::TooFewCategories(counts.len()));
    }
    match counts.iter().sum() {
        0 => Err(StatsError::EmptyCounts),
        n => Ok(n),
    }
}

/// Pearson goodness-of-fit against the uniform distribution, K−1 df.
pub fn chi_squared_uniform(counts: &[u64]) -> Result<ChiSquared, StatsError> {
    let n = check_counts(counts)? as f64;
    let k = counts.len();
    let expected = n / k as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let df = k - 1;
    Ok(ChiSquared {
        statistic,
        df,
        p: chi2_sf(statistic, df as f64),
    })
}

/// Per-modality z-test of `p̂_k = 1/K` under the normal approximation.
pub fn clt_proportion_test(counts: &[u64], min_n: u64) -> Result<CltTest, StatsError> {
    let n = check_counts(counts)?;
    if n < min_n {
        return Err(StatsError::SmallSample { n, min: min_n });
    }
    let k = counts.len() as f64;
    let p0 = 1.0 / k;
    let se = (p0 * (1.0 - p0) / n as f64).sqrt();
    let z: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64 - p0) / se).collect();
    let p_raw: Vec<f64> = z.iter().map(|&z| normal_two_sided_p(z)).collect();
    let p_adjusted: Vec<f64> = p_raw.iter().map(|p| (p * k).min(1.0)).collect();
    let min_adjusted_p = p_adjusted.iter().copied().fold(1.0, f64::min);
    Ok(CltTest {
        z,
        p_raw,
        p_adjusted,
        min_adjusted_p,
    })
}

// Σ|K·c_k − n|, an integer multiple of W1: W1 = D / (2·K·n).
fn scaled_tv(counts: &[u64], n: u64) -> u64 {
    let k = counts.len() as u64;
    counts.iter().map(|&c| (k * c).abs_diff(n)).sum()
}

/// `½·Σ|p̂_k − 1/K|`: the 1-Wasserstein distance to uniform under the 0/1
/// ground metric, which equals total-variation distance.
pub fn w1_uniform(counts: &[u64]) -> Result<f64, StatsError> {
    let n = check_counts(counts)?;
    let k = counts.len() as u64;
    Ok(scaled_tv(counts, n) as f64 / (2 * k * n) as f64)
}

/// W1 to uniform with a resampling null: `plan.iterations` multinomial
/// draws of size n from the uniform distribution; p is the share of draws at
/// least as far from uniform as the observed counts.
pub fn wasserstein_uniform_test(counts: &[u64], plan: &BootstrapPlan) -> Result<WassersteinTest, StatsError> {
    plan.validate()?;
    let n = check_counts(counts)?;
    let k = counts.len();
    let observed = scaled_tv(counts, n);
    let exceed = (0..plan.iterations)
        .into_par_iter()
        .filter(|&it| {
            let mut rng = plan.rng(it);
            let mut null = vec![0u64; k];
            for _ in 0..n {
                null[rng.random_range(0..k)] += 1;
            }
            scaled_tv(&null, n) >= observed
        })
        .count();
    Ok(WassersteinTest {
        w1: w1_uniform(counts)?,
        p: exceed as f64 / plan.iterations as f64,
        iterations: plan.iterations,
    })
}

/// Biased iff at least two of the three tests reject at `alpha`.
pub fn combined_decision(
    chi2: ChiSquared,
    clt: CltTest,
    wasserstein: WassersteinTest,
    alpha: f64,
) -> TestReport {
    let rejected = [
        chi2.p < alpha,
        clt.min_adjusted_p < alpha,
        wasserstein.p < alpha,
    ];
    let biased = rejected.iter().filter(|&&r| r).count() >= 2;
    TestReport {
        chi2,
        clt,
        wasserstein,
        alpha,
        rejected,
        biased,
    }
}

/// All three tests on the prediction counts of one slice.
pub fn run_battery(counts: &[u64], plan: &BootstrapPlan, alpha: f64, min_clt_n: u64) -> Result<TestReport, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidPlan(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(combined_decision(
        chi_squared_uniform(counts)?,
        clt_proportion_test(counts, min_clt_n)?,
        wasserstein_uniform_test(counts, plan)?,
        alpha,
    ))
}
