//! Exact Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped; tied absolute differences share their
//! average rank. The null distribution of the positive rank sum is counted
//! exactly over all 2^n sign assignments. Average ranks are multiples of
//! one half, so the counting runs on doubled ranks, which are integers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of non-zero differences the exact counter accepts
/// (2^n must fit in a u128).
pub const MAX_EXACT_N: usize = 127;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("all differences are zero; the test is undefined")]
    AllZero,
    #[error("no pairs given")]
    Empty,
    #[error("{0} non-zero differences exceed the exact limit of {MAX_EXACT_N}")]
    TooLarge(usize),
    #[error("non-finite value in pair {0}")]
    NonFinite(usize),
}

/// Direction of the alternative hypothesis on the differences `a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `a` tends to be smaller than `b`.
    Less,
    Greater,
    TwoSided,
}

impl FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            other => Err(format!("unknown alternative `{other}`")),
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::Less => "less",
            Alternative::Greater => "greater",
            Alternative::TwoSided => "two_sided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Number of non-zero differences.
    pub n: usize,
    /// Sum of ranks of positive differences (the reported statistic).
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Paired test on `(a, b)`; the alternative refers to `a - b`.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)], alternative: Alternative) -> Result<WilcoxonResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut diffs = Vec::with_capacity(pairs.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let d = a - b;
        if !d.is_finite() {
            return Err(StatsError::NonFinite(i));
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::AllZero);
    }
    if n > MAX_EXACT_N {
        return Err(StatsError::TooLarge(n));
    }

    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let doubled: Vec<usize> = average_ranks(&abs)
        .into_iter()
        .map(|r| (r * 2.0).round() as usize)
        .collect();
    let observed: usize = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total: usize = doubled.iter().sum();

    let counts = rank_sum_counts(&doubled);
    let patterns = (1u128 << n) as f64;
    let at_most: u128 = counts[..=observed].iter().sum();
    let at_least: u128 = counts[observed..].iter().sum();
    let p_less = at_most as f64 / patterns;
    let p_greater = at_least as f64 / patterns;
    let p_value = match alternative {
        Alternative::Less => p_less,
        Alternative::Greater => p_greater,
        Alternative::TwoSided => (2.0 * p_less.min(p_greater)).min(1.0),
    };
    Ok(WilcoxonResult {
        n,
        w_plus: observed as f64 / 2.0,
        w_minus: (total - observed) as f64 / 2.0,
        p_value,
    })
}

/// `counts[s]` = number of sign assignments whose positive doubled-rank
/// sum is exactly `s`.
fn rank_sum_counts(doubled_ranks: &[usize]) -> Vec<u128> {
    let total: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0u128; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled_ranks {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
