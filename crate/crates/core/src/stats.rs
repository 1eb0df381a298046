//! Statistics helpers for trial results: IQR outlier filtering, Holm-Bonferroni
//! correction and per-condition descriptive summaries.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("p-value {0} outside [0, 1]")]
    PValueRange(f64),
    #[error("alpha {0} outside (0, 1)")]
    AlphaRange(f64),
    #[error("non-finite value in input")]
    NonFinite,
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman & Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` with type-7 quartiles.
pub fn iqr_fences(values: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.len() < 4 {
        return Err(StatsError::TooFew {
            need: 4,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_type7(&sorted, 0.25);
    let q3 = quantile_type7(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// Keep-mask: `true` where the value lies inside the (closed) Tukey fences.
pub fn iqr_filter(values: &[f64]) -> Result<Vec<bool>, StatsError> {
    let (lo, hi) = iqr_fences(values)?;
    Ok(values.iter().map(|v| (lo..=hi).contains(v)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolmResult {
    /// Adjusted p-values, in input order.
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

/// Holm's step-down adjustment.
pub fn holm_bonferroni(p: &[f64], alpha: f64) -> Result<HolmResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::AlphaRange(alpha));
    }
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::PValueRange(bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0_f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    let reject = adjusted.iter().map(|a| *a <= alpha).collect();
    Ok(HolmResult { adjusted, reject })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Half-width of the two-sided 95% t interval.
    pub ci95: f64,
}

/// Mean, sample standard deviation and 95% confidence half-width.
pub fn summarize(values: &[f64]) -> Result<Summary, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(Summary {
        n,
        mean,
        sd,
        ci95: t * sd / (n as f64).sqrt(),
    })
}

/// Summaries per group, ordered by key.
pub fn aggregate<K: Ord + Clone>(
    groups: &std::collections::BTreeMap<K, Vec<f64>>,
) -> Result<Vec<(K, Summary)>, StatsError> {
    groups
        .iter()
        .map(|(k, v)| summarize(v).map(|s| (k.clone(), s)))
        .collect()
}
