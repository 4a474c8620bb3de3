//! Small statistical kernel: linear-interpolation percentiles, winsorization,
//! and time-series means with t-statistics.
//!
//! The percentile definition is the linear interpolation rule used throughout
//! the crate (breakpoints, winsorization thresholds, medians): for a sorted
//! sample `x[0..n]` and percentile `p`, the rank is `h = (n - 1) * p / 100`
//! and the value is `x[floor(h)] + (h - floor(h)) * (x[ceil(h)] - x[floor(h)])`.
//! Every consumer shares this one implementation so thresholds and breakpoints
//! can never drift apart.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Percentiles
// ---------------------------------------------------------------------------

fn validate_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("{what} contains a non-finite value ({bad})")));
    }
    Ok(())
}

/// Percentile `pct` (0..=100) of an already-sorted, finite sample.
///
/// Uses the linear interpolation rule documented at module level. The sample
/// must be non-empty and ascending.
pub fn percentile_of_sorted(sorted: &[f64], pct: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::numeric("percentile of an empty sample"));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::validation(format!("percentile must be in 0..=100, got {pct}")));
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    let n = sorted.len();
    if n == 1 {
        return Ok(sorted[0]);
    }
    let h = (n - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Percentile `pct` (0..=100) of an arbitrary finite sample; sorts a copy.
pub fn percentile(values: &[f64], pct: f64) -> Result<f64> {
    validate_finite(values, "percentile input")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_of_sorted(&sorted, pct)
}

/// Median (50th percentile) of a finite sample.
pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

/// Arithmetic mean of a non-empty sample.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::numeric("mean of an empty sample"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

// ---------------------------------------------------------------------------
// Winsorization
// ---------------------------------------------------------------------------

/// Lower/upper percentile bounds for winsorization.
///
/// The lower bound lives in `[0, 50)` and the upper in `(50, 100]`, so the
/// clamp interval always brackets the median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinsorSpec {
    lower_pct: f64,
    upper_pct: f64,
}

impl WinsorSpec {
    /// Builds a spec, requiring `lower` in `[0, 50)` and `upper` in `(50, 100]`.
    pub fn new(lower_pct: f64, upper_pct: f64) -> Result<Self> {
        if !(lower_pct.is_finite() && upper_pct.is_finite()) {
            return Err(Error::validation("winsor percentiles must be finite"));
        }
        if !(0.0..50.0).contains(&lower_pct) {
            return Err(Error::validation(format!(
                "winsor lower percentile must be in [0, 50), got {lower_pct}"
            )));
        }
        if !(upper_pct > 50.0 && upper_pct <= 100.0) {
            return Err(Error::validation(format!(
                "winsor upper percentile must be in (50, 100], got {upper_pct}"
            )));
        }
        Ok(WinsorSpec { lower_pct, upper_pct })
    }

    /// The conventional 1st/99th percentile bounds.
    pub fn one_ninety_nine() -> Self {
        WinsorSpec { lower_pct: 1.0, upper_pct: 99.0 }
    }

    /// Degenerate 0/100 bounds: clamps at the sample min and max, so the data
    /// pass through unchanged. Useful for switching winsorization off.
    pub fn identity() -> Self {
        WinsorSpec { lower_pct: 0.0, upper_pct: 100.0 }
    }

    /// Lower percentile bound.
    pub fn lower_pct(&self) -> f64 {
        self.lower_pct
    }

    /// Upper percentile bound.
    pub fn upper_pct(&self) -> f64 {
        self.upper_pct
    }

    /// The clamp thresholds this spec induces on a finite sample.
    pub fn thresholds(&self, values: &[f64]) -> Result<(f64, f64)> {
        validate_finite(values, "winsorize input")?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lower = percentile_of_sorted(&sorted, self.lower_pct)?;
        let upper = percentile_of_sorted(&sorted, self.upper_pct)?;
        Ok((lower, upper))
    }
}

impl Default for WinsorSpec {
    fn default() -> Self {
        WinsorSpec::one_ninety_nine()
    }
}

/// Clamps each value to the sample's own `[lower_pct, upper_pct]` percentile
/// thresholds. Order-preserving and length-preserving; an empty input maps to
/// an empty output.
pub fn winsorize(values: &[f64], spec: WinsorSpec) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let (lower, upper) = spec.thresholds(values)?;
    Ok(values.iter().map(|&v| v.clamp(lower, upper)).collect())
}

/// Clamps each value to pre-computed `[lower, upper]` thresholds. Used when
/// thresholds come from a pooled sample rather than from `values` itself.
pub fn clamp_to(values: &[f64], lower: f64, upper: f64) -> Vec<f64> {
    values.iter().map(|&v| v.clamp(lower, upper)).collect()
}

// ---------------------------------------------------------------------------
// Time-series statistics
// ---------------------------------------------------------------------------

/// Mean and t-statistic of a time series of length `n`.
///
/// The t-statistic is `mean / (sd / sqrt(n))` with the sample standard
/// deviation (`n - 1` denominator). When every value is identical the
/// standard deviation is zero; `zero_variance` is set and `tstat` is reported
/// as `0.0` for a zero mean and as signed infinity otherwise, rather than
/// producing a NaN from `0/0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsStat {
    /// Time-series mean.
    pub mean: f64,
    /// `mean / (sd / sqrt(n))`, see above for the degenerate case.
    pub tstat: f64,
    /// Number of observations.
    pub n: usize,
    /// True when the series has no variation at all.
    pub zero_variance: bool,
}

/// Time-series mean and t-statistic of a finite series with at least two
/// observations.
pub fn ts_stat(values: &[f64]) -> Result<TsStat> {
    validate_finite(values, "ts_stat input")?;
    let n = values.len();
    if n < 2 {
        return Err(Error::numeric(format!(
            "ts_stat needs at least 2 observations, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        // No variation at all: flag instead of dividing by zero.
        let tstat = if mean == 0.0 { 0.0 } else { f64::INFINITY.copysign(mean) };
        return Ok(TsStat { mean, tstat, n, zero_variance: true });
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    let tstat = mean / (sd / (n as f64).sqrt());
    Ok(TsStat { mean, tstat, n, zero_variance: false })
}
