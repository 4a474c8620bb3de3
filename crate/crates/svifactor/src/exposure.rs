//! Happiness Search Exposure (HSE) estimation.
//!
//! For each June formation date, every security's monthly returns over a
//! trailing window (default 72 months, 24 observations minimum) are regressed
//! on the contemporaneous log change of the search-volume index:
//!
//! ```text
//! R_t = alpha + beta_svi * ΔSVI_t + e_t
//! ```
//!
//! `beta_svi` is the security's HSE. The regression has exactly one
//! regressor — no market proxy — which the univariate estimator enforces
//! structurally. Returns inside each window are winsorized before fitting;
//! the default clips each security's own window at its 1st/99th percentiles,
//! with a pooled alternative for sensitivity runs.
//!
//! Securities are independent, so estimation runs as a parallel map; results
//! are merged back in security-id order, making output identical for any
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{formation_window, MonthStamp};
use crate::error::{Error, Result};
use crate::ingest::DeltaSviSeries;
use crate::panel::{ReturnPanel, SecurityId};
use crate::stats::{clamp_to, winsorize, WinsorSpec};

/// One security's estimated exposure for one formation date.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRecord {
    /// Security the estimate belongs to.
    pub security: SecurityId,
    /// Formation June the trailing window ends at.
    pub formation: MonthStamp,
    /// Slope on ΔSVI — the HSE itself. Dimensionless.
    pub beta_svi: f64,
    /// Regression intercept, a monthly return fraction.
    pub alpha: f64,
    /// Number of aligned months used in the fit.
    pub n_obs: usize,
}

/// Which sample the winsorization thresholds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WinsorScope {
    /// Each security's window is clipped at its own percentiles (default).
    #[default]
    PerWindow,
    /// Thresholds come from the pooled in-window returns of every security
    /// passing the observation floor, then apply to each security.
    PooledCrossSection,
}

/// Estimation settings: window length, observation floor, and winsorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureConfig {
    /// Trailing window length in months, ending at the formation June.
    pub window_months: u32,
    /// Minimum aligned observations for a security to be estimated.
    pub min_obs: usize,
    /// Winsorization bounds applied to in-window returns.
    pub winsor: WinsorSpec,
    /// Winsorization sample scope.
    pub scope: WinsorScope,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        ExposureConfig {
            window_months: 72,
            min_obs: 24,
            winsor: WinsorSpec::one_ninety_nine(),
            scope: WinsorScope::PerWindow,
        }
    }
}

impl ExposureConfig {
    /// Checks internal consistency: a positive window and `min_obs >= 2`
    /// (one observation cannot pin down a slope) no longer than the window.
    pub fn validate(&self) -> Result<()> {
        if self.window_months == 0 {
            return Err(Error::validation("window_months must be at least 1"));
        }
        if self.min_obs < 2 {
            return Err(Error::validation(format!(
                "min_obs must be at least 2, got {}",
                self.min_obs
            )));
        }
        if self.min_obs as u64 > u64::from(self.window_months) {
            return Err(Error::validation(format!(
                "min_obs ({}) cannot exceed window_months ({})",
                self.min_obs, self.window_months
            )));
        }
        Ok(())
    }
}

/// Why a security was not estimated at a formation date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureExclusion {
    /// Fewer aligned in-window months than the observation floor.
    TooFewObservations {
        /// Aligned months found.
        got: usize,
        /// The configured floor.
        need: usize,
    },
    /// The aligned ΔSVI sample had no usable variation.
    DegenerateRegressor,
}

impl std::fmt::Display for ExposureExclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExposureExclusion::TooFewObservations { got, need } => {
                write!(f, "min-obs: {got} aligned months, need {need}")
            }
            ExposureExclusion::DegenerateRegressor => f.write_str("degenerate ΔSVI window"),
        }
    }
}

/// Estimated records plus the exclusion report, both in security-id order.
#[derive(Debug, Clone, Default)]
pub struct ExposureOutcome {
    /// One record per estimated security.
    pub records: Vec<ExposureRecord>,
    /// Securities skipped at this formation, with reasons.
    pub excluded: Vec<(SecurityId, ExposureExclusion)>,
}

/// Estimates HSE for every panel security at one June formation date.
///
/// Each security's return months are intersected with the ΔSVI months inside
/// the trailing window; securities clearing `min_obs` are winsorized and
/// fitted, the rest land in the exclusion report. A window where ΔSVI itself
/// is degenerate excludes every security it touches (reported per security)
/// rather than failing the call.
pub fn estimate_hse(
    panel: &ReturnPanel,
    dsvi: &DeltaSviSeries,
    formation: MonthStamp,
    cfg: &ExposureConfig,
) -> Result<ExposureOutcome> {
    if !formation.is_june() {
        return Err(Error::validation(format!(
            "formation month must be a June, got {formation}"
        )));
    }
    cfg.validate()?;
    let (start, end) = formation_window(formation, cfg.window_months)?;

    // Align every security first; the pooled winsor scope needs the full
    // estimation sample before any fit runs.
    struct Aligned {
        security: SecurityId,
        x: Vec<f64>,
        y: Vec<f64>,
    }
    let mut aligned: Vec<Aligned> = Vec::with_capacity(panel.n_securities());
    let mut excluded: Vec<(SecurityId, ExposureExclusion)> = Vec::new();
    for security in panel.securities() {
        let series = panel.series(security).expect("listed securities have series");
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (&month, obs) in series.range(start..=end) {
            if let Some(d) = dsvi.get(month) {
                x.push(d);
                y.push(obs.ret);
            }
        }
        if x.len() < cfg.min_obs {
            excluded.push((
                security.clone(),
                ExposureExclusion::TooFewObservations { got: x.len(), need: cfg.min_obs },
            ));
        } else {
            aligned.push(Aligned { security: security.clone(), x, y });
        }
    }

    let pooled_thresholds = match cfg.scope {
        WinsorScope::PerWindow => None,
        WinsorScope::PooledCrossSection => {
            let pooled: Vec<f64> = aligned.iter().flat_map(|a| a.y.iter().copied()).collect();
            if pooled.is_empty() {
                None
            } else {
                Some(cfg.winsor.thresholds(&pooled)?)
            }
        }
    };

    // Pure per-security map; indexed parallel collect preserves input order,
    // which is already security-id order.
    let fits: Vec<std::result::Result<ExposureRecord, (SecurityId, ExposureExclusion)>> = aligned
        .into_par_iter()
        .map(|a| {
            let y = match pooled_thresholds {
                Some((lo, hi)) => clamp_to(&a.y, lo, hi),
                None => winsorize(&a.y, cfg.winsor).expect("panel returns are finite"),
            };
            match crate::ols::ols_univariate(&a.x, &y) {
                Ok(fit) => Ok(ExposureRecord {
                    security: a.security,
                    formation,
                    beta_svi: fit.beta,
                    alpha: fit.alpha,
                    n_obs: fit.n,
                }),
                Err(Error::Numeric(msg)) if msg.contains("degenerate") => {
                    Err((a.security, ExposureExclusion::DegenerateRegressor))
                }
                Err(e) => panic!("unexpected estimation failure for {}: {e}", a.security),
            }
        })
        .collect();

    let mut records = Vec::new();
    for fit in fits {
        match fit {
            Ok(rec) => records.push(rec),
            Err(excl) => excluded.push(excl),
        }
    }
    records.sort_by(|a, b| a.security.cmp(&b.security));
    excluded.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(ExposureOutcome { records, excluded })
}
