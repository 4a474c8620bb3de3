//! Core data model: securities, monthly return panels, risk-free series, and
//! book-equity records.
//!
//! The panel is unbalanced — securities may enter and leave — but every stored
//! observation is complete: a finite return and a strictly positive market
//! capitalisation. Complete-observation enforcement at construction time is
//! what lets the sorting and regression layers assume that any security
//! present in a month can be value-weighted without further checks.
//!
//! All maps are `BTreeMap`s so that iteration order is deterministic
//! regardless of insertion order; every downstream report inherits
//! reproducibility from this choice.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calendar::{month_range, MonthStamp};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// SecurityId
// ---------------------------------------------------------------------------

/// Identifier of one security (ticker, permno-style code, or synthetic id).
/// Non-empty; ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityId(String);

impl SecurityId {
    /// Builds an id, rejecting empty or whitespace-only strings.
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::validation("security id must be non-empty"));
        }
        Ok(SecurityId(id))
    }

    /// The identifier text.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SecurityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// ---------------------------------------------------------------------------
// ReturnPanel
// ---------------------------------------------------------------------------

/// One month's observation for one security.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Total monthly return as a fraction (0.05 = five percent).
    pub ret: f64,
    /// End-of-month market capitalisation in currency units; strictly positive.
    pub mktcap: f64,
}

/// Unbalanced monthly panel of returns and market caps.
#[derive(Debug, Clone, Default)]
pub struct ReturnPanel {
    securities: BTreeMap<SecurityId, BTreeMap<MonthStamp, Observation>>,
    calendar: Vec<MonthStamp>,
}

impl ReturnPanel {
    /// Builds a panel from raw rows, validating each one.
    ///
    /// Rejects duplicate (security, month) keys, non-finite returns, and
    /// market caps that are not strictly positive and finite. The panel
    /// calendar is the contiguous month range from the earliest to the latest
    /// observed month, so months with no observations at all still appear in
    /// [`ReturnPanel::calendar`].
    pub fn from_observations(
        rows: impl IntoIterator<Item = (SecurityId, MonthStamp, f64, f64)>,
    ) -> Result<Self> {
        let mut securities: BTreeMap<SecurityId, BTreeMap<MonthStamp, Observation>> =
            BTreeMap::new();
        for (security, month, ret, mktcap) in rows {
            if !ret.is_finite() {
                return Err(Error::data(format!(
                    "non-finite return for security {security} in {month}"
                )));
            }
            if !(mktcap.is_finite() && mktcap > 0.0) {
                return Err(Error::data(format!(
                    "market cap must be finite and > 0 for security {security} in {month}, got {mktcap}"
                )));
            }
            let series = securities.entry(security.clone()).or_default();
            if series.insert(month, Observation { ret, mktcap }).is_some() {
                return Err(Error::data(format!(
                    "duplicate observation for security {security} in {month}"
                )));
            }
        }
        let calendar = match (
            securities.values().flat_map(|s| s.keys().next()).min(),
            securities.values().flat_map(|s| s.keys().next_back()).max(),
        ) {
            (Some(&first), Some(&last)) => month_range(first, last),
            _ => Vec::new(),
        };
        Ok(ReturnPanel { securities, calendar })
    }

    /// Contiguous month range covering every observation, earliest to latest.
    pub fn calendar(&self) -> &[MonthStamp] {
        &self.calendar
    }

    /// Securities present anywhere in the panel, in id order.
    pub fn securities(&self) -> impl Iterator<Item = &SecurityId> {
        self.securities.keys()
    }

    /// Number of distinct securities.
    pub fn n_securities(&self) -> usize {
        self.securities.len()
    }

    /// Total number of (security, month) observations.
    pub fn n_observations(&self) -> usize {
        self.securities.values().map(|s| s.len()).sum()
    }

    /// The observation for `security` in `month`, if present.
    pub fn observation(&self, security: &SecurityId, month: MonthStamp) -> Option<&Observation> {
        self.securities.get(security)?.get(&month)
    }

    /// Full month-ordered series for one security, if present.
    pub fn series(&self, security: &SecurityId) -> Option<&BTreeMap<MonthStamp, Observation>> {
        self.securities.get(security)
    }

    /// All securities with an observation in `month`, with their observations,
    /// in id order.
    pub fn cross_section(&self, month: MonthStamp) -> Vec<(&SecurityId, &Observation)> {
        self.securities
            .iter()
            .filter_map(|(id, series)| series.get(&month).map(|obs| (id, obs)))
            .collect()
    }

    /// Iterates all rows in (security, month) order.
    pub fn rows(&self) -> impl Iterator<Item = (&SecurityId, MonthStamp, &Observation)> {
        self.securities
            .iter()
            .flat_map(|(id, series)| series.iter().map(move |(&m, obs)| (id, m, obs)))
    }
}

// ---------------------------------------------------------------------------
// RiskFreeSeries
// ---------------------------------------------------------------------------

/// Monthly risk-free rate series (fractions per month).
#[derive(Debug, Clone, Default)]
pub struct RiskFreeSeries {
    series: BTreeMap<MonthStamp, f64>,
}

impl RiskFreeSeries {
    /// Builds the series, rejecting duplicate months and non-finite rates.
    pub fn from_rows(rows: impl IntoIterator<Item = (MonthStamp, f64)>) -> Result<Self> {
        let mut series = BTreeMap::new();
        for (month, rf) in rows {
            if !rf.is_finite() {
                return Err(Error::data(format!("non-finite risk-free rate in {month}")));
            }
            if series.insert(month, rf).is_some() {
                return Err(Error::data(format!("duplicate risk-free rate for {month}")));
            }
        }
        Ok(RiskFreeSeries { series })
    }

    /// The rate for `month`, if present.
    pub fn get(&self, month: MonthStamp) -> Option<f64> {
        self.series.get(&month).copied()
    }

    /// The rate for `month`, or a data error naming the missing month.
    pub fn require(&self, month: MonthStamp) -> Result<f64> {
        self.get(month)
            .ok_or_else(|| Error::data(format!("risk-free series has no rate for {month}")))
    }

    /// `(month, rate)` pairs in month order.
    pub fn iter(&self) -> impl Iterator<Item = (MonthStamp, f64)> + '_ {
        self.series.iter().map(|(&m, &r)| (m, r))
    }

    /// Number of months covered.
    pub fn len(&self) -> usize {
        self.series.len()
    }

    /// True if no months are covered.
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

// ---------------------------------------------------------------------------
// BookEquityRecord
// ---------------------------------------------------------------------------

/// Fiscal-December book-equity data for one security and one fiscal year.
#[derive(Debug, Clone, PartialEq)]
pub struct BookEquityRecord {
    /// Security this record belongs to.
    pub security: SecurityId,
    /// Fiscal year; the balance-sheet date is December of this year.
    pub fiscal_year: i32,
    /// Book equity in currency units; may be negative.
    pub equity: f64,
    /// Preferred stock value in currency units; non-negative.
    pub preferred: f64,
    /// Market capitalisation at the end of that December; strictly positive.
    pub dec_mktcap: f64,
}

impl BookEquityRecord {
    /// Builds a record, validating finiteness, `preferred >= 0`, and
    /// `dec_mktcap > 0`.
    pub fn new(
        security: SecurityId,
        fiscal_year: i32,
        equity: f64,
        preferred: f64,
        dec_mktcap: f64,
    ) -> Result<Self> {
        if !equity.is_finite() {
            return Err(Error::data(format!(
                "non-finite equity for security {security}, fiscal year {fiscal_year}"
            )));
        }
        if !(preferred.is_finite() && preferred >= 0.0) {
            return Err(Error::data(format!(
                "preferred must be finite and >= 0 for security {security}, fiscal year {fiscal_year}, got {preferred}"
            )));
        }
        if !(dec_mktcap.is_finite() && dec_mktcap > 0.0) {
            return Err(Error::data(format!(
                "dec_mktcap must be finite and > 0 for security {security}, fiscal year {fiscal_year}, got {dec_mktcap}"
            )));
        }
        Ok(BookEquityRecord { security, fiscal_year, equity, preferred, dec_mktcap })
    }

    /// The fiscal December this record refers to.
    pub fn fiscal_december(&self) -> MonthStamp {
        MonthStamp::new(self.fiscal_year, 12).expect("December is always valid")
    }
}
