//! Month-level calendar arithmetic.
//!
//! Everything in this crate runs on a monthly clock: panels are keyed by
//! (security, month), exposures are estimated over trailing month windows, and
//! portfolios are formed each June and held July through the following June.
//! [`MonthStamp`] is the single time type; it is totally ordered, cheap to
//! copy, and does month arithmetic without any day-of-month ambiguity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// MonthStamp
// ---------------------------------------------------------------------------

/// A calendar month, e.g. June 2020. Ordered chronologically.
///
/// Serializes as the string `"YYYY-MM"` so config files stay readable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthStamp {
    year: i32,
    /// 1 through 12, enforced by [`MonthStamp::new`].
    month: u8,
}

impl MonthStamp {
    /// Builds a stamp, rejecting months outside 1..=12.
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::validation(format!(
                "month must be in 1..=12, got {month} (year {year})"
            )));
        }
        Ok(MonthStamp { year, month: month as u8 })
    }

    /// Calendar year.
    pub fn year(self) -> i32 {
        self.year
    }

    /// Calendar month, 1 through 12.
    pub fn month(self) -> u32 {
        u32::from(self.month)
    }

    /// The following month, rolling December into January.
    pub fn next(self) -> Self {
        self.plus_months(1)
    }

    /// The preceding month, rolling January into December.
    pub fn prev(self) -> Self {
        self.plus_months(-1)
    }

    /// This stamp shifted by `n` months (negative shifts go backwards).
    pub fn plus_months(self, n: i64) -> Self {
        let idx = self.index() + n;
        let year = idx.div_euclid(12);
        let month = idx.rem_euclid(12) + 1;
        MonthStamp { year: year as i32, month: month as u8 }
    }

    /// True if this is a June (portfolio-formation month).
    pub fn is_june(self) -> bool {
        self.month == 6
    }

    /// True if this is a December (book-equity fiscal month).
    pub fn is_december(self) -> bool {
        self.month == 12
    }

    /// Months since year 0 January; internal linearisation for arithmetic.
    fn index(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }
}

impl fmt::Display for MonthStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthStamp {
    type Err = Error;

    /// Parses `"YYYY-MM"`, the same shape [`MonthStamp`] displays as.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("expected a YYYY-MM month, got `{s}`"));
        let (year, month) = s.trim().split_once('-').ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        let month: u32 = month.parse().map_err(|_| bad())?;
        MonthStamp::new(year, month)
    }
}

impl Serialize for MonthStamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthStamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Signed number of months from `a` to `b` (positive when `b` is later).
///
/// Additive: `months_between(a, b) + months_between(b, c) == months_between(a, c)`.
pub fn months_between(a: MonthStamp, b: MonthStamp) -> i64 {
    b.index() - a.index()
}

/// Inclusive `[start, end]` span of the trailing estimation window that ends
/// at `formation` and covers `window_months` months.
///
/// `window_months` must be at least 1; a window of 1 is the singleton
/// `[formation, formation]`.
pub fn formation_window(formation: MonthStamp, window_months: u32) -> Result<(MonthStamp, MonthStamp)> {
    if window_months == 0 {
        return Err(Error::validation("window_months must be at least 1".to_string()));
    }
    let start = formation.plus_months(-(i64::from(window_months) - 1));
    Ok((start, formation))
}

/// All months from `start` to `end` inclusive, in order. Empty if `start > end`.
pub fn month_range(start: MonthStamp, end: MonthStamp) -> Vec<MonthStamp> {
    let mut months = Vec::new();
    let mut m = start;
    while m <= end {
        months.push(m);
        m = m.next();
    }
    months
}
