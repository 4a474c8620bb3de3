//! Monthly cross-sectional (Fama-MacBeth) regressions.
//!
//! Each calendar month, stock excess returns are regressed on firm
//! characteristics:
//!
//! ```text
//! R_i − RF = a + s·log(ME_i) + h·log(BE/ME)_i⁺ + h_dummy·BE_Dummy_i + hs·HSE_i + e_i
//! ```
//!
//! and the per-coefficient monthly estimates are averaged over time with
//! plain time-series t-statistics. Excess returns enter in percent, so
//! reported means are percent per month. The value slope `h` and the
//! negative-book-equity dummy always enter together.
//!
//! Regressor timing: for a return month July of year `t` through June of
//! `t+1`, size and HSE are observed at June of year `t` and book-to-market at
//! December of year `t−1`. Each month's cross-section is trimmed of its
//! single highest and lowest excess return (same rule as the sorts) before
//! the regression runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::calendar::MonthStamp;
use crate::error::{Error, Result};
use crate::exposure::ExposureRecord;
use crate::ols::ols_multivariate;
use crate::panel::{ReturnPanel, RiskFreeSeries, SecurityId};
use crate::sorts::{trim_cross_section, CharacteristicsByYear};
use crate::stats::{median, ts_stat, TsStat};

/// Default month-size floor: a month is used only when its cross-section is
/// strictly larger than `number of regressors + FM_MONTH_FLOOR`.
pub const FM_MONTH_FLOOR: usize = 10;

/// Minimum usable months for a Fama-MacBeth average.
pub const FM_MIN_MONTHS: usize = 12;

// ---------------------------------------------------------------------------
// Cross-section rows
// ---------------------------------------------------------------------------

/// One stock-month observation with its regressors, timed per the formation
/// convention described at module level.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionRow {
    /// Security this row belongs to.
    pub security: SecurityId,
    /// Return month.
    pub month: MonthStamp,
    /// Formation year `t` the regressors were observed for (June of `t`,
    /// December of `t−1`). Kept for median-split subsampling.
    pub formation_year: i32,
    /// `R_i − RF` for the month, as a fraction.
    pub excess_ret: f64,
    /// Natural log of June market cap.
    pub log_me: f64,
    /// `log(BE/ME)⁺` with the negative-BE fill applied.
    pub log_beme_plus: f64,
    /// Negative-book-equity dummy.
    pub be_dummy: bool,
    /// Happiness search exposure from the trailing window ending June of `t`.
    pub hse: f64,
    /// Raw BE/ME ratio (any sign). Not a regressor; needed for the
    /// value/growth median split, which includes negative-BE firms.
    pub beme_raw: f64,
}

/// Builds the full cross-section row set from panel, exposures, and
/// characteristics.
///
/// Return months July of year `t` through June of `t+1` draw their regressors
/// from formation year `t`; months without both an exposure set and a
/// characteristics table for their formation year produce no rows, as do
/// securities missing any input. Fails if a contributing month lacks a
/// risk-free rate.
pub fn build_cross_section(
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    exposures: &[ExposureRecord],
    characteristics: &CharacteristicsByYear,
) -> Result<Vec<CrossSectionRow>> {
    let mut exp_by_year: BTreeMap<i32, BTreeMap<&SecurityId, &ExposureRecord>> = BTreeMap::new();
    for rec in exposures {
        if !rec.formation.is_june() {
            return Err(Error::validation(format!(
                "exposure record for {} has non-June formation {}",
                rec.security, rec.formation
            )));
        }
        exp_by_year
            .entry(rec.formation.year())
            .or_default()
            .insert(&rec.security, rec);
    }

    let mut rows = Vec::new();
    for &month in panel.calendar() {
        // July..December of year t and January..June of year t+1 belong to
        // formation year t.
        let formation_year = if month.month() >= 7 { month.year() } else { month.year() - 1 };
        let Some(exp) = exp_by_year.get(&formation_year) else {
            continue;
        };
        let Some(chars) = characteristics.get(&formation_year) else {
            continue;
        };
        let mut month_rows = Vec::new();
        for (id, obs) in panel.cross_section(month) {
            let Some(rec) = exp.get(id) else { continue };
            let Some(row) = chars.get(id) else { continue };
            month_rows.push((id, obs, rec, row));
        }
        if month_rows.is_empty() {
            continue;
        }
        let rf_m = rf.require(month)?;
        for (id, obs, rec, row) in month_rows {
            rows.push(CrossSectionRow {
                security: id.clone(),
                month,
                formation_year,
                excess_ret: obs.ret - rf_m,
                log_me: row.log_me,
                log_beme_plus: row.log_beme_plus,
                be_dummy: row.be_dummy,
                hse: rec.beta_svi,
                beme_raw: row.beme_raw,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Specification
// ---------------------------------------------------------------------------

/// Median-split subsample selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Subsample {
    /// No split; the full cross-section.
    #[default]
    Full,
    /// Above the yearly size median.
    Big,
    /// Below the yearly size median.
    Small,
    /// Above the yearly BE/ME median (negative ratios included in the median).
    Value,
    /// Below the yearly BE/ME median.
    Growth,
}

impl fmt::Display for Subsample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subsample::Full => "full",
            Subsample::Big => "big",
            Subsample::Small => "small",
            Subsample::Value => "value",
            Subsample::Growth => "growth",
        })
    }
}

impl FromStr for Subsample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "none" => Ok(Subsample::Full),
            "big" => Ok(Subsample::Big),
            "small" => Ok(Subsample::Small),
            "value" => Ok(Subsample::Value),
            "growth" => Ok(Subsample::Growth),
            other => Err(Error::validation(format!(
                "unknown subsample `{other}` (expected full, big, small, value, or growth)"
            ))),
        }
    }
}

/// Which slopes a regression includes (the intercept is always present, and
/// `h` brings the negative-BE dummy with it), plus an optional subsample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FmSpec {
    /// Include `s·log(ME)`.
    pub with_size: bool,
    /// Include `h·log(BE/ME)⁺` together with `h_dummy·BE_Dummy`.
    pub with_value: bool,
    /// Include `hs·HSE`.
    pub with_hse: bool,
    /// Cross-section restriction.
    pub subsample: Subsample,
}

impl FmSpec {
    /// Builds a spec, rejecting an empty regressor set.
    pub fn new(with_size: bool, with_value: bool, with_hse: bool) -> Result<Self> {
        let spec = FmSpec { with_size, with_value, with_hse, subsample: Subsample::Full };
        spec.validate()?;
        Ok(spec)
    }

    /// The same spec restricted to a subsample.
    pub fn on(self, subsample: Subsample) -> Self {
        FmSpec { subsample, ..self }
    }

    /// Checks the non-empty-regressor invariant.
    pub fn validate(&self) -> Result<()> {
        if !(self.with_size || self.with_value || self.with_hse) {
            return Err(Error::validation("regression needs at least one slope regressor"));
        }
        Ok(())
    }

    /// Number of slope columns (the dummy counts as its own column).
    pub fn n_regressors(&self) -> usize {
        usize::from(self.with_size)
            + 2 * usize::from(self.with_value)
            + usize::from(self.with_hse)
    }

    /// Coefficients this spec reports, intercept first.
    pub fn coefficients(&self) -> Vec<Coefficient> {
        let mut coefs = vec![Coefficient::Intercept];
        if self.with_size {
            coefs.push(Coefficient::Size);
        }
        if self.with_value {
            coefs.push(Coefficient::Value);
            coefs.push(Coefficient::ValueDummy);
        }
        if self.with_hse {
            coefs.push(Coefficient::Hse);
        }
        coefs
    }

    /// Short label like `s,h,hs` or `s,h,hs[big]`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.with_size {
            parts.push("s");
        }
        if self.with_value {
            parts.push("h");
        }
        if self.with_hse {
            parts.push("hs");
        }
        let base = parts.join(",");
        match self.subsample {
            Subsample::Full => base,
            sub => format!("{base}[{sub}]"),
        }
    }

    /// The seven canonical specifications, in the conventional single-slope
    /// to full-model order.
    pub fn all_seven() -> Vec<FmSpec> {
        [
            (true, false, false),
            (false, true, false),
            (false, false, true),
            (true, true, false),
            (true, false, true),
            (false, true, true),
            (true, true, true),
        ]
        .into_iter()
        .map(|(s, h, hs)| FmSpec::new(s, h, hs).expect("non-empty"))
        .collect()
    }

    /// The full model on each of the four median-split subsamples.
    pub fn subsample_four() -> Vec<FmSpec> {
        let full = FmSpec::new(true, true, true).expect("non-empty");
        [Subsample::Big, Subsample::Small, Subsample::Value, Subsample::Growth]
            .into_iter()
            .map(|sub| full.on(sub))
            .collect()
    }
}

impl fmt::Display for FmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for FmSpec {
    type Err = Error;

    /// Parses the [`FmSpec::label`] shape: comma-separated regressors from
    /// `{s, h, hs}` with an optional `[subsample]` suffix, e.g. `s,h,hs[big]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, subsample) = match s.split_once('[') {
            Some((body, rest)) => {
                let sub = rest.strip_suffix(']').ok_or_else(|| {
                    Error::validation(format!("unclosed subsample bracket in `{s}`"))
                })?;
                (body, sub.parse::<Subsample>()?)
            }
            None => (s, Subsample::Full),
        };
        let mut spec =
            FmSpec { with_size: false, with_value: false, with_hse: false, subsample };
        for part in body.split(',') {
            let flag = match part.trim() {
                "s" => &mut spec.with_size,
                "h" => &mut spec.with_value,
                "hs" => &mut spec.with_hse,
                other => {
                    return Err(Error::validation(format!(
                        "unknown regressor `{other}` in `{s}` (expected s, h, or hs)"
                    )))
                }
            };
            if *flag {
                return Err(Error::validation(format!("duplicate regressor in `{s}`")));
            }
            *flag = true;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// A reported coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    /// Intercept `a`.
    Intercept,
    /// Size slope `s`.
    Size,
    /// Value slope `h`.
    Value,
    /// Negative-book-equity dummy coefficient `h_dummy`.
    ValueDummy,
    /// HSE slope `hs`.
    Hse,
}

impl Coefficient {
    /// Table label: `a`, `s`, `h`, `h_dummy`, or `hs`.
    pub fn label(&self) -> &'static str {
        match self {
            Coefficient::Intercept => "a",
            Coefficient::Size => "s",
            Coefficient::Value => "h",
            Coefficient::ValueDummy => "h_dummy",
            Coefficient::Hse => "hs",
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

// ---------------------------------------------------------------------------
// Subsampling
// ---------------------------------------------------------------------------

/// Filters rows to one side of the yearly median split.
///
/// Size splits compare each firm's `log_me` to the formation-year median over
/// distinct firms; value/growth splits use the raw BE/ME ratio with
/// negative-BE firms included at their negative values. Sides are strict:
/// firms exactly on the median fall in neither half (so big and small are
/// disjoint and their union misses only exact ties). Years where a side ends
/// up empty are noted in the returned warnings.
pub fn split_subsample(rows: &[CrossSectionRow], subsample: Subsample) -> (Vec<CrossSectionRow>, Vec<String>) {
    if subsample == Subsample::Full {
        return (rows.to_vec(), Vec::new());
    }
    let by_size = matches!(subsample, Subsample::Big | Subsample::Small);
    let upper = matches!(subsample, Subsample::Big | Subsample::Value);

    // One value per (formation year, firm); constant across the year's months.
    let mut firm_values: BTreeMap<i32, BTreeMap<&SecurityId, f64>> = BTreeMap::new();
    for row in rows {
        let value = if by_size { row.log_me } else { row.beme_raw };
        firm_values.entry(row.formation_year).or_default().insert(&row.security, value);
    }
    let mut medians: BTreeMap<i32, f64> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (&year, firms) in &firm_values {
        let values: Vec<f64> = firms.values().copied().collect();
        let med = median(&values).expect("non-empty year");
        medians.insert(year, med);
    }

    let kept: Vec<CrossSectionRow> = rows
        .iter()
        .filter(|row| {
            let value = if by_size { row.log_me } else { row.beme_raw };
            let med = medians[&row.formation_year];
            if upper {
                value > med
            } else {
                value < med
            }
        })
        .cloned()
        .collect();

    for (&year, &med) in &medians {
        if !kept.iter().any(|r| r.formation_year == year) {
            warnings.push(format!(
                "subsample {subsample}: no firms on the {} side of the year-{year} median ({med})",
                if upper { "upper" } else { "lower" }
            ));
        }
    }
    (kept, warnings)
}

// ---------------------------------------------------------------------------
// Fama-MacBeth driver
// ---------------------------------------------------------------------------

/// Fama-MacBeth result: per-coefficient time-series stats in percent per
/// month, with the month count and any skipped months.
#[derive(Debug, Clone, PartialEq)]
pub struct FmResult {
    /// The specification that produced this result.
    pub spec: FmSpec,
    /// Intercept-first coefficient stats; means are percent per month.
    pub coefficients: Vec<(Coefficient, TsStat)>,
    /// Months with a regression.
    pub n_months: usize,
    /// Months skipped for failing the size floor, with reasons, plus any
    /// subsample warnings.
    pub skipped: Vec<String>,
}

impl FmResult {
    /// The stat for one coefficient, if the spec includes it.
    pub fn coefficient(&self, coef: Coefficient) -> Option<TsStat> {
        self.coefficients.iter().find(|(c, _)| *c == coef).map(|(_, s)| *s)
    }
}

/// Runs one Fama-MacBeth specification over the cross-section rows.
///
/// Months whose cross-section (after any subsampling) is not strictly larger
/// than `number of regressors + month_floor` are skipped and reported;
/// `month_floor` must be at least 3 so the trimmed month can still be
/// regressed. Fails when fewer than 12 usable months remain. When the
/// negative-book-equity dummy never fires in a month's cross-section —
/// routine for the value subsample — it is dropped from that month's design
/// and its coefficient recorded as zero.
pub fn run_fm(rows: &[CrossSectionRow], spec: &FmSpec, month_floor: usize) -> Result<FmResult> {
    spec.validate()?;
    if month_floor < 3 {
        return Err(Error::validation(format!(
            "month floor must be at least 3, got {month_floor}"
        )));
    }
    let (rows, mut skipped) = split_subsample(rows, spec.subsample);

    let mut by_month: BTreeMap<MonthStamp, Vec<&CrossSectionRow>> = BTreeMap::new();
    for row in &rows {
        if !row.excess_ret.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite excess return for {} in {}",
                row.security, row.month
            )));
        }
        by_month.entry(row.month).or_default().push(row);
    }

    let p = spec.n_regressors();
    let mut eligible: Vec<(MonthStamp, Vec<&CrossSectionRow>)> = Vec::new();
    for (month, mut month_rows) in by_month {
        if month_rows.len() <= p + month_floor {
            skipped.push(format!(
                "month {month}: cross-section of {} not above floor {} + {month_floor}; skipped",
                month_rows.len(),
                p
            ));
            continue;
        }
        // Canonical row order makes the arithmetic independent of input order.
        month_rows.sort_by(|a, b| a.security.cmp(&b.security));
        eligible.push((month, month_rows));
    }
    if eligible.len() < FM_MIN_MONTHS {
        return Err(Error::data(format!(
            "insufficient history: {} usable months, need at least {FM_MIN_MONTHS}",
            eligible.len()
        )));
    }

    // Per-month regressions are independent; indexed collect keeps month order.
    let monthly: Vec<Vec<f64>> = eligible
        .par_iter()
        .map(|(month, month_rows)| -> Result<Vec<f64>> {
            let trim_input: Vec<(SecurityId, f64)> = month_rows
                .iter()
                .map(|r| (r.security.clone(), r.excess_ret))
                .collect();
            let kept = trim_cross_section(&trim_input)?;
            let kept_ids: std::collections::BTreeSet<&SecurityId> =
                kept.iter().map(|(id, _)| id).collect();
            let used: Vec<&&CrossSectionRow> = month_rows
                .iter()
                .filter(|r| kept_ids.contains(&r.security))
                .collect();

            let mut columns: Vec<Vec<f64>> = Vec::with_capacity(p);
            if spec.with_size {
                columns.push(used.iter().map(|r| r.log_me).collect());
            }
            if spec.with_value {
                columns.push(used.iter().map(|r| r.log_beme_plus).collect());
                columns.push(used.iter().map(|r| f64::from(u8::from(r.be_dummy))).collect());
            }
            if spec.with_hse {
                columns.push(used.iter().map(|r| r.hse).collect());
            }
            // A month may hold no negative-book-equity firm at all — routine in
            // the value subsample, where negative-BE firms always fall on the
            // growth side of the median. The dummy column is then identically
            // zero and carries no information, so it is dropped for that month
            // and its coefficient pinned at zero, the minimum-norm solution
            // for an empty indicator.
            let dummy_col = spec.with_value.then(|| usize::from(spec.with_size) + 1);
            let dropped_dummy = match dummy_col {
                Some(idx) if columns[idx].iter().all(|v| *v == 0.0) => {
                    columns.remove(idx);
                    Some(idx)
                }
                _ => None,
            };
            // Excess returns in percent so coefficients match reported units.
            let y: Vec<f64> = used.iter().map(|r| r.excess_ret * 100.0).collect();
            let mut coefs = ols_multivariate(&columns, &y)
                .map_err(|e| Error::numeric(format!("month {month}, spec {}: {e}", spec.label())))?;
            if let Some(idx) = dropped_dummy {
                coefs.insert(idx + 1, 0.0);
            }
            Ok(coefs)
        })
        .collect::<Result<Vec<_>>>()?;

    let coefs = spec.coefficients();
    let mut coefficients = Vec::with_capacity(coefs.len());
    for (idx, coef) in coefs.iter().enumerate() {
        let series: Vec<f64> = monthly.iter().map(|m| m[idx]).collect();
        coefficients.push((*coef, ts_stat(&series)?));
    }
    Ok(FmResult { spec: *spec, coefficients, n_months: monthly.len(), skipped })
}
