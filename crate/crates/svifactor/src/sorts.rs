//! Portfolio sorts: univariate HSE deciles and conditional double sorts
//! (size or book-to-market quintiles crossed with HSE quintiles).
//!
//! Formation happens each June: the June cross-section is trimmed of its
//! single highest and lowest excess return, breakpoints are computed on what
//! remains, and bucket membership is fixed for the holding year July through
//! the following June. Each holding month the member cross-section is trimmed
//! the same way (once, before any bucketing), then every bucket's monthly
//! value-weighted excess return is recorded. A security contributes until its
//! data ends; empty bucket-months are dropped, never zero-filled.
//!
//! Conditional double sorts compute the outer (size or BE/ME) breakpoints on
//! the whole trimmed cross-section, then compute HSE breakpoints *within each
//! outer bucket from that bucket's members only* — the inner cut never sees
//! foreign-bucket data. Negative-book-equity firms never enter BE/ME sorts or
//! the BE/ME(+) column averages; they participate normally in size and HSE
//! sorts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{month_range, MonthStamp};
use crate::error::{Error, Result};
use crate::exposure::ExposureRecord;
use crate::ingest::CharacteristicsTable;
use crate::panel::{ReturnPanel, RiskFreeSeries, SecurityId};
use crate::stats::{percentile_of_sorted, ts_stat, TsStat};

/// Characteristics tables keyed by formation year.
pub type CharacteristicsByYear = BTreeMap<i32, CharacteristicsTable>;

// ---------------------------------------------------------------------------
// Sort specification
// ---------------------------------------------------------------------------

/// A characteristic stocks can be sorted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortVariable {
    /// Happiness search exposure (the estimated ΔSVI slope).
    Hse,
    /// June market capitalisation.
    Size,
    /// Book-to-market ratio; positive book equity only.
    Beme,
}

impl SortVariable {
    fn endpoint_labels(self) -> (&'static str, &'static str) {
        match self {
            SortVariable::Hse => ("Unhappy", "Happy"),
            SortVariable::Size => ("Small", "Big"),
            SortVariable::Beme => ("Low", "High"),
        }
    }

    /// Bucket labels `1..=k` with the endpoints named after the variable,
    /// e.g. `Unhappy, 2, .., 9, Happy` for a ten-way HSE sort.
    pub fn bucket_labels(self, k: usize) -> Vec<String> {
        let (low, high) = self.endpoint_labels();
        (1..=k)
            .map(|j| {
                if j == 1 {
                    low.to_string()
                } else if j == k {
                    high.to_string()
                } else {
                    j.to_string()
                }
            })
            .collect()
    }

    /// Label of the top-minus-bottom spread, e.g. `Happy-Unhappy`.
    pub fn spread_label(self) -> String {
        let (low, high) = self.endpoint_labels();
        format!("{high}-{low}")
    }
}

impl fmt::Display for SortVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SortVariable::Hse => "hse",
            SortVariable::Size => "size",
            SortVariable::Beme => "beme",
        })
    }
}

impl FromStr for SortVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hse" => Ok(SortVariable::Hse),
            "size" => Ok(SortVariable::Size),
            "beme" => Ok(SortVariable::Beme),
            other => Err(Error::validation(format!(
                "unknown sort variable `{other}` (expected hse, size, or beme)"
            ))),
        }
    }
}

/// Portfolio weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Market-cap weighted (default, matches the reported tables).
    #[default]
    Value,
    /// Equal weighted.
    Equal,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Value => "value",
            Weighting::Equal => "equal",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "value" => Ok(Weighting::Value),
            "equal" => Ok(Weighting::Equal),
            other => Err(Error::validation(format!(
                "unknown weighting `{other}` (expected value or equal)"
            ))),
        }
    }
}

/// Full sort specification: primary (inner) variable and bucket count,
/// optional secondary (outer) variable for conditional double sorts, and the
/// weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SortSpec {
    /// Variable of the (inner) sort.
    pub primary: SortVariable,
    /// Number of primary buckets; at least 2.
    pub n_primary: usize,
    /// Outer variable of a conditional double sort, if any.
    #[serde(default)]
    pub secondary: Option<SortVariable>,
    /// Number of outer buckets; present exactly when `secondary` is.
    #[serde(default)]
    pub n_secondary: Option<usize>,
    /// Portfolio weighting.
    #[serde(default)]
    pub weighting: Weighting,
}

impl SortSpec {
    /// Spec for a one-way sort.
    pub fn univariate(var: SortVariable, k: usize, weighting: Weighting) -> Result<Self> {
        let spec = SortSpec { primary: var, n_primary: k, secondary: None, n_secondary: None, weighting };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec for a conditional double sort: `outer` quintile-style buckets,
    /// then `inner` buckets within each.
    pub fn conditional(
        inner: SortVariable,
        n_inner: usize,
        outer: SortVariable,
        n_outer: usize,
        weighting: Weighting,
    ) -> Result<Self> {
        let spec = SortSpec {
            primary: inner,
            n_primary: n_inner,
            secondary: Some(outer),
            n_secondary: Some(n_outer),
            weighting,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the bucket-count and pairing invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n_primary < 2 {
            return Err(Error::validation(format!(
                "n_primary must be at least 2, got {}",
                self.n_primary
            )));
        }
        match (self.secondary, self.n_secondary) {
            (None, None) => {}
            (Some(sec), Some(k)) => {
                if k < 2 {
                    return Err(Error::validation(format!(
                        "n_secondary must be at least 2, got {k}"
                    )));
                }
                if sec == self.primary {
                    return Err(Error::validation(
                        "primary and secondary sort variables must differ",
                    ));
                }
            }
            _ => {
                return Err(Error::validation(
                    "secondary variable and n_secondary must be given together",
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sort primitives
// ---------------------------------------------------------------------------

/// Removes exactly one maximum-return and one minimum-return row from a
/// monthly cross-section, preserving the order of the survivors.
///
/// Ties break on security id: the minimum side removes the smallest id among
/// tied minima, the maximum side the largest id among tied maxima, so a fully
/// tied cross-section still loses one row from "each end".
pub fn trim_cross_section(rows: &[(SecurityId, f64)]) -> Result<Vec<(SecurityId, f64)>> {
    if rows.len() < 3 {
        return Err(Error::data(format!(
            "cross-section must have at least 3 rows to trim, got {}",
            rows.len()
        )));
    }
    if let Some((id, v)) = rows.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite return for {id} in cross-section ({v})")));
    }
    let cmp = |a: &(SecurityId, f64), b: &(SecurityId, f64)| {
        a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
    };
    let min_idx = (0..rows.len()).min_by(|&i, &j| cmp(&rows[i], &rows[j])).unwrap();
    let max_idx = (0..rows.len()).max_by(|&i, &j| cmp(&rows[i], &rows[j])).unwrap();
    debug_assert_ne!(min_idx, max_idx, "length >= 3 guarantees distinct extremes");
    Ok(rows
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != min_idx && i != max_idx)
        .map(|(_, r)| r.clone())
        .collect())
}

/// The `k - 1` ascending breakpoints splitting `values` into `k`
/// quantile buckets, computed with the shared interpolated-percentile rule.
pub fn quantile_breakpoints(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::validation(format!("bucket count must be at least 2, got {k}")));
    }
    if values.len() < k {
        return Err(Error::data(format!(
            "need at least {k} values for {k} buckets, got {}",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite sort value ({bad})")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..k)
        .map(|j| percentile_of_sorted(&sorted, 100.0 * j as f64 / k as f64))
        .collect()
}

/// Bucket index in `1..=k` for `value` given `k - 1` non-decreasing
/// breakpoints: bucket `j` covers `breakpoint[j-1] < value <= breakpoint[j]`
/// with virtual infinite ends, so values equal to a breakpoint go to the
/// bucket below it.
pub fn assign_bucket(value: f64, breakpoints: &[f64]) -> usize {
    1 + breakpoints.iter().filter(|&&b| b < value).count()
}

/// Value-weighted average `Σ(w·r)/Σw` of member excess returns.
///
/// Members must be non-empty with strictly positive weights. The result is
/// clamped into `[min member return, max member return]`, which makes the
/// bound exact and keeps a bucket of identical returns at exactly that
/// return.
pub fn value_weighted_return(members: &[(f64, f64)]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::data("value-weighted return of an empty membership"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &(r, w) in members {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::data(format!("portfolio weight must be finite and > 0, got {w}")));
        }
        if !r.is_finite() {
            return Err(Error::numeric(format!("non-finite member return ({r})")));
        }
        num += w * r;
        den += w;
        min = min.min(r);
        max = max.max(r);
    }
    Ok((num / den).clamp(min, max))
}

// ---------------------------------------------------------------------------
// Output types
// ---------------------------------------------------------------------------

/// Time-series averages of member characteristics for one portfolio.
/// `None` when no contributing formation had the data (e.g. BE/ME(+) when
/// every member had negative book equity).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AvgCharacteristics {
    /// Mean member HSE.
    pub hse: Option<f64>,
    /// Mean member BE/ME over positive-book-equity members only.
    pub beme_plus: Option<f64>,
    /// Mean member June market cap (currency units).
    pub mktcap: Option<f64>,
}

/// One portfolio's monthly excess-return series and averaged characteristics.
/// Spread portfolios hold the month-by-month top-minus-bottom series and
/// differences of the per-formation characteristic means.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSeries {
    /// Bucket label, e.g. `Unhappy`, `7`, `Happy`, or `Happy-Unhappy`.
    pub label: String,
    /// Monthly excess returns (fractions), keyed by month.
    pub returns: BTreeMap<MonthStamp, f64>,
    /// Time-series means of per-formation member averages.
    pub avg_characteristics: AvgCharacteristics,
}

impl PortfolioSeries {
    fn new(label: String) -> Self {
        PortfolioSeries { label, returns: BTreeMap::new(), avg_characteristics: AvgCharacteristics::default() }
    }

    /// Time-series stat of the return series; `None` below two months.
    pub fn stat(&self) -> Option<TsStat> {
        if self.returns.len() < 2 {
            return None;
        }
        let values: Vec<f64> = self.returns.values().copied().collect();
        ts_stat(&values).ok()
    }
}

/// Result of a one-way sort: `k` bucket portfolios plus the spread, with
/// per-portfolio stats and any per-year warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct SortTable {
    /// The spec that produced this table.
    pub spec: SortSpec,
    /// `n_primary` buckets followed by the spread portfolio.
    pub portfolios: Vec<PortfolioSeries>,
    /// Formation years that contributed.
    pub years_used: Vec<i32>,
    /// Skipped years/months with reasons, in deterministic order.
    pub warnings: Vec<String>,
}

impl SortTable {
    /// Per-portfolio stats aligned with `portfolios`.
    pub fn stats(&self) -> Vec<Option<TsStat>> {
        self.portfolios.iter().map(PortfolioSeries::stat).collect()
    }
}

/// Result of a conditional double sort: an outer × (inner + spread) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleSortTable {
    /// The spec that produced this table.
    pub spec: SortSpec,
    /// Outer bucket labels (rows), e.g. `Small, 2, 3, 4, Big`.
    pub outer_labels: Vec<String>,
    /// Inner bucket labels plus the spread label (columns).
    pub inner_labels: Vec<String>,
    /// `cells[row][col]`: inner portfolios then the row spread, per outer row.
    pub cells: Vec<Vec<PortfolioSeries>>,
    /// Formation years that contributed.
    pub years_used: Vec<i32>,
    /// Skipped years/buckets/months with reasons, in deterministic order.
    pub warnings: Vec<String>,
}

impl DoubleSortTable {
    /// Per-cell stats aligned with `cells`.
    pub fn stats(&self) -> Vec<Vec<Option<TsStat>>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(PortfolioSeries::stat).collect())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Formation plumbing
// ---------------------------------------------------------------------------

/// One formation-eligible security: exposure plus June data, with optional
/// book characteristics.
#[derive(Debug, Clone)]
struct Member {
    id: SecurityId,
    hse: f64,
    june_excess: f64,
    june_mktcap: f64,
    /// Raw BE/ME when a characteristics row exists.
    beme_raw: Option<f64>,
    /// Negative-book-equity flag when a characteristics row exists.
    be_dummy: Option<bool>,
}

impl Member {
    /// The member's value of a sort variable; `None` when not sortable on it
    /// (no book data, or negative book equity for BE/ME).
    fn sort_value(&self, var: SortVariable) -> Option<f64> {
        match var {
            SortVariable::Hse => Some(self.hse),
            SortVariable::Size => Some(self.june_mktcap),
            SortVariable::Beme => match (self.beme_raw, self.be_dummy) {
                (Some(ratio), Some(false)) => Some(ratio),
                _ => None,
            },
        }
    }
}

/// Exposure records grouped by June formation date, validated.
fn group_by_formation(exposures: &[ExposureRecord]) -> Result<BTreeMap<MonthStamp, Vec<&ExposureRecord>>> {
    let mut grouped: BTreeMap<MonthStamp, Vec<&ExposureRecord>> = BTreeMap::new();
    for rec in exposures {
        if !rec.formation.is_june() {
            return Err(Error::validation(format!(
                "exposure record for {} has non-June formation {}",
                rec.security, rec.formation
            )));
        }
        grouped.entry(rec.formation).or_default().push(rec);
    }
    for records in grouped.values_mut() {
        records.sort_by(|a, b| a.security.cmp(&b.security));
    }
    Ok(grouped)
}

/// Builds the June member list for one formation: exposure + June
/// observation, dropping the trimmed extremes of the June excess-return
/// cross-section. Returns `None` (with a warning pushed) when the June
/// cross-section is too small to trim.
fn formation_members(
    records: &[&ExposureRecord],
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    chars: Option<&CharacteristicsTable>,
    formation: MonthStamp,
    warnings: &mut Vec<String>,
) -> Result<Option<Vec<Member>>> {
    let mut members = Vec::new();
    for rec in records {
        let Some(obs) = panel.observation(&rec.security, formation) else {
            continue;
        };
        let rf_june = rf.require(formation)?;
        let row = chars.and_then(|t| t.get(&rec.security));
        members.push(Member {
            id: rec.security.clone(),
            hse: rec.beta_svi,
            june_excess: obs.ret - rf_june,
            june_mktcap: obs.mktcap,
            beme_raw: row.map(|r| r.beme_raw),
            be_dummy: row.map(|r| r.be_dummy),
        });
    }
    if members.len() < 3 {
        warnings.push(format!(
            "formation {formation}: June cross-section of {} too small to trim; year skipped",
            members.len()
        ));
        return Ok(None);
    }
    let june_rows: Vec<(SecurityId, f64)> =
        members.iter().map(|m| (m.id.clone(), m.june_excess)).collect();
    let kept: BTreeSet<SecurityId> =
        trim_cross_section(&june_rows)?.into_iter().map(|(id, _)| id).collect();
    members.retain(|m| kept.contains(&m.id));
    Ok(Some(members))
}

/// Accumulates one holding year of monthly cell returns into `cells`.
/// `assignment` maps each member to a flat cell index.
fn accumulate_holding_year(
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    assignment: &BTreeMap<SecurityId, usize>,
    formation: MonthStamp,
    weighting: Weighting,
    cells: &mut [BTreeMap<MonthStamp, f64>],
    warnings: &mut Vec<String>,
) -> Result<()> {
    let months = month_range(formation.next(), formation.plus_months(12));
    for m in months {
        let mut rows: Vec<(&SecurityId, f64, f64)> = Vec::new();
        for id in assignment.keys() {
            if let Some(obs) = panel.observation(id, m) {
                rows.push((id, obs.ret, obs.mktcap));
            }
        }
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 3 {
            warnings.push(format!(
                "month {m}: cross-section of {} too small to trim; month skipped",
                rows.len()
            ));
            continue;
        }
        let rf_m = rf.require(m)?;
        let excess: Vec<(SecurityId, f64)> =
            rows.iter().map(|(id, ret, _)| ((*id).clone(), ret - rf_m)).collect();
        let kept: BTreeSet<SecurityId> =
            trim_cross_section(&excess)?.into_iter().map(|(id, _)| id).collect();

        let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cells.len()];
        for (id, ret, cap) in &rows {
            if kept.contains(*id) {
                let weight = match weighting {
                    Weighting::Value => *cap,
                    Weighting::Equal => 1.0,
                };
                groups[assignment[*id]].push((ret - rf_m, weight));
            }
        }
        for (cell, group) in groups.iter().enumerate() {
            if !group.is_empty() {
                cells[cell].insert(m, value_weighted_return(group)?);
            }
        }
    }
    Ok(())
}

/// Per-formation characteristic means over a set of members.
fn member_averages(members: &[&Member]) -> AvgCharacteristics {
    let hse: Vec<f64> = members.iter().map(|m| m.hse).collect();
    let caps: Vec<f64> = members.iter().map(|m| m.june_mktcap).collect();
    let beme: Vec<f64> = members
        .iter()
        .filter_map(|m| match (m.beme_raw, m.be_dummy) {
            (Some(r), Some(false)) => Some(r),
            _ => None,
        })
        .collect();
    let avg = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    AvgCharacteristics { hse: avg(&hse), beme_plus: avg(&beme), mktcap: avg(&caps) }
}

/// Collapses per-formation values into a time-series mean.
fn collapse(series: &[f64]) -> Option<f64> {
    if series.is_empty() {
        None
    } else {
        Some(series.iter().sum::<f64>() / series.len() as f64)
    }
}

/// Tracks per-formation characteristic means for one portfolio.
#[derive(Default, Clone)]
struct CharAccumulator {
    hse: Vec<f64>,
    beme_plus: Vec<f64>,
    mktcap: Vec<f64>,
}

impl CharAccumulator {
    fn push(&mut self, avg: &AvgCharacteristics) {
        if let Some(v) = avg.hse {
            self.hse.push(v);
        }
        if let Some(v) = avg.beme_plus {
            self.beme_plus.push(v);
        }
        if let Some(v) = avg.mktcap {
            self.mktcap.push(v);
        }
    }

    /// Pushes the top-minus-bottom difference of two formation averages.
    fn push_diff(&mut self, top: &AvgCharacteristics, bottom: &AvgCharacteristics) {
        if let (Some(t), Some(b)) = (top.hse, bottom.hse) {
            self.hse.push(t - b);
        }
        if let (Some(t), Some(b)) = (top.beme_plus, bottom.beme_plus) {
            self.beme_plus.push(t - b);
        }
        if let (Some(t), Some(b)) = (top.mktcap, bottom.mktcap) {
            self.mktcap.push(t - b);
        }
    }

    fn finish(&self) -> AvgCharacteristics {
        AvgCharacteristics {
            hse: collapse(&self.hse),
            beme_plus: collapse(&self.beme_plus),
            mktcap: collapse(&self.mktcap),
        }
    }
}

/// Month-by-month difference of two return series (months present in both).
fn spread_series(
    top: &BTreeMap<MonthStamp, f64>,
    bottom: &BTreeMap<MonthStamp, f64>,
) -> BTreeMap<MonthStamp, f64> {
    top.iter()
        .filter_map(|(m, t)| bottom.get(m).map(|b| (*m, t - b)))
        .collect()
}

// ---------------------------------------------------------------------------
// Univariate sort
// ---------------------------------------------------------------------------

/// Runs a one-way sort (e.g. HSE deciles) across every formation year present
/// in `exposures`.
///
/// Members need an exposure record and a June observation; sorting on BE/ME
/// additionally needs positive book equity from `characteristics` (pass an
/// empty map when sorting on HSE or size and book data is unavailable — the
/// BE/ME(+) column is then reported as missing). Years whose trimmed June
/// cross-section is smaller than the bucket count are skipped with a warning.
pub fn run_univariate_sort(
    exposures: &[ExposureRecord],
    characteristics: &CharacteristicsByYear,
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    spec: &SortSpec,
) -> Result<SortTable> {
    spec.validate()?;
    if spec.secondary.is_some() {
        return Err(Error::validation(
            "univariate sort cannot take a secondary variable; use the conditional double sort",
        ));
    }
    let k = spec.n_primary;
    let grouped = group_by_formation(exposures)?;

    let mut cells: Vec<BTreeMap<MonthStamp, f64>> = vec![BTreeMap::new(); k];
    let mut chars_acc: Vec<CharAccumulator> = vec![CharAccumulator::default(); k + 1];
    let mut warnings = Vec::new();
    let mut years_used = Vec::new();

    for (&formation, records) in &grouped {
        let chars = characteristics.get(&formation.year());
        let Some(mut members) =
            formation_members(records, panel, rf, chars, formation, &mut warnings)?
        else {
            continue;
        };
        // Sorting on BE/ME restricts the universe to positive-book-equity firms.
        if spec.primary == SortVariable::Beme {
            members.retain(|m| m.sort_value(SortVariable::Beme).is_some());
        }
        if members.len() < k {
            warnings.push(format!(
                "formation {formation}: {} sortable securities for {k} buckets; year skipped",
                members.len()
            ));
            continue;
        }
        let values: Vec<f64> =
            members.iter().map(|m| m.sort_value(spec.primary).unwrap()).collect();
        let breakpoints = quantile_breakpoints(&values, k)?;
        let assignment: BTreeMap<SecurityId, usize> = members
            .iter()
            .map(|m| {
                let bucket = assign_bucket(m.sort_value(spec.primary).unwrap(), &breakpoints);
                (m.id.clone(), bucket - 1)
            })
            .collect();

        accumulate_holding_year(panel, rf, &assignment, formation, spec.weighting, &mut cells, &mut warnings)?;

        // Per-formation characteristic means, then the top-bottom difference
        // for the spread row.
        let mut bucket_avgs: Vec<Option<AvgCharacteristics>> = vec![None; k];
        for bucket in 0..k {
            let bucket_members: Vec<&Member> = members
                .iter()
                .filter(|m| assignment[&m.id] == bucket)
                .collect();
            if !bucket_members.is_empty() {
                let avg = member_averages(&bucket_members);
                chars_acc[bucket].push(&avg);
                bucket_avgs[bucket] = Some(avg);
            }
        }
        if let (Some(top), Some(bottom)) = (&bucket_avgs[k - 1], &bucket_avgs[0]) {
            chars_acc[k].push_diff(top, bottom);
        }
        years_used.push(formation.year());
    }

    let labels = spec.primary.bucket_labels(k);
    let mut portfolios: Vec<PortfolioSeries> = Vec::with_capacity(k + 1);
    for (bucket, label) in labels.into_iter().enumerate() {
        let mut p = PortfolioSeries::new(label);
        p.returns = std::mem::take(&mut cells[bucket]);
        p.avg_characteristics = chars_acc[bucket].finish();
        portfolios.push(p);
    }
    let mut spread = PortfolioSeries::new(spec.primary.spread_label());
    spread.returns = spread_series(&portfolios[k - 1].returns, &portfolios[0].returns);
    spread.avg_characteristics = chars_acc[k].finish();
    portfolios.push(spread);

    Ok(SortTable { spec: *spec, portfolios, years_used, warnings })
}

// ---------------------------------------------------------------------------
// Conditional double sort
// ---------------------------------------------------------------------------

/// Runs a conditional double sort: outer buckets on the secondary variable
/// over the whole trimmed June cross-section, then inner buckets on the
/// primary variable *within each outer bucket from its members only*.
///
/// Rows are outer buckets; columns are inner buckets plus the per-row
/// top-minus-bottom spread. Outer buckets with fewer members than the inner
/// bucket count in some year are skipped for that year with a warning.
pub fn run_conditional_double_sort(
    exposures: &[ExposureRecord],
    characteristics: &CharacteristicsByYear,
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    spec: &SortSpec,
) -> Result<DoubleSortTable> {
    spec.validate()?;
    let (Some(outer_var), Some(n_outer)) = (spec.secondary, spec.n_secondary) else {
        return Err(Error::validation(
            "conditional double sort needs a secondary variable; use the univariate sort",
        ));
    };
    let n_inner = spec.n_primary;
    let n_cells = n_outer * n_inner;
    let grouped = group_by_formation(exposures)?;

    let mut cells: Vec<BTreeMap<MonthStamp, f64>> = vec![BTreeMap::new(); n_cells];
    let mut chars_acc: Vec<CharAccumulator> = vec![CharAccumulator::default(); n_outer * (n_inner + 1)];
    let mut warnings = Vec::new();
    let mut years_used = Vec::new();

    for (&formation, records) in &grouped {
        let chars = characteristics.get(&formation.year());
        let Some(mut members) =
            formation_members(records, panel, rf, chars, formation, &mut warnings)?
        else {
            continue;
        };
        // Members must be sortable on both variables (drops negative-BE firms
        // from BE/ME-involved sorts).
        members.retain(|m| {
            m.sort_value(outer_var).is_some() && m.sort_value(spec.primary).is_some()
        });
        if members.len() < n_outer {
            warnings.push(format!(
                "formation {formation}: {} sortable securities for {n_outer} outer buckets; year skipped",
                members.len()
            ));
            continue;
        }
        let outer_values: Vec<f64> =
            members.iter().map(|m| m.sort_value(outer_var).unwrap()).collect();
        let outer_bps = quantile_breakpoints(&outer_values, n_outer)?;

        let mut assignment: BTreeMap<SecurityId, usize> = BTreeMap::new();
        let mut cell_members: Vec<Vec<&Member>> = vec![Vec::new(); n_cells];
        for ob in 0..n_outer {
            // Conditional step: the inner breakpoints only ever see this
            // outer bucket's members.
            let bucket_members: Vec<&Member> = members
                .iter()
                .filter(|m| assign_bucket(m.sort_value(outer_var).unwrap(), &outer_bps) == ob + 1)
                .collect();
            if bucket_members.len() < n_inner {
                warnings.push(format!(
                    "formation {formation}: outer bucket {} has {} members for {n_inner} inner buckets; bucket skipped",
                    ob + 1,
                    bucket_members.len()
                ));
                continue;
            }
            let inner_values: Vec<f64> = bucket_members
                .iter()
                .map(|m| m.sort_value(spec.primary).unwrap())
                .collect();
            let inner_bps = quantile_breakpoints(&inner_values, n_inner)?;
            for m in bucket_members {
                let ib = assign_bucket(m.sort_value(spec.primary).unwrap(), &inner_bps) - 1;
                let cell = ob * n_inner + ib;
                assignment.insert(m.id.clone(), cell);
                cell_members[cell].push(m);
            }
        }
        if assignment.is_empty() {
            continue;
        }

        accumulate_holding_year(panel, rf, &assignment, formation, spec.weighting, &mut cells, &mut warnings)?;

        for ob in 0..n_outer {
            let mut row_avgs: Vec<Option<AvgCharacteristics>> = vec![None; n_inner];
            for ib in 0..n_inner {
                let ms = &cell_members[ob * n_inner + ib];
                if !ms.is_empty() {
                    let avg = member_averages(ms);
                    chars_acc[ob * (n_inner + 1) + ib].push(&avg);
                    row_avgs[ib] = Some(avg);
                }
            }
            if let (Some(top), Some(bottom)) = (&row_avgs[n_inner - 1], &row_avgs[0]) {
                chars_acc[ob * (n_inner + 1) + n_inner].push_diff(top, bottom);
            }
        }
        years_used.push(formation.year());
    }

    let outer_labels = outer_var.bucket_labels(n_outer);
    let inner_bucket_labels = spec.primary.bucket_labels(n_inner);
    let mut inner_labels = inner_bucket_labels.clone();
    inner_labels.push(spec.primary.spread_label());

    let mut grid: Vec<Vec<PortfolioSeries>> = Vec::with_capacity(n_outer);
    for ob in 0..n_outer {
        let mut row: Vec<PortfolioSeries> = Vec::with_capacity(n_inner + 1);
        for (ib, label) in inner_bucket_labels.iter().enumerate() {
            let mut p = PortfolioSeries::new(label.clone());
            p.returns = std::mem::take(&mut cells[ob * n_inner + ib]);
            p.avg_characteristics = chars_acc[ob * (n_inner + 1) + ib].finish();
            row.push(p);
        }
        let mut spread = PortfolioSeries::new(spec.primary.spread_label());
        spread.returns = spread_series(&row[n_inner - 1].returns, &row[0].returns);
        spread.avg_characteristics = chars_acc[ob * (n_inner + 1) + n_inner].finish();
        row.push(spread);
        grid.push(row);
    }

    Ok(DoubleSortTable {
        spec: *spec,
        outer_labels,
        inner_labels,
        cells: grid,
        years_used,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_characteristics;
    use crate::panel::BookEquityRecord;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ym(year: i32, month: u32) -> MonthStamp {
        MonthStamp::new(year, month).unwrap()
    }

    fn sid(s: &str) -> SecurityId {
        SecurityId::new(s).unwrap()
    }

    // -- trim ---------------------------------------------------------------

    #[test]
    fn trim_removes_unique_extremes() {
        let rows = vec![
            (sid("A"), 0.01),
            (sid("B"), 0.50),
            (sid("C"), -0.40),
            (sid("D"), 0.02),
        ];
        let kept = trim_cross_section(&rows).unwrap();
        assert_eq!(kept, vec![(sid("A"), 0.01), (sid("D"), 0.02)]);
    }

    #[test]
    fn trim_breaks_full_ties_by_id() {
        let rows = vec![(sid("A"), 0.01), (sid("B"), 0.01), (sid("C"), 0.01)];
        let kept = trim_cross_section(&rows).unwrap();
        // Min side drops the smallest id, max side the largest.
        assert_eq!(kept, vec![(sid("B"), 0.01)]);
    }

    #[test]
    fn trim_needs_three_rows() {
        assert!(trim_cross_section(&[(sid("A"), 0.0), (sid("B"), 0.1)]).is_err());
    }

    #[test]
    fn trim_caps_output_at_second_largest() {
        let rows: Vec<(SecurityId, f64)> = (0..100)
            .map(|i| (sid(&format!("S{i:03}")), ((i * 37) % 100) as f64 / 100.0))
            .collect();
        let kept = trim_cross_section(&rows).unwrap();
        assert_eq!(kept.len(), 98);
        let mut values: Vec<f64> = rows.iter().map(|r| r.1).collect();
        values.sort_by(f64::total_cmp);
        let second_largest = values[98];
        let second_smallest = values[1];
        for (_, v) in &kept {
            assert!(*v <= second_largest && *v >= second_smallest);
        }
    }

    // -- breakpoints & assignment ------------------------------------------

    #[test]
    fn breakpoints_on_singleton_deciles() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let bps = quantile_breakpoints(&values, 10).unwrap();
        assert_eq!(bps.len(), 9);
        let mut counts = vec![0usize; 10];
        for v in &values {
            counts[assign_bucket(*v, &bps) - 1] += 1;
        }
        assert_eq!(counts, vec![1; 10]);
    }

    #[test]
    fn breakpoints_match_interpolated_percentiles() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let bps = quantile_breakpoints(&values, 5).unwrap();
        let expected = [20.8, 40.6, 60.4, 80.2];
        for (b, e) in bps.iter().zip(expected) {
            assert_relative_eq!(*b, e, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_values_all_land_in_bucket_one() {
        let values = vec![3.0; 20];
        let bps = quantile_breakpoints(&values, 5).unwrap();
        assert!(bps.iter().all(|&b| b == 3.0));
        for v in &values {
            assert_eq!(assign_bucket(*v, &bps), 1);
        }
    }

    #[test]
    fn breakpoints_validate_inputs() {
        assert!(quantile_breakpoints(&[1.0, 2.0], 5).is_err());
        assert!(quantile_breakpoints(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn assignment_half_open_rule() {
        let bps = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(assign_bucket(0.5, &bps), 1);
        assert_eq!(assign_bucket(2.0, &bps), 2); // equal to the 2nd breakpoint
        assert_eq!(assign_bucket(9.9, &bps), 5);
    }

    #[test]
    fn uniform_hundred_into_ten_equal_buckets() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let bps = quantile_breakpoints(&values, 10).unwrap();
        let mut counts = vec![0usize; 10];
        for v in &values {
            counts[assign_bucket(*v, &bps) - 1] += 1;
        }
        assert_eq!(counts, vec![10; 10]);
    }

    // -- value weighting ----------------------------------------------------

    #[test]
    fn vw_singleton_and_hand_example() {
        assert_eq!(value_weighted_return(&[(0.02, 5.0)]).unwrap(), 0.02);
        assert_relative_eq!(
            value_weighted_return(&[(0.10, 1.0), (0.00, 3.0)]).unwrap(),
            0.025,
            max_relative = 1e-14
        );
    }

    #[test]
    fn vw_equal_weights_is_arithmetic_mean() {
        let members = [(0.01, 2.0), (0.03, 2.0), (0.05, 2.0)];
        assert_relative_eq!(value_weighted_return(&members).unwrap(), 0.03, max_relative = 1e-14);
    }

    #[test]
    fn vw_rejects_empty_and_bad_weights() {
        assert!(value_weighted_return(&[]).is_err());
        assert!(value_weighted_return(&[(0.01, 0.0)]).is_err());
        assert!(value_weighted_return(&[(0.01, -1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn vw_stays_within_member_bounds(
            members in proptest::collection::vec((-0.5f64..0.5, 1e-3f64..1e12), 1..50)
        ) {
            let vw = value_weighted_return(&members).unwrap();
            let min = members.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
            let max = members.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(vw >= min && vw <= max);
        }

        #[test]
        fn identical_member_returns_come_back_exactly(
            r in -0.5f64..0.5,
            weights in proptest::collection::vec(1e-3f64..1e12, 1..30)
        ) {
            let members: Vec<(f64, f64)> = weights.iter().map(|&w| (r, w)).collect();
            prop_assert_eq!(value_weighted_return(&members).unwrap(), r);
        }
    }

    // -- full sorts ----------------------------------------------------------

    /// One-formation fixture: 12 regular securities with HSE 1..12 and
    /// constant monthly returns 0.001 * hse, plus 2 June-outlier securities
    /// that the June trim removes before breakpoints.
    struct Fixture {
        exposures: Vec<ExposureRecord>,
        panel: ReturnPanel,
        rf: RiskFreeSeries,
    }

    fn fixture() -> Fixture {
        let formation = ym(2020, 6);
        let mut exposures = Vec::new();
        let mut rows = Vec::new();
        for i in 1..=12 {
            let id = sid(&format!("R{i:02}"));
            exposures.push(ExposureRecord {
                security: id.clone(),
                formation,
                beta_svi: i as f64,
                alpha: 0.0,
                n_obs: 72,
            });
            // June observation plus the full holding year.
            rows.push((id.clone(), formation, 0.001 * i as f64, 1e8));
            for m in month_range(ym(2020, 7), ym(2021, 6)) {
                rows.push((id.clone(), m, 0.001 * i as f64, 1e8));
            }
        }
        // June outliers: extreme June returns, no holding-year data.
        for (name, june_ret, hse) in [("T1", 1.0, 0.5), ("T2", -1.0, -0.5)] {
            let id = sid(name);
            exposures.push(ExposureRecord {
                security: id.clone(),
                formation,
                beta_svi: hse,
                alpha: 0.0,
                n_obs: 72,
            });
            rows.push((id, formation, june_ret, 1e8));
        }
        let panel = ReturnPanel::from_observations(rows).unwrap();
        let rf = RiskFreeSeries::from_rows(
            month_range(ym(2020, 6), ym(2021, 6)).into_iter().map(|m| (m, 0.0)),
        )
        .unwrap();
        Fixture { exposures, panel, rf }
    }

    fn decile_spec() -> SortSpec {
        SortSpec::univariate(SortVariable::Hse, 10, Weighting::Value).unwrap()
    }

    #[test]
    fn univariate_sort_shape_and_values() {
        let fx = fixture();
        let table = run_univariate_sort(
            &fx.exposures,
            &BTreeMap::new(),
            &fx.panel,
            &fx.rf,
            &decile_spec(),
        )
        .unwrap();

        // 10 buckets plus the spread row.
        assert_eq!(table.portfolios.len(), 11);
        assert_eq!(table.portfolios[0].label, "Unhappy");
        assert_eq!(table.portfolios[9].label, "Happy");
        assert_eq!(table.portfolios[10].label, "Happy-Unhappy");
        assert!(table.warnings.is_empty(), "{:?}", table.warnings);
        assert_eq!(table.years_used, vec![2020]);

        // HSE 1..12 split into deciles: {1,2} then singletons then {11,12};
        // the monthly trim then drops securities 1 and 12 each month, so the
        // bottom bucket holds security 2 and the top holds security 11.
        let bottom = &table.portfolios[0];
        let top = &table.portfolios[9];
        assert_eq!(bottom.returns.len(), 12);
        for v in bottom.returns.values() {
            assert_relative_eq!(*v, 0.002, max_relative = 1e-12);
        }
        for v in top.returns.values() {
            assert_relative_eq!(*v, 0.011, max_relative = 1e-12);
        }

        // Spread is exactly top minus bottom month by month.
        let spread = &table.portfolios[10];
        assert_eq!(spread.returns.len(), 12);
        for (m, s) in &spread.returns {
            assert_eq!(*s, top.returns[m] - bottom.returns[m]);
        }

        // Average characteristics come from the assigned members (security 1
        // stays a member; only the monthly return drops it).
        assert_relative_eq!(bottom.avg_characteristics.hse.unwrap(), 1.5, max_relative = 1e-12);
        assert_relative_eq!(top.avg_characteristics.hse.unwrap(), 11.5, max_relative = 1e-12);
        assert_relative_eq!(spread.avg_characteristics.hse.unwrap(), 10.0, max_relative = 1e-12);
        assert_eq!(bottom.avg_characteristics.beme_plus, None); // no book data supplied
        assert_relative_eq!(bottom.avg_characteristics.mktcap.unwrap(), 1e8, max_relative = 1e-12);
    }

    #[test]
    fn univariate_sort_partitions_each_month() {
        let fx = fixture();
        let table = run_univariate_sort(
            &fx.exposures,
            &BTreeMap::new(),
            &fx.panel,
            &fx.rf,
            &decile_spec(),
        )
        .unwrap();
        // Every holding month: 12 present, 2 trimmed, 10 bucketed.
        for m in month_range(ym(2020, 7), ym(2021, 6)) {
            let total: usize = table.portfolios[..10]
                .iter()
                .map(|p| usize::from(p.returns.contains_key(&m)))
                .sum();
            assert_eq!(total, 10, "month {m}");
        }
    }

    #[test]
    fn identical_returns_give_equal_buckets_and_zero_spread() {
        let formation = ym(2020, 6);
        let mut exposures = Vec::new();
        let mut rows = Vec::new();
        // 14 securities so that the June trim leaves 12 members and the
        // monthly tie-trim still leaves every decile populated.
        for i in 1..=14 {
            let id = sid(&format!("S{i:02}"));
            exposures.push(ExposureRecord {
                security: id.clone(),
                formation,
                beta_svi: i as f64,
                alpha: 0.0,
                n_obs: 48,
            });
            for m in month_range(formation, ym(2021, 6)) {
                // Identical returns, varying caps to exercise the weighting.
                rows.push((id.clone(), m, 0.004, 1e7 * i as f64));
            }
        }
        let panel = ReturnPanel::from_observations(rows).unwrap();
        let rf = RiskFreeSeries::from_rows(
            month_range(formation, ym(2021, 6)).into_iter().map(|m| (m, 0.001)),
        )
        .unwrap();
        let table = run_univariate_sort(&exposures, &BTreeMap::new(), &panel, &rf, &decile_spec())
            .unwrap();

        for p in &table.portfolios[..10] {
            for v in p.returns.values() {
                assert_eq!(*v, 0.004 - 0.001, "bucket {} must return exactly the common excess", p.label);
            }
        }
        let spread_stat = table.portfolios[10].stat().unwrap();
        assert_eq!(spread_stat.mean, 0.0);
        assert!(spread_stat.tstat.abs() < 1e-10);
        assert!(spread_stat.zero_variance);
    }

    #[test]
    fn sort_is_permutation_invariant() {
        let fx = fixture();
        let table_a = run_univariate_sort(
            &fx.exposures,
            &BTreeMap::new(),
            &fx.panel,
            &fx.rf,
            &decile_spec(),
        )
        .unwrap();
        let mut reversed = fx.exposures.clone();
        reversed.reverse();
        let table_b =
            run_univariate_sort(&reversed, &BTreeMap::new(), &fx.panel, &fx.rf, &decile_spec())
                .unwrap();
        assert_eq!(table_a, table_b);
    }

    #[test]
    fn monotone_transform_of_sort_variable_preserves_assignments() {
        let fx = fixture();
        let table_a = run_univariate_sort(
            &fx.exposures,
            &BTreeMap::new(),
            &fx.panel,
            &fx.rf,
            &decile_spec(),
        )
        .unwrap();
        // Doubling is exact in floating point, so tables must match exactly
        // except for the HSE averages (which double).
        let doubled: Vec<ExposureRecord> = fx
            .exposures
            .iter()
            .map(|r| ExposureRecord { beta_svi: 2.0 * r.beta_svi, ..r.clone() })
            .collect();
        let table_b =
            run_univariate_sort(&doubled, &BTreeMap::new(), &fx.panel, &fx.rf, &decile_spec())
                .unwrap();
        for (a, b) in table_a.portfolios.iter().zip(&table_b.portfolios) {
            assert_eq!(a.returns, b.returns);
            assert_eq!(
                b.avg_characteristics.hse.unwrap(),
                2.0 * a.avg_characteristics.hse.unwrap()
            );
        }
    }

    #[test]
    fn sparse_year_is_skipped_with_warning() {
        let formation = ym(2020, 6);
        let mut exposures = Vec::new();
        let mut rows = Vec::new();
        for i in 1..=5 {
            let id = sid(&format!("S{i}"));
            exposures.push(ExposureRecord {
                security: id.clone(),
                formation,
                beta_svi: i as f64,
                alpha: 0.0,
                n_obs: 48,
            });
            for m in month_range(formation, ym(2020, 9)) {
                rows.push((id.clone(), m, 0.001 * i as f64, 1e8));
            }
        }
        let panel = ReturnPanel::from_observations(rows).unwrap();
        let rf = RiskFreeSeries::from_rows(
            month_range(formation, ym(2020, 9)).into_iter().map(|m| (m, 0.0)),
        )
        .unwrap();
        // 5 members, minus 2 June-trimmed, leaves 3 < 10 buckets.
        let table = run_univariate_sort(&exposures, &BTreeMap::new(), &panel, &rf, &decile_spec())
            .unwrap();
        assert!(table.years_used.is_empty());
        assert_eq!(table.warnings.len(), 1);
        assert!(table.warnings[0].contains("year skipped"));
        assert!(table.portfolios.iter().all(|p| p.returns.is_empty()));
    }

    #[test]
    fn beme_sort_excludes_negative_book_equity() {
        let formation = ym(2020, 6);
        let months = month_range(formation, ym(2021, 6));
        let mut exposures = Vec::new();
        let mut rows = Vec::new();
        let mut books = Vec::new();
        for i in 1..=8 {
            let id = sid(&format!("S{i}"));
            exposures.push(ExposureRecord {
                security: id.clone(),
                formation,
                beta_svi: i as f64,
                alpha: 0.0,
                n_obs: 48,
            });
            for &m in &months {
                rows.push((id.clone(), m, 0.001 * i as f64, 1e8));
            }
            // Securities 7 and 8 carry negative book equity.
            let equity = if i <= 6 { 50.0 * i as f64 } else { -10.0 };
            books.push(BookEquityRecord::new(id, 2019, equity, 0.0, 100.0).unwrap());
        }
        let panel = ReturnPanel::from_observations(rows).unwrap();
        let rf =
            RiskFreeSeries::from_rows(months.iter().map(|&m| (m, 0.0))).unwrap();
        let chars = build_characteristics(&panel, &books, formation, 0.0).unwrap();
        let by_year: CharacteristicsByYear = [(2020, chars)].into();

        let spec = SortSpec::univariate(SortVariable::Beme, 2, Weighting::Equal).unwrap();
        let table = run_univariate_sort(&exposures, &by_year, &panel, &rf, &spec).unwrap();

        // June trim removes S1 (min) and S8 (max); S7 is dropped for negative
        // BE; securities 2..6 remain, sorted on BE/ME = 0.5 * i. The median
        // breakpoint is 2.0 and S4 sits exactly on it, so it lands in the
        // lower bucket: {2,3,4} (mean HSE 3.0) and {5,6} (mean HSE 5.5).
        let member_hses: f64 = table.portfolios[..2]
            .iter()
            .filter_map(|p| p.avg_characteristics.hse)
            .sum();
        assert_relative_eq!(member_hses, 8.5, max_relative = 1e-12);
        // BE/ME(+) averages cover only positive-BE members by construction.
        for p in &table.portfolios[..2] {
            assert!(p.avg_characteristics.beme_plus.unwrap() > 0.0);
        }
    }

    // -- conditional double sort ---------------------------------------------

    /// 27 securities in 5 size groups of (6,5,5,5,6); the two extra members
    /// of groups 1 and 5 are June outliers that the trim removes, leaving a
    /// clean 5×5 grid of singleton cells. Returns are
    /// `0.01*outer + 0.001*inner`.
    fn double_fixture() -> (Vec<ExposureRecord>, ReturnPanel, RiskFreeSeries) {
        let formation = ym(2020, 6);
        let months = month_range(ym(2020, 7), ym(2021, 6));
        let mut exposures = Vec::new();
        let mut rows = Vec::new();
        let group_sizes = [6usize, 5, 5, 5, 6];
        for (g, &size) in group_sizes.iter().enumerate() {
            for j in 0..size {
                let outlier = (g == 0 && j == 5) || (g == 4 && j == 5);
                let id = sid(&format!("G{}N{}", g + 1, j + 1));
                let hse = if outlier { 2.5 } else { (j + 1) as f64 };
                exposures.push(ExposureRecord {
                    security: id.clone(),
                    formation,
                    beta_svi: hse,
                    alpha: 0.0,
                    n_obs: 60,
                });
                let cap = (g + 1) as f64 * 1e9 + j as f64 * 1e3;
                let june_ret = if g == 0 && j == 5 {
                    5.0
                } else if g == 4 && j == 5 {
                    -5.0
                } else {
                    0.0
                };
                rows.push((id.clone(), formation, june_ret, cap));
                if !outlier {
                    let ret = 0.01 * (g + 1) as f64 + 0.001 * (j + 1) as f64;
                    for &m in &months {
                        rows.push((id.clone(), m, ret, cap));
                    }
                }
            }
        }
        let panel = ReturnPanel::from_observations(rows).unwrap();
        let rf = RiskFreeSeries::from_rows(
            month_range(formation, ym(2021, 6)).into_iter().map(|m| (m, 0.0)),
        )
        .unwrap();
        (exposures, panel, rf)
    }

    fn double_spec() -> SortSpec {
        SortSpec::conditional(SortVariable::Hse, 5, SortVariable::Size, 5, Weighting::Value)
            .unwrap()
    }

    #[test]
    fn double_sort_shape_and_row_spreads() {
        let (exposures, panel, rf) = double_fixture();
        let table =
            run_conditional_double_sort(&exposures, &BTreeMap::new(), &panel, &rf, &double_spec())
                .unwrap();

        assert_eq!(table.outer_labels, vec!["Small", "2", "3", "4", "Big"]);
        assert_eq!(table.inner_labels, vec!["Unhappy", "2", "3", "4", "Happy", "Happy-Unhappy"]);
        assert_eq!(table.cells.len(), 5);
        for row in &table.cells {
            assert_eq!(row.len(), 6);
        }
        assert!(table.warnings.is_empty(), "{:?}", table.warnings);

        // Middle rows: each cell is a singleton, and the monthly trim removes
        // the global extremes which sit in cells (1,1) and (5,5).
        for ob in 1..4 {
            let row = &table.cells[ob];
            for ib in 0..5 {
                let expected = 0.01 * (ob + 1) as f64 + 0.001 * (ib + 1) as f64;
                assert_eq!(row[ib].returns.len(), 12);
                for v in row[ib].returns.values() {
                    assert_relative_eq!(*v, expected, max_relative = 1e-12);
                }
            }
            let spread = &row[5];
            assert_eq!(spread.returns.len(), 12);
            for (m, s) in &spread.returns {
                assert_eq!(*s, row[4].returns[m] - row[0].returns[m]);
            }
            assert_relative_eq!(
                spread.stat().unwrap().mean,
                0.004,
                max_relative = 1e-10
            );
        }

        // The trimmed corners lose their only member every month.
        assert!(table.cells[0][0].returns.is_empty());
        assert!(table.cells[4][4].returns.is_empty());
    }

    #[test]
    fn inner_breakpoints_ignore_foreign_bucket_values() {
        let (exposures, panel, rf) = double_fixture();
        let base =
            run_conditional_double_sort(&exposures, &BTreeMap::new(), &panel, &rf, &double_spec())
                .unwrap();

        // Poison the HSE of every security outside size group 3. If the
        // conditional inner cut leaked across outer buckets, row 3 would move.
        let poisoned: Vec<ExposureRecord> = exposures
            .iter()
            .map(|r| {
                let group3 = r.security.as_str().starts_with("G3");
                ExposureRecord {
                    beta_svi: if group3 { r.beta_svi } else { r.beta_svi + 1000.0 },
                    ..r.clone()
                }
            })
            .collect();
        let shifted =
            run_conditional_double_sort(&poisoned, &BTreeMap::new(), &panel, &rf, &double_spec())
                .unwrap();

        for ib in 0..6 {
            assert_eq!(
                base.cells[2][ib].returns, shifted.cells[2][ib].returns,
                "row 3 column {ib} changed when foreign buckets were poisoned"
            );
        }
    }

    #[test]
    fn small_outer_bucket_is_skipped_with_warning() {
        // Constant market caps collapse the outer sort: every member lands in
        // outer bucket 1 and the remaining outer buckets have zero members,
        // fewer than the inner bucket count.
        let formation = ym(2020, 6);
        let months = month_range(ym(2020, 7), ym(2021, 6));
        let mut exposures = Vec::new();
        let mut rows = Vec::new();
        for i in 1..=9 {
            let id = sid(&format!("S{i}"));
            exposures.push(ExposureRecord {
                security: id.clone(),
                formation,
                beta_svi: i as f64,
                alpha: 0.0,
                n_obs: 48,
            });
            rows.push((id.clone(), formation, 0.001 * i as f64, 1e9));
            for &m in &months {
                rows.push((id.clone(), m, 0.001 * i as f64, 1e9));
            }
        }
        let panel = ReturnPanel::from_observations(rows).unwrap();
        let rf = RiskFreeSeries::from_rows(
            month_range(formation, ym(2021, 6)).into_iter().map(|m| (m, 0.0)),
        )
        .unwrap();
        let spec =
            SortSpec::conditional(SortVariable::Hse, 2, SortVariable::Size, 2, Weighting::Value)
                .unwrap();
        let table =
            run_conditional_double_sort(&exposures, &BTreeMap::new(), &panel, &rf, &spec).unwrap();
        assert!(
            table.warnings.iter().any(|w| w.contains("bucket skipped")),
            "{:?}",
            table.warnings
        );
        // Outer bucket 2 has no members; bucket 1 carries everything.
        assert!(table.cells[1].iter().all(|p| p.returns.is_empty()));
        assert!(!table.cells[0][0].returns.is_empty());
    }

    #[test]
    fn double_sort_requires_secondary_and_univariate_rejects_it() {
        let (exposures, panel, rf) = double_fixture();
        let uni = SortSpec::univariate(SortVariable::Hse, 5, Weighting::Value).unwrap();
        assert!(
            run_conditional_double_sort(&exposures, &BTreeMap::new(), &panel, &rf, &uni).is_err()
        );
        assert!(
            run_univariate_sort(&exposures, &BTreeMap::new(), &panel, &rf, &double_spec())
                .is_err()
        );
    }

    #[test]
    fn spec_validation_rules() {
        assert!(SortSpec::univariate(SortVariable::Hse, 1, Weighting::Value).is_err());
        assert!(SortSpec::conditional(SortVariable::Hse, 5, SortVariable::Hse, 5, Weighting::Value)
            .is_err());
        assert!(SortSpec {
            primary: SortVariable::Hse,
            n_primary: 5,
            secondary: Some(SortVariable::Size),
            n_secondary: None,
            weighting: Weighting::Value,
        }
        .validate()
        .is_err());
    }

    #[test]
    fn variable_and_weighting_parse_round_trip() {
        for v in [SortVariable::Hse, SortVariable::Size, SortVariable::Beme] {
            assert_eq!(v.to_string().parse::<SortVariable>().unwrap(), v);
        }
        for w in [Weighting::Value, Weighting::Equal] {
            assert_eq!(w.to_string().parse::<Weighting>().unwrap(), w);
        }
        assert!("market".parse::<SortVariable>().is_err());
        assert!("cap".parse::<Weighting>().is_err());
    }
}
