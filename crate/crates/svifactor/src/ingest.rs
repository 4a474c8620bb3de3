//! CSV ingestion and derived inputs: the search-volume series and its log
//! differences, and June-formation characteristics (size, book-to-market).
//!
//! File formats (all UTF-8, `.` decimal separator, values parsed as 64-bit
//! floats bit-exactly):
//!
//! * `returns.csv`  — `security,year,month,ret,mktcap`; `ret` is a decimal
//!   fraction, `mktcap` strictly positive.
//! * `svi.csv`      — `year,month,svi`; contiguous months, values ≥ 0.
//! * `books.csv`    — `security,year,equity,preferred,dec_mktcap`; `year` is
//!   the fiscal December's calendar year.
//! * `riskfree.csv` — `year,month,rf`.
//!
//! Malformed rows fail with the file name and line number; duplicate keys are
//! rejected. Ingestion is deterministic: the same bytes always produce the
//! same in-memory structures.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::calendar::MonthStamp;
use crate::error::{Error, Result};
use crate::panel::{BookEquityRecord, ReturnPanel, RiskFreeSeries, SecurityId};

// ---------------------------------------------------------------------------
// SVI series and log differences
// ---------------------------------------------------------------------------

/// Monthly search-volume intensity series (dimensionless, e.g. a 0–100 index).
///
/// Coverage is contiguous over its span; values are finite and non-negative.
/// Zeros are legal here — index providers emit hard zeros for low volume —
/// and are handled when differencing.
#[derive(Debug, Clone, Default)]
pub struct SviSeries {
    series: BTreeMap<MonthStamp, f64>,
}

impl SviSeries {
    /// Builds a series, rejecting duplicates, gaps, and negative or
    /// non-finite values.
    pub fn from_rows(rows: impl IntoIterator<Item = (MonthStamp, f64)>) -> Result<Self> {
        let mut series = BTreeMap::new();
        for (month, svi) in rows {
            if !(svi.is_finite() && svi >= 0.0) {
                return Err(Error::data(format!(
                    "search-volume value must be finite and >= 0 in {month}, got {svi}"
                )));
            }
            if series.insert(month, svi).is_some() {
                return Err(Error::data(format!("duplicate search-volume month {month}")));
            }
        }
        // Contiguity: consecutive keys must be consecutive months.
        let months: Vec<MonthStamp> = series.keys().copied().collect();
        for pair in months.windows(2) {
            if pair[0].next() != pair[1] {
                return Err(Error::data(format!(
                    "search-volume series has a gap between {} and {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(SviSeries { series })
    }

    /// The intensity for `month`, if covered.
    pub fn get(&self, month: MonthStamp) -> Option<f64> {
        self.series.get(&month).copied()
    }

    /// Months covered, in order.
    pub fn months(&self) -> impl Iterator<Item = MonthStamp> + '_ {
        self.series.keys().copied()
    }

    /// Number of months covered.
    pub fn len(&self) -> usize {
        self.series.len()
    }

    /// True if nothing is covered.
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Monthly log differences of the search-volume series:
/// `Δ_t = ln(SVI_t) − ln(SVI_{t−1})`.
#[derive(Debug, Clone, Default)]
pub struct DeltaSviSeries {
    series: BTreeMap<MonthStamp, f64>,
}

impl DeltaSviSeries {
    /// The log difference for `month`, if defined.
    pub fn get(&self, month: MonthStamp) -> Option<f64> {
        self.series.get(&month).copied()
    }

    /// Months with a defined difference, in order.
    pub fn months(&self) -> impl Iterator<Item = MonthStamp> + '_ {
        self.series.keys().copied()
    }

    /// Number of defined differences.
    pub fn len(&self) -> usize {
        self.series.len()
    }

    /// True if no differences are defined.
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Iterates (month, Δ) pairs in order.
    pub fn iter(&self) -> impl Iterator<Item = (MonthStamp, f64)> + '_ {
        self.series.iter().map(|(&m, &d)| (m, d))
    }
}

/// Months whose log difference had to be skipped because an endpoint was zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SviSkipReport {
    /// Difference months omitted (the `t` of each skipped `Δ_t`), in order.
    pub skipped: Vec<MonthStamp>,
}

/// Computes `Δ_t = ln(SVI_t) − ln(SVI_{t−1})` for every month whose endpoints
/// are both present and positive.
///
/// Months with a zero endpoint are omitted — never imputed — and listed in
/// the skip report. The input must cover at least two months.
pub fn compute_delta_svi(svi: &SviSeries) -> Result<(DeltaSviSeries, SviSkipReport)> {
    if svi.len() < 2 {
        return Err(Error::data(format!(
            "search-volume series needs at least 2 months to difference, got {}",
            svi.len()
        )));
    }
    let months: Vec<MonthStamp> = svi.months().collect();
    let mut series = BTreeMap::new();
    let mut skipped = Vec::new();
    for pair in months.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        let (a, b) = (svi.get(prev).unwrap(), svi.get(cur).unwrap());
        if a > 0.0 && b > 0.0 {
            series.insert(cur, b.ln() - a.ln());
        } else {
            skipped.push(cur);
        }
    }
    Ok((DeltaSviSeries { series }, SviSkipReport { skipped }))
}

// ---------------------------------------------------------------------------
// Book-to-market
// ---------------------------------------------------------------------------

/// Book-to-market outcome for one record: a positive ratio, or the
/// negative-book-equity flag when `equity − preferred <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeMe {
    /// Positive ratio `(equity − preferred) / dec_mktcap`.
    Ratio(f64),
    /// Book equity is zero or negative.
    NegativeBe,
}

/// Book-to-market for a December record: `(equity − preferred) / dec_mktcap`
/// when book equity is positive, otherwise the negative-BE flag. Zero book
/// equity counts as negative — its log is undefined either way.
///
/// `dec_mktcap > 0` is guaranteed by [`BookEquityRecord`] construction, so
/// this cannot fail.
pub fn compute_beme(rec: &BookEquityRecord) -> BeMe {
    let be = rec.equity - rec.preferred;
    if be > 0.0 {
        BeMe::Ratio(be / rec.dec_mktcap)
    } else {
        BeMe::NegativeBe
    }
}

// ---------------------------------------------------------------------------
// Formation characteristics
// ---------------------------------------------------------------------------

/// Per-security characteristics observed for one June formation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicsRow {
    /// Natural log of the June market cap.
    pub log_me: f64,
    /// Raw `(equity − preferred) / dec_mktcap`, any sign. Kept raw so
    /// medians over the full cross-section (negative-BE firms included)
    /// remain computable.
    pub beme_raw: f64,
    /// `ln(BE/ME)` for positive book equity, otherwise the configured fill
    /// value (default 0, so the dummy alone carries negative-BE firms).
    pub log_beme_plus: f64,
    /// True exactly when book equity `<= 0`.
    pub be_dummy: bool,
}

/// Why a panel security is absent from a characteristics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharExclusion {
    /// No market cap observation in the formation June.
    NoJuneObservation,
    /// No book record for the preceding fiscal December.
    NoBookRecord,
}

impl fmt::Display for CharExclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharExclusion::NoJuneObservation => f.write_str("no June observation"),
            CharExclusion::NoBookRecord => f.write_str("no December book record"),
        }
    }
}

/// Characteristics of every eligible security for one June formation, plus an
/// exclusion report for the rest of the panel.
#[derive(Debug, Clone)]
pub struct CharacteristicsTable {
    /// The June these characteristics belong to.
    pub formation: MonthStamp,
    rows: BTreeMap<SecurityId, CharacteristicsRow>,
    /// Panel securities not in `rows`, with reasons, in id order.
    pub excluded: Vec<(SecurityId, CharExclusion)>,
}

impl CharacteristicsTable {
    /// The row for `security`, if eligible.
    pub fn get(&self, security: &SecurityId) -> Option<&CharacteristicsRow> {
        self.rows.get(security)
    }

    /// Iterates rows in security-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&SecurityId, &CharacteristicsRow)> {
        self.rows.iter()
    }

    /// Number of eligible securities.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// True if no securities are eligible.
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Builds the characteristics table for a June formation.
///
/// Size is observed at the formation June (`log_me = ln(June mktcap)`);
/// book-to-market comes from the December of the previous calendar year.
/// Securities missing either input are excluded and reported. Negative-BE
/// rows get `be_dummy = true` and `log_beme_plus = neg_be_fill`.
pub fn build_characteristics(
    panel: &ReturnPanel,
    books: &[BookEquityRecord],
    formation: MonthStamp,
    neg_be_fill: f64,
) -> Result<CharacteristicsTable> {
    if !formation.is_june() {
        return Err(Error::validation(format!(
            "formation month must be a June, got {formation}"
        )));
    }
    let book_year = formation.year() - 1;
    let mut by_security: BTreeMap<&SecurityId, &BookEquityRecord> = BTreeMap::new();
    for rec in books.iter().filter(|r| r.fiscal_year == book_year) {
        if by_security.insert(&rec.security, rec).is_some() {
            return Err(Error::data(format!(
                "duplicate book record for security {} fiscal year {book_year}",
                rec.security
            )));
        }
    }

    let mut rows = BTreeMap::new();
    let mut excluded = Vec::new();
    for security in panel.securities() {
        let Some(obs) = panel.observation(security, formation) else {
            excluded.push((security.clone(), CharExclusion::NoJuneObservation));
            continue;
        };
        let Some(rec) = by_security.get(security) else {
            excluded.push((security.clone(), CharExclusion::NoBookRecord));
            continue;
        };
        let beme_raw = (rec.equity - rec.preferred) / rec.dec_mktcap;
        let (log_beme_plus, be_dummy) = match compute_beme(rec) {
            BeMe::Ratio(r) => (r.ln(), false),
            BeMe::NegativeBe => (neg_be_fill, true),
        };
        rows.insert(
            security.clone(),
            CharacteristicsRow { log_me: obs.mktcap.ln(), beme_raw, log_beme_plus, be_dummy },
        );
    }
    Ok(CharacteristicsTable { formation, rows, excluded })
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &[&str], path: &Path) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let actual: Vec<&str> = headers.iter().map(str::trim).collect();
    if actual != expected {
        for col in expected {
            if !actual.contains(col) {
                return Err(Error::data(format!(
                    "{}: header is missing column `{col}` (expected `{}`, got `{}`)",
                    path.display(),
                    expected.join(","),
                    actual.join(",")
                )));
            }
        }
        return Err(Error::data(format!(
            "{}: header must be exactly `{}`, got `{}`",
            path.display(),
            expected.join(","),
            actual.join(",")
        )));
    }
    Ok(())
}

/// Line number of a record for error messages (1-based; header is line 1).
fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|e| {
        Error::data(format!(
            "{} line {}: bad {name} value `{raw}`: {e}",
            path.display(),
            line_of(record)
        ))
    })
}

fn parse_month(record: &csv::StringRecord, year_idx: usize, month_idx: usize, path: &Path) -> Result<MonthStamp> {
    let year: i32 = parse_field(record, year_idx, "year", path)?;
    let month: u32 = parse_field(record, month_idx, "month", path)?;
    MonthStamp::new(year, month).map_err(|e| {
        Error::data(format!("{} line {}: {e}", path.display(), line_of(record)))
    })
}

fn records(reader: &mut csv::Reader<std::fs::File>, n_fields: usize, path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if rec.len() != n_fields {
            return Err(Error::data(format!(
                "{} line {}: expected {n_fields} fields, got {}",
                path.display(),
                line_of(&rec),
                rec.len()
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Loads `returns.csv` (`security,year,month,ret,mktcap`) into a panel.
pub fn load_return_panel(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["security", "year", "month", "ret", "mktcap"], path)?;
    let mut rows = Vec::new();
    for rec in records(&mut reader, 5, path)? {
        let security = SecurityId::new(rec.get(0).unwrap_or("").trim())
            .map_err(|e| Error::data(format!("{} line {}: {e}", path.display(), line_of(&rec))))?;
        let month = parse_month(&rec, 1, 2, path)?;
        let ret: f64 = parse_field(&rec, 3, "ret", path)?;
        let mktcap: f64 = parse_field(&rec, 4, "mktcap", path)?;
        if !(mktcap.is_finite() && mktcap > 0.0) {
            return Err(Error::data(format!(
                "{} line {}: mktcap must be finite and > 0, got {mktcap}",
                path.display(),
                line_of(&rec)
            )));
        }
        rows.push((security, month, ret, mktcap));
    }
    ReturnPanel::from_observations(rows)
}

/// Loads `svi.csv` (`year,month,svi`).
pub fn load_svi(path: impl AsRef<Path>) -> Result<SviSeries> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["year", "month", "svi"], path)?;
    let mut rows = Vec::new();
    for rec in records(&mut reader, 3, path)? {
        let month = parse_month(&rec, 0, 1, path)?;
        let svi: f64 = parse_field(&rec, 2, "svi", path)?;
        rows.push((month, svi));
    }
    SviSeries::from_rows(rows)
}

/// Loads `books.csv` (`security,year,equity,preferred,dec_mktcap`).
pub fn load_books(path: impl AsRef<Path>) -> Result<Vec<BookEquityRecord>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["security", "year", "equity", "preferred", "dec_mktcap"], path)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for rec in records(&mut reader, 5, path)? {
        let security = SecurityId::new(rec.get(0).unwrap_or("").trim())
            .map_err(|e| Error::data(format!("{} line {}: {e}", path.display(), line_of(&rec))))?;
        let fiscal_year: i32 = parse_field(&rec, 1, "year", path)?;
        let equity: f64 = parse_field(&rec, 2, "equity", path)?;
        let preferred: f64 = parse_field(&rec, 3, "preferred", path)?;
        let dec_mktcap: f64 = parse_field(&rec, 4, "dec_mktcap", path)?;
        if !seen.insert((security.clone(), fiscal_year)) {
            return Err(Error::data(format!(
                "{} line {}: duplicate book record for security {security} fiscal year {fiscal_year}",
                path.display(),
                line_of(&rec)
            )));
        }
        let record = BookEquityRecord::new(security, fiscal_year, equity, preferred, dec_mktcap)
            .map_err(|e| Error::data(format!("{} line {}: {e}", path.display(), line_of(&rec))))?;
        out.push(record);
    }
    Ok(out)
}

/// Loads `riskfree.csv` (`year,month,rf`).
pub fn load_risk_free(path: impl AsRef<Path>) -> Result<RiskFreeSeries> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["year", "month", "rf"], path)?;
    let mut rows = Vec::new();
    for rec in records(&mut reader, 3, path)? {
        let month = parse_month(&rec, 0, 1, path)?;
        let rf: f64 = parse_field(&rec, 2, "rf", path)?;
        rows.push((month, rf));
    }
    RiskFreeSeries::from_rows(rows)
}
