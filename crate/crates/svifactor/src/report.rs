//! Rendering results to CSV and aligned plain text, and writing them safely.
//!
//! CSV output uses shortest round-trip float formatting, so reloading a
//! rendered dataset reproduces the in-memory values bit for bit. Report files
//! may carry `# key: value` comment lines ahead of the header (for manifest
//! hashes and units); dataset files carry none so their headers match the
//! ingest schemas exactly. Every file goes through write-then-rename, so a
//! path either holds a complete file or none at all.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exposure::ExposureRecord;
use crate::fmreg::FmResult;
use crate::ingest::SviSeries;
use crate::panel::{BookEquityRecord, ReturnPanel, RiskFreeSeries};
use crate::sorts::{DoubleSortTable, PortfolioSeries, SortTable};
use crate::synth::{GroundTruth, GENERATOR_NAME};

// ---------------------------------------------------------------------------
// Files and hashing
// ---------------------------------------------------------------------------

/// Writes `bytes` to `path` atomically: temp file in the same directory,
/// then rename. Parent directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lower-case hex SHA-256 of a file's contents.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Shortest decimal string that round-trips the value exactly.
pub fn csv_num(v: f64) -> String {
    format!("{v}")
}

fn csv_buffer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer
        .into_inner()
        .map_err(|e| Error::data(format!("csv buffer error: {e}")))
}

/// `# key: value` comment lines, rendered ahead of a CSV header.
fn comment_block(comments: &[String]) -> Vec<u8> {
    let mut out = String::new();
    for line in comments {
        let _ = writeln!(out, "# {line}");
    }
    out.into_bytes()
}

fn with_comments(comments: &[String], body: Vec<u8>) -> Vec<u8> {
    let mut out = comment_block(comments);
    out.extend_from_slice(&body);
    out
}

// ---------------------------------------------------------------------------
// Dataset CSVs (the four ingest schemas plus ground truth)
// ---------------------------------------------------------------------------

/// `security,year,month,ret,mktcap`, one row per observation.
pub fn render_returns_csv(panel: &ReturnPanel) -> Result<Vec<u8>> {
    let mut w = csv_buffer();
    w.write_record(["security", "year", "month", "ret", "mktcap"])
        .map_err(|e| Error::data(e.to_string()))?;
    for (id, month, obs) in panel.rows() {
        w.write_record([
            id.as_str().to_string(),
            month.year().to_string(),
            month.month().to_string(),
            csv_num(obs.ret),
            csv_num(obs.mktcap),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    finish_csv(w)
}

/// `year,month,svi`, one row per month.
pub fn render_svi_csv(svi: &SviSeries) -> Result<Vec<u8>> {
    let mut w = csv_buffer();
    w.write_record(["year", "month", "svi"]).map_err(|e| Error::data(e.to_string()))?;
    for month in svi.months() {
        let value = svi.get(month).expect("listed month");
        w.write_record([month.year().to_string(), month.month().to_string(), csv_num(value)])
            .map_err(|e| Error::data(e.to_string()))?;
    }
    finish_csv(w)
}

/// `year,month,rf`, one row per month.
pub fn render_riskfree_csv(rf: &RiskFreeSeries) -> Result<Vec<u8>> {
    let mut w = csv_buffer();
    w.write_record(["year", "month", "rf"]).map_err(|e| Error::data(e.to_string()))?;
    for (month, rate) in rf.iter() {
        w.write_record([month.year().to_string(), month.month().to_string(), csv_num(rate)])
            .map_err(|e| Error::data(e.to_string()))?;
    }
    finish_csv(w)
}

/// `security,year,equity,preferred,dec_mktcap`, sorted by (security, year).
pub fn render_books_csv(books: &[BookEquityRecord]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&BookEquityRecord> = books.iter().collect();
    sorted.sort_by(|a, b| (&a.security, a.fiscal_year).cmp(&(&b.security, b.fiscal_year)));
    let mut w = csv_buffer();
    w.write_record(["security", "year", "equity", "preferred", "dec_mktcap"])
        .map_err(|e| Error::data(e.to_string()))?;
    for rec in sorted {
        w.write_record([
            rec.security.as_str().to_string(),
            rec.fiscal_year.to_string(),
            csv_num(rec.equity),
            csv_num(rec.preferred),
            csv_num(rec.dec_mktcap),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    finish_csv(w)
}

/// Planted parameters per security, with generator identity and seed in
/// comment lines so a dataset can be regenerated from its dump alone.
pub fn render_ground_truth_csv(truth: &GroundTruth) -> Result<Vec<u8>> {
    let comments = vec![
        format!("generator: {GENERATOR_NAME}"),
        format!("seed: {}", truth.seed),
        format!("lambda: {}", csv_num(truth.lambda)),
    ];
    let mut w = csv_buffer();
    w.write_record([
        "security",
        "beta_svi",
        "alpha",
        "lambda",
        "size_side",
        "beme_side",
        "negative_be",
    ])
    .map_err(|e| Error::data(e.to_string()))?;
    for (id, sec) in &truth.securities {
        w.write_record([
            id.as_str().to_string(),
            csv_num(sec.beta_svi),
            csv_num(sec.alpha),
            csv_num(sec.lambda),
            sec.size_side.to_string(),
            sec.beme_side.to_string(),
            sec.negative_be.to_string(),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    Ok(with_comments(&comments, finish_csv(w)?))
}

// ---------------------------------------------------------------------------
// Report CSVs
// ---------------------------------------------------------------------------

/// `security,formation_year,beta_svi,alpha,n_obs` with caller comments (for
/// example the manifest hash) up top.
pub fn render_hse_csv(records: &[ExposureRecord], comments: &[String]) -> Result<Vec<u8>> {
    let mut w = csv_buffer();
    w.write_record(["security", "formation_year", "beta_svi", "alpha", "n_obs"])
        .map_err(|e| Error::data(e.to_string()))?;
    for rec in records {
        w.write_record([
            rec.security.as_str().to_string(),
            rec.formation.year().to_string(),
            csv_num(rec.beta_svi),
            csv_num(rec.alpha),
            rec.n_obs.to_string(),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    Ok(with_comments(comments, finish_csv(w)?))
}

fn portfolio_record(p: &PortfolioSeries) -> Vec<String> {
    let (mean, tstat) = match p.stat() {
        Some(s) => (csv_num(s.mean), csv_num(s.tstat)),
        None => (String::new(), String::new()),
    };
    let opt = |v: Option<f64>| v.map(csv_num).unwrap_or_default();
    vec![
        p.label.clone(),
        mean,
        tstat,
        p.returns.len().to_string(),
        opt(p.avg_characteristics.hse),
        opt(p.avg_characteristics.beme_plus),
        opt(p.avg_characteristics.mktcap),
    ]
}

/// One row per portfolio (spread last):
/// `portfolio,mean,tstat,n_months,avg_hse,avg_beme_plus,avg_mktcap`.
/// Means are monthly excess returns as fractions.
pub fn render_sort_csv(table: &SortTable, comments: &[String]) -> Result<Vec<u8>> {
    let mut all = vec!["units: monthly excess returns as fractions".to_string()];
    all.extend(comments.iter().cloned());
    let mut w = csv_buffer();
    w.write_record(["portfolio", "mean", "tstat", "n_months", "avg_hse", "avg_beme_plus", "avg_mktcap"])
        .map_err(|e| Error::data(e.to_string()))?;
    for p in &table.portfolios {
        w.write_record(portfolio_record(p)).map_err(|e| Error::data(e.to_string()))?;
    }
    Ok(with_comments(&all, finish_csv(w)?))
}

/// One row per (outer, inner) cell plus row spreads:
/// `outer,inner,mean,tstat,n_months`.
pub fn render_double_sort_csv(table: &DoubleSortTable, comments: &[String]) -> Result<Vec<u8>> {
    let mut all = vec!["units: monthly excess returns as fractions".to_string()];
    all.extend(comments.iter().cloned());
    let mut w = csv_buffer();
    w.write_record(["outer", "inner", "mean", "tstat", "n_months"])
        .map_err(|e| Error::data(e.to_string()))?;
    for (row, outer) in table.cells.iter().zip(&table.outer_labels) {
        for (cell, inner) in row.iter().zip(&table.inner_labels) {
            let (mean, tstat) = match cell.stat() {
                Some(s) => (csv_num(s.mean), csv_num(s.tstat)),
                None => (String::new(), String::new()),
            };
            w.write_record([
                outer.clone(),
                inner.clone(),
                mean,
                tstat,
                cell.returns.len().to_string(),
            ])
            .map_err(|e| Error::data(e.to_string()))?;
        }
    }
    Ok(with_comments(&all, finish_csv(w)?))
}

/// One row per (specification, coefficient): `spec,coef,mean,tstat,n_months`.
/// Coefficient means are percent per month.
pub fn render_fm_csv(results: &[FmResult], comments: &[String]) -> Result<Vec<u8>> {
    let mut all = vec!["units: coefficient means are percent per month".to_string()];
    all.extend(comments.iter().cloned());
    let mut w = csv_buffer();
    w.write_record(["spec", "coef", "mean", "tstat", "n_months"])
        .map_err(|e| Error::data(e.to_string()))?;
    for result in results {
        for (coef, stat) in &result.coefficients {
            w.write_record([
                result.spec.label(),
                coef.label().to_string(),
                csv_num(stat.mean),
                csv_num(stat.tstat),
                result.n_months.to_string(),
            ])
            .map_err(|e| Error::data(e.to_string()))?;
        }
    }
    Ok(with_comments(&all, finish_csv(w)?))
}

// ---------------------------------------------------------------------------
// Plain-text tables
// ---------------------------------------------------------------------------

const NUM_WIDTH: usize = 10;

fn pad_left(s: &str, width: usize) -> String {
    format!("{s:>width$}")
}

fn pad_right(s: &str, width: usize) -> String {
    format!("{s:<width$}")
}

/// Column width that fits every label with breathing room.
fn column_width<'a>(labels: impl Iterator<Item = &'a str>) -> usize {
    labels.map(|l| l.len() + 2).fold(NUM_WIDTH, usize::max)
}

/// Mean cell: percent with three decimals, or `--` when absent.
fn mean_cell(stat: Option<crate::stats::TsStat>) -> String {
    match stat {
        Some(s) => format!("{:.3}", 100.0 * s.mean),
        None => "--".to_string(),
    }
}

/// t-stat cell: parenthesized, two decimals, or blank when absent.
fn tstat_cell(stat: Option<crate::stats::TsStat>) -> String {
    match stat {
        Some(s) => format!("({:.2})", s.tstat),
        None => String::new(),
    }
}

/// Aligned table for a univariate sort: mean and t-stat lines across
/// portfolios, then characteristic and month-count rows.
pub fn render_sort_text(table: &SortTable) -> String {
    let label_width = 14;
    let width = column_width(table.portfolios.iter().map(|p| p.label.as_str()));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Univariate sort on {} ({} buckets, {} weighting)",
        table.spec.primary, table.spec.n_primary, table.spec.weighting
    );
    let _ = writeln!(
        out,
        "(monthly excess returns, percent per month; t-statistics in parentheses)"
    );
    out.push('\n');

    let mut header = pad_right("portfolio", label_width);
    for p in &table.portfolios {
        header.push_str(&pad_left(&p.label, width));
    }
    let _ = writeln!(out, "{}", header.trim_end());

    let stats: Vec<Option<crate::stats::TsStat>> = table.stats();
    let mut mean_line = pad_right("mean", label_width);
    let mut t_line = pad_right("", label_width);
    let mut months_line = pad_right("months", label_width);
    for (p, stat) in table.portfolios.iter().zip(&stats) {
        mean_line.push_str(&pad_left(&mean_cell(*stat), width));
        t_line.push_str(&pad_left(&tstat_cell(*stat), width));
        months_line.push_str(&pad_left(&p.returns.len().to_string(), width));
    }
    let _ = writeln!(out, "{}", mean_line.trim_end());
    let _ = writeln!(out, "{}", t_line.trim_end());
    let _ = writeln!(out, "{}", months_line.trim_end());

    let char_row = |name: &str, pick: &dyn Fn(usize, &PortfolioSeries) -> Option<f64>| -> String {
        let mut line = pad_right(name, label_width);
        for (i, p) in table.portfolios.iter().enumerate() {
            let cell = match pick(i, p) {
                Some(v) => format!("{v:.3}"),
                None => "--".to_string(),
            };
            line.push_str(&pad_left(&cell, width));
        }
        line.trim_end().to_string()
    };
    let spread_idx = table.portfolios.len() - 1;
    let _ = writeln!(out, "{}", char_row("avg hse", &|_, p| p.avg_characteristics.hse));
    let _ =
        writeln!(out, "{}", char_row("avg be/me", &|_, p| p.avg_characteristics.beme_plus));
    // Caps are shown in logs, which has no meaning for the spread row's cap
    // *difference*; that cell stays blank.
    let _ = writeln!(
        out,
        "{}",
        char_row("avg cap (ln)", &|i, p| {
            if i == spread_idx {
                None
            } else {
                p.avg_characteristics.mktcap.map(f64::ln)
            }
        })
    );

    if !table.warnings.is_empty() {
        out.push('\n');
        for w in &table.warnings {
            let _ = writeln!(out, "note: {w}");
        }
    }
    out
}

/// Aligned grid for a conditional double sort: one mean line and one t-stat
/// line per outer bucket.
pub fn render_double_sort_text(table: &DoubleSortTable) -> String {
    let label_width = column_width(table.outer_labels.iter().map(String::as_str)).max(10);
    let width = column_width(table.inner_labels.iter().map(String::as_str));
    let mut out = String::new();
    let secondary = table
        .spec
        .secondary
        .map(|v| v.to_string())
        .unwrap_or_else(|| "?".to_string());
    // The outer (row) sort runs first, then the inner sort within each bucket.
    let _ = writeln!(
        out,
        "Conditional double sort: {} then {} ({}x{}, {} weighting)",
        secondary,
        table.spec.primary,
        table.outer_labels.len(),
        table.inner_labels.len().saturating_sub(1),
        table.spec.weighting
    );
    let _ = writeln!(
        out,
        "(monthly excess returns, percent per month; t-statistics in parentheses)"
    );
    out.push('\n');

    let mut header = pad_right("", label_width);
    for label in &table.inner_labels {
        header.push_str(&pad_left(label, width));
    }
    let _ = writeln!(out, "{}", header.trim_end());

    for (row, outer) in table.cells.iter().zip(&table.outer_labels) {
        let mut mean_line = pad_right(outer, label_width);
        let mut t_line = pad_right("", label_width);
        for cell in row {
            let stat = cell.stat();
            mean_line.push_str(&pad_left(&mean_cell(stat), width));
            t_line.push_str(&pad_left(&tstat_cell(stat), width));
        }
        let _ = writeln!(out, "{}", mean_line.trim_end());
        let _ = writeln!(out, "{}", t_line.trim_end());
    }

    if !table.warnings.is_empty() {
        out.push('\n');
        for w in &table.warnings {
            let _ = writeln!(out, "note: {w}");
        }
    }
    out
}

/// Aligned regression table: one mean line and one t-stat line per
/// specification, coefficient columns `a, s, h, h_dummy, hs`.
pub fn render_fm_text(results: &[FmResult]) -> String {
    use crate::fmreg::Coefficient;
    let columns = [
        Coefficient::Intercept,
        Coefficient::Size,
        Coefficient::Value,
        Coefficient::ValueDummy,
        Coefficient::Hse,
    ];
    let spec_width = results
        .iter()
        .map(|r| r.spec.label().len())
        .max()
        .unwrap_or(4)
        .max("spec".len())
        + 2;

    let mut out = String::new();
    let _ = writeln!(out, "Monthly cross-sectional regressions");
    let _ = writeln!(
        out,
        "(coefficient time-series means, percent per month; t-statistics in parentheses)"
    );
    out.push('\n');

    let mut header = pad_right("spec", spec_width);
    for coef in &columns {
        header.push_str(&pad_left(coef.label(), NUM_WIDTH));
    }
    header.push_str(&pad_left("months", 8));
    let _ = writeln!(out, "{}", header.trim_end());

    for result in results {
        let mut mean_line = pad_right(&result.spec.label(), spec_width);
        let mut t_line = pad_right("", spec_width);
        for coef in &columns {
            match result.coefficient(*coef) {
                Some(stat) => {
                    mean_line.push_str(&pad_left(&format!("{:.2}", stat.mean), NUM_WIDTH));
                    t_line.push_str(&pad_left(&format!("({:.2})", stat.tstat), NUM_WIDTH));
                }
                None => {
                    mean_line.push_str(&pad_left("", NUM_WIDTH));
                    t_line.push_str(&pad_left("", NUM_WIDTH));
                }
            }
        }
        mean_line.push_str(&pad_left(&result.n_months.to_string(), 8));
        let _ = writeln!(out, "{}", mean_line.trim_end());
        let _ = writeln!(out, "{}", t_line.trim_end());
    }

    let skipped: Vec<&String> = results.iter().flat_map(|r| r.skipped.iter()).collect();
    if !skipped.is_empty() {
        out.push('\n');
        for s in skipped {
            let _ = writeln!(out, "note: {s}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmreg::{run_fm, CrossSectionRow, FmSpec, FM_MONTH_FLOOR};
    use crate::ingest::{load_books, load_return_panel, load_risk_free, load_svi};
    use crate::synth::{generate, SynthConfig};

    fn small_dataset() -> crate::synth::SynthDataset {
        generate(&SynthConfig {
            n_securities: 8,
            n_months: 48,
            window_months: 36,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn dataset_csvs_round_trip_through_the_loaders() {
        let data = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let paths = [
            ("returns.csv", render_returns_csv(&data.panel).unwrap()),
            ("svi.csv", render_svi_csv(&data.svi).unwrap()),
            ("books.csv", render_books_csv(&data.books).unwrap()),
            ("riskfree.csv", render_riskfree_csv(&data.risk_free).unwrap()),
        ];
        for (name, bytes) in &paths {
            write_atomic(&dir.path().join(name), bytes).unwrap();
        }

        let panel = load_return_panel(&dir.path().join("returns.csv")).unwrap();
        assert_eq!(
            panel.rows().collect::<Vec<_>>(),
            data.panel.rows().collect::<Vec<_>>()
        );
        let svi = load_svi(&dir.path().join("svi.csv")).unwrap();
        for month in data.svi.months() {
            assert_eq!(
                svi.get(month).unwrap().to_bits(),
                data.svi.get(month).unwrap().to_bits()
            );
        }
        let rf = load_risk_free(&dir.path().join("riskfree.csv")).unwrap();
        for (month, rate) in data.risk_free.iter() {
            assert_eq!(rf.require(month).unwrap().to_bits(), rate.to_bits());
        }
        let books = load_books(&dir.path().join("books.csv")).unwrap();
        assert_eq!(books.len(), data.books.len());
        let mut expected: Vec<&BookEquityRecord> = data.books.iter().collect();
        expected.sort_by(|a, b| (&a.security, a.fiscal_year).cmp(&(&b.security, b.fiscal_year)));
        for (got, want) in books.iter().zip(expected) {
            assert_eq!(got.security, want.security);
            assert_eq!(got.fiscal_year, want.fiscal_year);
            assert_eq!(got.equity.to_bits(), want.equity.to_bits());
            assert_eq!(got.dec_mktcap.to_bits(), want.dec_mktcap.to_bits());
        }
    }

    #[test]
    fn atomic_write_creates_directories_and_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/deeper/out.csv");
        write_atomic(&path, b"first").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"first");
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn ground_truth_csv_records_generator_and_seed() {
        let data = small_dataset();
        let bytes = render_ground_truth_csv(&data.truth).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# generator: chacha8");
        assert_eq!(lines.next().unwrap(), "# seed: 42");
        assert!(lines.next().unwrap().starts_with("# lambda:"));
        assert_eq!(
            lines.next().unwrap(),
            "security,beta_svi,alpha,lambda,size_side,beme_side,negative_be"
        );
        assert_eq!(text.lines().count(), 4 + 8);
    }

    #[test]
    fn hse_csv_carries_comments_and_one_row_per_record() {
        let records = vec![
            ExposureRecord {
                security: crate::panel::SecurityId::new("A").unwrap(),
                formation: crate::calendar::MonthStamp::new(2020, 6).unwrap(),
                beta_svi: 0.5,
                alpha: 0.001,
                n_obs: 72,
            },
            ExposureRecord {
                security: crate::panel::SecurityId::new("B").unwrap(),
                formation: crate::calendar::MonthStamp::new(2020, 6).unwrap(),
                beta_svi: -0.25,
                alpha: 0.0,
                n_obs: 60,
            },
        ];
        let bytes = render_hse_csv(&records, &["manifest: deadbeef".to_string()]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# manifest: deadbeef");
        assert_eq!(lines[1], "security,formation_year,beta_svi,alpha,n_obs");
        assert_eq!(lines[2], "A,2020,0.5,0.001,72");
        assert_eq!(lines[3], "B,2020,-0.25,0,60");
    }

    fn tiny_fm_results() -> Vec<FmResult> {
        let months: Vec<crate::calendar::MonthStamp> = (0..12)
            .map(|i| crate::calendar::MonthStamp::new(2020, 7).unwrap().plus_months(i))
            .collect();
        let mut rows = Vec::new();
        for (mi, &month) in months.iter().enumerate() {
            for i in 0..20usize {
                rows.push(CrossSectionRow {
                    security: crate::panel::SecurityId::new(format!("S{i:02}")).unwrap(),
                    month,
                    formation_year: 2020,
                    excess_ret: 0.001 * ((i * 7 + mi * 3) % 9) as f64,
                    log_me: 18.0 + 0.1 * i as f64,
                    log_beme_plus: -0.4 + 0.05 * ((i * 3) % 7) as f64,
                    be_dummy: i % 5 == 2,
                    hse: -1.0 + 0.09 * ((i * i) % 11) as f64,
                    beme_raw: 0.7,
                });
            }
        }
        vec![
            run_fm(&rows, &FmSpec::new(false, false, true).unwrap(), FM_MONTH_FLOOR).unwrap(),
            run_fm(&rows, &FmSpec::new(true, true, true).unwrap(), FM_MONTH_FLOOR).unwrap(),
        ]
    }

    #[test]
    fn fm_csv_quotes_spec_labels_and_parses_back() {
        let results = tiny_fm_results();
        let bytes = render_fm_csv(&results, &["manifest: cafe".to_string()]).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("# units: coefficient means are percent per month\n# manifest: cafe\n"));
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(bytes.as_slice());
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        // 2 coefs for the hs-only spec, 5 for the full spec.
        assert_eq!(rows.len(), 2 + 5);
        assert_eq!(&rows[0][0], "hs");
        assert_eq!(&rows[0][1], "a");
        assert_eq!(&rows[2][0], "s,h,hs");
        let labels: Vec<&str> = rows[2..].iter().map(|r| &r[1]).collect();
        assert_eq!(labels, vec!["a", "s", "h", "h_dummy", "hs"]);
    }

    #[test]
    fn fm_text_has_two_lines_per_spec_with_parenthesized_ts() {
        let results = tiny_fm_results();
        let text = render_fm_text(&results);
        assert!(text.contains("percent per month"));
        let lines: Vec<&str> = text.lines().collect();
        let header_idx = lines.iter().position(|l| l.starts_with("spec")).unwrap();
        assert!(lines[header_idx].contains("h_dummy"));
        // Spec line then t line.
        assert!(lines[header_idx + 1].starts_with("hs"));
        assert!(lines[header_idx + 2].trim_start().starts_with('('));
        assert!(lines[header_idx + 3].starts_with("s,h,hs"));
        assert!(lines[header_idx + 4].trim_start().starts_with('('));
    }
}
