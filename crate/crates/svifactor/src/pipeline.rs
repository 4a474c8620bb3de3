//! Run orchestration: configuration, staging, and report assembly.
//!
//! A [`RunConfig`] names either four input CSVs or a synthetic-data config,
//! plus estimation, sort, and regression settings. Commands load (or
//! generate) the dataset, run the requested stages, and write reports into
//! the output directory. Every report carries the run-manifest hash in a
//! leading comment line; the hash covers the config, the input data, and the
//! library version — not wall time — so identical inputs produce identical
//! report bytes.
//!
//! All stage results are rendered in memory first and written last, each
//! file atomically; a failing stage therefore leaves no partial outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calendar::MonthStamp;
use crate::error::{Error, Result};
use crate::exposure::{estimate_hse, ExposureConfig, ExposureRecord, WinsorScope};
use crate::fmreg::{build_cross_section, run_fm, CrossSectionRow, FmResult, FmSpec};
use crate::ingest::{
    build_characteristics, compute_delta_svi, load_books, load_return_panel, load_risk_free,
    load_svi, DeltaSviSeries, SviSeries,
};
use crate::panel::{BookEquityRecord, ReturnPanel, RiskFreeSeries};
use crate::report;
use crate::sorts::{
    run_conditional_double_sort, run_univariate_sort, CharacteristicsByYear, SortSpec,
    SortVariable, Weighting,
};
use crate::stats::WinsorSpec;
use crate::synth::{generate, SynthConfig};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// The four input files of a data-backed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    /// Monthly returns and market caps (`security,year,month,ret,mktcap`).
    pub returns: PathBuf,
    /// Search-volume index (`year,month,svi`).
    pub svi: PathBuf,
    /// Book equity records (`security,year,equity,preferred,dec_mktcap`).
    pub books: PathBuf,
    /// Risk-free series (`year,month,rf`).
    pub riskfree: PathBuf,
}

impl InputPaths {
    /// The four paths with stable labels, for hashing and error messages.
    fn labeled(&self) -> [(&'static str, &Path); 4] {
        [
            ("returns", &self.returns),
            ("svi", &self.svi),
            ("books", &self.books),
            ("riskfree", &self.riskfree),
        ]
    }
}

/// Full run configuration. Defaults follow the reference setup: a 72-month
/// estimation window with at least 24 observations, per-window 1/99
/// winsorization, value weighting, an HSE decile sort plus conditional 5x5
/// double sorts, and the seven standard regression specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Input CSVs; leave unset to generate data from [`RunConfig::synth`].
    pub inputs: Option<InputPaths>,
    /// Synthetic-data settings, used when `inputs` is unset.
    pub synth: Option<SynthConfig>,
    /// Trailing estimation window in months.
    pub window_months: u32,
    /// Minimum aligned observations per security and formation.
    pub min_obs: usize,
    /// Lower winsorization percentile for in-window returns.
    pub winsor_lower: f64,
    /// Upper winsorization percentile.
    pub winsor_upper: f64,
    /// Winsorization sample scope.
    pub winsor_scope: WinsorScope,
    /// Fill value for `log(BE/ME)⁺` of negative-book-equity firms.
    pub neg_be_fill: f64,
    /// Portfolio weighting for the sorts.
    pub weighting: Weighting,
    /// Sorts to run; `secondary` present makes a sort conditional.
    pub sorts: Vec<SortSpec>,
    /// Regression specifications, as labels like `"s,h,hs"`.
    pub fm_specs: Vec<String>,
    /// Also run the full model on the four median-split subsamples.
    pub fm_subsamples: bool,
    /// Month-size floor for the regressions.
    pub month_floor: usize,
    /// Where reports are written.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let weighting = Weighting::Value;
        RunConfig {
            inputs: None,
            synth: None,
            window_months: 72,
            min_obs: 24,
            winsor_lower: 1.0,
            winsor_upper: 99.0,
            winsor_scope: WinsorScope::PerWindow,
            neg_be_fill: 0.0,
            weighting,
            sorts: default_sorts(weighting),
            fm_specs: FmSpec::all_seven().iter().map(FmSpec::label).collect(),
            fm_subsamples: false,
            month_floor: crate::fmreg::FM_MONTH_FLOOR,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// The reference sort battery: HSE deciles, then size- and value-conditioned
/// 5x5 double sorts on HSE.
fn default_sorts(weighting: Weighting) -> Vec<SortSpec> {
    vec![
        SortSpec {
            primary: SortVariable::Hse,
            n_primary: 10,
            secondary: None,
            n_secondary: None,
            weighting,
        },
        SortSpec {
            primary: SortVariable::Hse,
            n_primary: 5,
            secondary: Some(SortVariable::Size),
            n_secondary: Some(5),
            weighting,
        },
        SortSpec {
            primary: SortVariable::Hse,
            n_primary: 5,
            secondary: Some(SortVariable::Beme),
            n_secondary: Some(5),
            weighting,
        },
    ]
}

impl RunConfig {
    /// Reads a TOML config file.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))?;
        Ok(config)
    }

    /// The estimated winsorization spec.
    pub fn winsor(&self) -> Result<WinsorSpec> {
        WinsorSpec::new(self.winsor_lower, self.winsor_upper)
    }

    /// Exposure settings implied by this config.
    pub fn exposure_config(&self) -> Result<ExposureConfig> {
        let cfg = ExposureConfig {
            window_months: self.window_months,
            min_obs: self.min_obs,
            winsor: self.winsor()?,
            scope: self.winsor_scope,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parsed regression specs, subsample runs appended when enabled.
    pub fn parsed_fm_specs(&self) -> Result<Vec<FmSpec>> {
        let mut specs = Vec::with_capacity(self.fm_specs.len() + 4);
        for label in &self.fm_specs {
            specs.push(label.parse::<FmSpec>()?);
        }
        if self.fm_subsamples {
            specs.extend(FmSpec::subsample_four());
        }
        if specs.is_empty() {
            return Err(Error::validation("fm_specs must name at least one specification"));
        }
        Ok(specs)
    }

    /// Validates settings and, when inputs are configured, that the files
    /// exist.
    pub fn validate(&self) -> Result<()> {
        match (&self.inputs, &self.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "config names both input files and a synth section; choose one data source",
                ));
            }
            (None, None) => {
                return Err(Error::validation(
                    "config needs either input files or a synth section",
                ));
            }
            (Some(inputs), None) => {
                for (label, path) in inputs.labeled() {
                    if !path.is_file() {
                        return Err(Error::validation(format!(
                            "{label} input does not exist: {}",
                            path.display()
                        )));
                    }
                }
            }
            (None, Some(synth)) => synth.validate()?,
        }
        self.exposure_config()?;
        for sort in &self.sorts {
            sort.validate()?;
        }
        self.parsed_fm_specs()?;
        if self.month_floor < 3 {
            return Err(Error::validation(format!(
                "month_floor must be at least 3, got {}",
                self.month_floor
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Provenance record for one run. The manifest hash covers the library
/// version, the analysis config, and the data-source hashes; wall time is
/// recorded but deliberately excluded so reruns reproduce report bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Hash stamped into every report.
    pub manifest_hash: String,
    /// Crate version that produced the run.
    pub library_version: String,
    /// SHA-256 of the canonical (TOML) config serialization, with file
    /// locations normalized away: paths cannot change any number, and input
    /// *contents* are covered by the per-source hashes.
    pub config_sha256: String,
    /// SHA-256 per data source: input files, or the synth section.
    pub source_sha256: BTreeMap<String, String>,
    /// Elapsed milliseconds; excluded from `manifest_hash`.
    pub wall_time_ms: u128,
}

impl RunManifest {
    fn build(config: &RunConfig, source_sha256: BTreeMap<String, String>) -> Result<Self> {
        // Normalize locations so the hash identifies the analysis itself:
        // the same parameters over the same data produce the same stamp no
        // matter where the files live or land.
        let mut for_hash = config.clone();
        for_hash.out_dir = PathBuf::from("-");
        if let Some(inputs) = &mut for_hash.inputs {
            *inputs = InputPaths {
                returns: PathBuf::from("-"),
                svi: PathBuf::from("-"),
                books: PathBuf::from("-"),
                riskfree: PathBuf::from("-"),
            };
        }
        let canonical = toml::to_string(&for_hash)
            .map_err(|e| Error::validation(format!("config serialization failed: {e}")))?;
        let config_sha256 = report::sha256_hex(canonical.as_bytes());
        let library_version = env!("CARGO_PKG_VERSION").to_string();
        let mut acc = String::new();
        let _ = writeln!(acc, "version {library_version}");
        let _ = writeln!(acc, "config {config_sha256}");
        for (label, hash) in &source_sha256 {
            let _ = writeln!(acc, "source {label} {hash}");
        }
        Ok(RunManifest {
            manifest_hash: report::sha256_hex(acc.as_bytes()),
            library_version,
            config_sha256,
            source_sha256,
            wall_time_ms: 0,
        })
    }

    /// The comment line stamped into reports.
    pub fn comment(&self) -> String {
        format!("manifest: {}", self.manifest_hash)
    }

    /// TOML rendering of the manifest file.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "manifest_hash = {:?}", self.manifest_hash);
        let _ = writeln!(out, "library_version = {:?}", self.library_version);
        let _ = writeln!(out, "config_sha256 = {:?}", self.config_sha256);
        let _ = writeln!(out, "wall_time_ms = {}", self.wall_time_ms);
        let _ = writeln!(out);
        let _ = writeln!(out, "[source_sha256]");
        for (label, hash) in &self.source_sha256 {
            let _ = writeln!(out, "{label} = {hash:?}");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

/// Prefixes any stage error with the stage name, preserving the error class.
fn in_stage<T>(stage: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("stage {stage}: {m}")),
        Error::Data(m) => Error::Data(format!("stage {stage}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("stage {stage}: {m}")),
        Error::Io(e) => Error::Data(format!("stage {stage}: io: {e}")),
    })
}

/// A dataset in memory, with the source hashes for the manifest.
pub struct LoadedData {
    /// Monthly returns and caps.
    pub panel: ReturnPanel,
    /// Search-volume series.
    pub svi: SviSeries,
    /// Risk-free series.
    pub risk_free: RiskFreeSeries,
    /// Book equity records.
    pub books: Vec<BookEquityRecord>,
    /// Data-source hashes keyed by label.
    pub source_sha256: BTreeMap<String, String>,
}

/// Loads the configured inputs or generates the synthetic dataset.
pub fn load_data(config: &RunConfig) -> Result<LoadedData> {
    match (&config.inputs, &config.synth) {
        (Some(inputs), None) => {
            let mut source_sha256 = BTreeMap::new();
            for (label, path) in inputs.labeled() {
                source_sha256.insert(label.to_string(), report::hash_file(path)?);
            }
            Ok(LoadedData {
                panel: load_return_panel(&inputs.returns)?,
                svi: load_svi(&inputs.svi)?,
                risk_free: load_risk_free(&inputs.riskfree)?,
                books: load_books(&inputs.books)?,
                source_sha256,
            })
        }
        (None, Some(synth)) => {
            let data = generate(synth)?;
            let canonical = toml::to_string(synth)
                .map_err(|e| Error::validation(format!("synth serialization failed: {e}")))?;
            let mut source_sha256 = BTreeMap::new();
            source_sha256
                .insert("synth".to_string(), report::sha256_hex(canonical.as_bytes()));
            Ok(LoadedData {
                panel: data.panel,
                svi: data.svi,
                risk_free: data.risk_free,
                books: data.books,
                source_sha256,
            })
        }
        _ => Err(Error::validation(
            "config needs exactly one data source (inputs or synth)",
        )),
    }
}

/// June formation dates whose trailing window fits inside the panel
/// calendar.
pub fn eligible_formations(panel: &ReturnPanel, window_months: u32) -> Vec<MonthStamp> {
    let calendar = panel.calendar();
    let (Some(&first), Some(&last)) = (calendar.first(), calendar.last()) else {
        return Vec::new();
    };
    let earliest = first.plus_months(i64::from(window_months) - 1);
    calendar
        .iter()
        .copied()
        .filter(|m| m.is_june() && *m >= earliest && *m <= last)
        .collect()
}

/// Exposures and characteristics for every eligible formation June.
pub struct EstimateOutput {
    /// All exposure records, formation-major then id order.
    pub exposures: Vec<ExposureRecord>,
    /// Characteristics tables keyed by formation year.
    pub characteristics: CharacteristicsByYear,
    /// ΔSVI series used for estimation.
    pub dsvi: DeltaSviSeries,
    /// Per-formation notes (skipped SVI months, exclusion counts).
    pub notes: Vec<String>,
}

/// Runs ΔSVI, exposure estimation, and characteristics for all formations.
pub fn estimate_all(config: &RunConfig, data: &LoadedData) -> Result<EstimateOutput> {
    let exposure_cfg = config.exposure_config()?;
    let (dsvi, skip) = compute_delta_svi(&data.svi)?;
    let mut notes = Vec::new();
    if !skip.skipped.is_empty() {
        notes.push(format!(
            "delta-svi: {} month(s) skipped for zero volume: {}",
            skip.skipped.len(),
            skip.skipped.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
        ));
    }
    let formations = eligible_formations(&data.panel, config.window_months);
    if formations.is_empty() {
        return Err(Error::data(format!(
            "no June formation date has {} months of history inside the panel",
            config.window_months
        )));
    }
    let mut exposures = Vec::new();
    let mut characteristics = CharacteristicsByYear::new();
    for formation in formations {
        let outcome = estimate_hse(&data.panel, &dsvi, formation, &exposure_cfg)?;
        if !outcome.excluded.is_empty() {
            notes.push(format!(
                "formation {formation}: {} security(ies) excluded from estimation",
                outcome.excluded.len()
            ));
        }
        exposures.extend(outcome.records);
        let table =
            build_characteristics(&data.panel, &data.books, formation, config.neg_be_fill)?;
        if !table.excluded.is_empty() {
            notes.push(format!(
                "formation {formation}: {} security(ies) without June characteristics",
                table.excluded.len()
            ));
        }
        characteristics.insert(formation.year(), table);
    }
    Ok(EstimateOutput { exposures, characteristics, dsvi, notes })
}

/// One rendered output file.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFile {
    /// Path relative to the output directory.
    pub name: String,
    /// Full file contents.
    pub bytes: Vec<u8>,
}

/// Everything a command produced: the manifest plus rendered files, already
/// written under `out_dir`.
#[derive(Debug)]
pub struct CommandOutput {
    /// Run provenance.
    pub manifest: RunManifest,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

/// File stem for a sort's reports, e.g. `sort-hse10-value` or
/// `dsort-size5-hse5-value`.
fn sort_file_stem(spec: &SortSpec) -> String {
    match (spec.secondary, spec.n_secondary) {
        (Some(outer), Some(k_outer)) => format!(
            "dsort-{outer}{k_outer}-{}{}-{}",
            spec.primary, spec.n_primary, spec.weighting
        ),
        _ => format!("sort-{}{}-{}", spec.primary, spec.n_primary, spec.weighting),
    }
}

/// Writes rendered files into the output directory; on any failure the
/// files written so far by this call are removed.
fn write_all(out_dir: &Path, files: &[RenderedFile]) -> Result<()> {
    let mut written: Vec<PathBuf> = Vec::new();
    for file in files {
        let path = out_dir.join(&file.name);
        match report::write_atomic(&path, &file.bytes) {
            Ok(()) => written.push(path),
            Err(e) => {
                for path in written {
                    let _ = std::fs::remove_file(path);
                }
                return Err(e);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Generates a synthetic dataset and writes the four input CSVs plus
/// `ground_truth.csv` into the output directory.
pub fn cmd_synth(config: &RunConfig) -> Result<CommandOutput> {
    let synth = config
        .synth
        .clone()
        .ok_or_else(|| Error::validation("synth command needs a synth section"))?;
    in_stage("synth", synth.validate())?;
    let data = in_stage("synth", generate(&synth))?;
    let files = vec![
        RenderedFile {
            name: "returns.csv".into(),
            bytes: in_stage("render", report::render_returns_csv(&data.panel))?,
        },
        RenderedFile {
            name: "svi.csv".into(),
            bytes: in_stage("render", report::render_svi_csv(&data.svi))?,
        },
        RenderedFile {
            name: "books.csv".into(),
            bytes: in_stage("render", report::render_books_csv(&data.books))?,
        },
        RenderedFile {
            name: "riskfree.csv".into(),
            bytes: in_stage("render", report::render_riskfree_csv(&data.risk_free))?,
        },
        RenderedFile {
            name: "ground_truth.csv".into(),
            bytes: in_stage("render", report::render_ground_truth_csv(&data.truth))?,
        },
    ];
    let canonical = toml::to_string(&synth)
        .map_err(|e| Error::validation(format!("synth serialization failed: {e}")))?;
    let mut source = BTreeMap::new();
    source.insert("synth".to_string(), report::sha256_hex(canonical.as_bytes()));
    let manifest = RunManifest::build(config, source)?;
    in_stage("write", write_all(&config.out_dir, &files))?;
    let summary = format!(
        "wrote {} files ({} securities x {} months, seed {}) to {}",
        files.len(),
        synth.n_securities,
        synth.n_months,
        synth.seed,
        config.out_dir.display()
    );
    Ok(CommandOutput {
        manifest,
        files: files.into_iter().map(|f| f.name).collect(),
        summary,
    })
}

/// Loads and cross-checks the inputs without writing anything.
pub fn cmd_ingest_check(config: &RunConfig) -> Result<CommandOutput> {
    in_stage("config", config.validate())?;
    let data = in_stage("load", load_data(config))?;
    let (dsvi, skip) = in_stage("delta-svi", compute_delta_svi(&data.svi))?;
    let calendar = data.panel.calendar();
    let span = match (calendar.first(), calendar.last()) {
        (Some(a), Some(b)) => format!("{a}..{b}"),
        _ => "empty".to_string(),
    };
    let formations = eligible_formations(&data.panel, config.window_months);
    let mut summary = String::new();
    let _ = writeln!(summary, "returns: {} securities, {} observations, months {span}",
        data.panel.n_securities(), data.panel.n_observations());
    let _ = writeln!(summary, "svi: {} months, {} delta months, {} skipped for zero volume",
        data.svi.len(), dsvi.len(), skip.skipped.len());
    let _ = writeln!(summary, "riskfree: {} months", data.risk_free.len());
    let _ = writeln!(summary, "books: {} records", data.books.len());
    let _ = writeln!(summary, "eligible June formations (window {}): {}",
        config.window_months, formations.len());
    let manifest = RunManifest::build(config, data.source_sha256.clone())?;
    Ok(CommandOutput { manifest, files: Vec::new(), summary })
}

/// Estimates exposures for every eligible formation and writes `hse.csv`.
pub fn cmd_estimate(config: &RunConfig) -> Result<CommandOutput> {
    in_stage("config", config.validate())?;
    let started = Instant::now();
    let data = in_stage("load", load_data(config))?;
    let estimate = in_stage("estimate", estimate_all(config, &data))?;
    let mut manifest = RunManifest::build(config, data.source_sha256.clone())?;
    let comments = vec![manifest.comment()];
    let mut files = vec![RenderedFile {
        name: "hse.csv".into(),
        bytes: in_stage("render", report::render_hse_csv(&estimate.exposures, &comments))?,
    }];
    manifest.wall_time_ms = started.elapsed().as_millis();
    files.push(RenderedFile {
        name: "run-manifest.toml".into(),
        bytes: manifest.to_toml().into_bytes(),
    });
    in_stage("write", write_all(&config.out_dir, &files))?;
    let mut summary = format!(
        "estimated {} exposures across {} formation years -> {}\n",
        estimate.exposures.len(),
        estimate.characteristics.len(),
        config.out_dir.join("hse.csv").display()
    );
    for note in &estimate.notes {
        let _ = writeln!(summary, "note: {note}");
    }
    Ok(CommandOutput {
        manifest,
        files: files.into_iter().map(|f| f.name).collect(),
        summary,
    })
}

/// Renders one sort (univariate or conditional) into CSV + text files.
fn render_sort(
    spec: &SortSpec,
    estimate: &EstimateOutput,
    data: &LoadedData,
    comments: &[String],
) -> Result<(Vec<RenderedFile>, String)> {
    let stem = sort_file_stem(spec);
    if spec.secondary.is_some() {
        let table = run_conditional_double_sort(
            &estimate.exposures,
            &estimate.characteristics,
            &data.panel,
            &data.risk_free,
            spec,
        )?;
        let files = vec![
            RenderedFile {
                name: format!("{stem}.csv"),
                bytes: report::render_double_sort_csv(&table, comments)?,
            },
            RenderedFile {
                name: format!("{stem}.txt"),
                bytes: report::render_double_sort_text(&table).into_bytes(),
            },
        ];
        Ok((files, report::render_double_sort_text(&table)))
    } else {
        let table = run_univariate_sort(
            &estimate.exposures,
            &estimate.characteristics,
            &data.panel,
            &data.risk_free,
            spec,
        )?;
        let files = vec![
            RenderedFile {
                name: format!("{stem}.csv"),
                bytes: report::render_sort_csv(&table, comments)?,
            },
            RenderedFile {
                name: format!("{stem}.txt"),
                bytes: report::render_sort_text(&table).into_bytes(),
            },
        ];
        Ok((files, report::render_sort_text(&table)))
    }
}

/// Runs the configured sorts and writes their tables.
pub fn cmd_sort(config: &RunConfig) -> Result<CommandOutput> {
    in_stage("config", config.validate())?;
    if config.sorts.is_empty() {
        return Err(Error::validation("no sorts configured"));
    }
    let started = Instant::now();
    let data = in_stage("load", load_data(config))?;
    let estimate = in_stage("estimate", estimate_all(config, &data))?;
    let mut manifest = RunManifest::build(config, data.source_sha256.clone())?;
    let comments = vec![manifest.comment()];
    let mut files = Vec::new();
    let mut summary = String::new();
    for spec in &config.sorts {
        let (mut sort_files, text) =
            in_stage("sort", render_sort(spec, &estimate, &data, &comments))?;
        files.append(&mut sort_files);
        let _ = writeln!(summary, "{text}");
    }
    manifest.wall_time_ms = started.elapsed().as_millis();
    files.push(RenderedFile {
        name: "run-manifest.toml".into(),
        bytes: manifest.to_toml().into_bytes(),
    });
    in_stage("write", write_all(&config.out_dir, &files))?;
    Ok(CommandOutput {
        manifest,
        files: files.into_iter().map(|f| f.name).collect(),
        summary,
    })
}

/// Builds cross-section rows and runs every configured regression spec.
pub fn run_all_fm(
    config: &RunConfig,
    data: &LoadedData,
    estimate: &EstimateOutput,
) -> Result<(Vec<CrossSectionRow>, Vec<FmResult>)> {
    let rows = build_cross_section(
        &data.panel,
        &data.risk_free,
        &estimate.exposures,
        &estimate.characteristics,
    )?;
    let specs = config.parsed_fm_specs()?;
    let mut results = Vec::with_capacity(specs.len());
    for spec in &specs {
        results.push(run_fm(&rows, spec, config.month_floor)?);
    }
    Ok((rows, results))
}

/// Runs the regressions and writes `fm-report.csv` / `fm-report.txt`.
pub fn cmd_fm(config: &RunConfig) -> Result<CommandOutput> {
    in_stage("config", config.validate())?;
    let started = Instant::now();
    let data = in_stage("load", load_data(config))?;
    let estimate = in_stage("estimate", estimate_all(config, &data))?;
    let (_, results) = in_stage("fm", run_all_fm(config, &data, &estimate))?;
    let mut manifest = RunManifest::build(config, data.source_sha256.clone())?;
    let comments = vec![manifest.comment()];
    let mut files = vec![
        RenderedFile {
            name: "fm-report.csv".into(),
            bytes: in_stage("render", report::render_fm_csv(&results, &comments))?,
        },
        RenderedFile {
            name: "fm-report.txt".into(),
            bytes: report::render_fm_text(&results).into_bytes(),
        },
    ];
    manifest.wall_time_ms = started.elapsed().as_millis();
    files.push(RenderedFile {
        name: "run-manifest.toml".into(),
        bytes: manifest.to_toml().into_bytes(),
    });
    in_stage("write", write_all(&config.out_dir, &files))?;
    Ok(CommandOutput {
        manifest,
        files: files.into_iter().map(|f| f.name).collect(),
        summary: report::render_fm_text(&results),
    })
}

/// Full pipeline: estimation dump, all sorts, all regressions, manifest.
pub fn cmd_run(config: &RunConfig) -> Result<CommandOutput> {
    in_stage("config", config.validate())?;
    let started = Instant::now();
    let data = in_stage("load", load_data(config))?;
    let estimate = in_stage("estimate", estimate_all(config, &data))?;
    let mut manifest = RunManifest::build(config, data.source_sha256.clone())?;
    let comments = vec![manifest.comment()];

    let mut files = vec![RenderedFile {
        name: "hse.csv".into(),
        bytes: in_stage("render", report::render_hse_csv(&estimate.exposures, &comments))?,
    }];
    let mut summary = String::new();
    for note in &estimate.notes {
        let _ = writeln!(summary, "note: {note}");
    }
    for spec in &config.sorts {
        let (mut sort_files, text) =
            in_stage("sort", render_sort(spec, &estimate, &data, &comments))?;
        files.append(&mut sort_files);
        let _ = writeln!(summary, "{text}");
    }
    let (_, results) = in_stage("fm", run_all_fm(config, &data, &estimate))?;
    files.push(RenderedFile {
        name: "fm-report.csv".into(),
        bytes: in_stage("render", report::render_fm_csv(&results, &comments))?,
    });
    files.push(RenderedFile {
        name: "fm-report.txt".into(),
        bytes: report::render_fm_text(&results).into_bytes(),
    });
    let _ = writeln!(summary, "{}", report::render_fm_text(&results));

    manifest.wall_time_ms = started.elapsed().as_millis();
    files.push(RenderedFile {
        name: "run-manifest.toml".into(),
        bytes: manifest.to_toml().into_bytes(),
    });
    in_stage("write", write_all(&config.out_dir, &files))?;
    Ok(CommandOutput {
        manifest,
        files: files.into_iter().map(|f| f.name).collect(),
        summary,
    })
}
