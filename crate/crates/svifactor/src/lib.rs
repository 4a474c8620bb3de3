//! Search-volume factor research engine.
//!
//! Estimates each stock's sensitivity to changes in a search-volume index
//! ("happiness search exposure", HSE) from rolling regressions, forms
//! characteristic-sorted portfolios on it, and runs monthly cross-sectional
//! (Fama-MacBeth) regressions of stock returns on size, value, and HSE — on
//! either synthetic panels or user-supplied CSV data.
//!
//! Start with the `examples/` directory; each example exercises one stage of
//! the pipeline end to end. The `svifactor` binary wraps the same stages as
//! subcommands.

pub mod calendar;
pub mod error;
pub mod exposure;
pub mod fmreg;
pub mod ingest;
pub mod ols;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod sorts;
pub mod stats;
pub mod synth;

pub use calendar::{formation_window, months_between, MonthStamp};
pub use error::{Error, Result};
pub use exposure::{estimate_hse, ExposureConfig, ExposureOutcome, ExposureRecord, WinsorScope};
pub use fmreg::{
    build_cross_section, run_fm, split_subsample, Coefficient, CrossSectionRow, FmResult, FmSpec,
    Subsample,
};
pub use ingest::{
    build_characteristics, compute_beme, compute_delta_svi, load_books, load_return_panel,
    load_risk_free, load_svi, BeMe, CharacteristicsRow, CharacteristicsTable, DeltaSviSeries,
    SviSeries,
};
pub use panel::{BookEquityRecord, Observation, ReturnPanel, RiskFreeSeries, SecurityId};
pub use pipeline::{
    cmd_estimate, cmd_fm, cmd_ingest_check, cmd_run, cmd_sort, cmd_synth, InputPaths, RunConfig,
    RunManifest,
};
pub use sorts::{
    run_conditional_double_sort, run_univariate_sort, CharacteristicsByYear, DoubleSortTable,
    PortfolioSeries, SortSpec, SortTable, SortVariable, Weighting,
};
pub use stats::{median, percentile, ts_stat, winsorize, TsStat, WinsorSpec};
pub use synth::{generate, GroundTruth, SecurityTruth, SynthConfig, SynthDataset};
