//! Sort securities into HSE deciles and report portfolio excess returns.
//!
//! Every June, securities are ranked by their estimated search-volume
//! exposure and split into deciles; each portfolio's value-weighted excess
//! return is then tracked from the following July through June. The bottom
//! decile is labeled "Unhappy", the top "Happy", and the long-short spread
//! "Happy-Unhappy". This example runs the sort on a synthetic panel with a
//! planted premium and prints the resulting table.
//!
//! Run with: `cargo run --example univariate_sort`

use svifactor::pipeline::{estimate_all, load_data};
use svifactor::report::render_sort_text;
use svifactor::{
    run_univariate_sort, Result, RunConfig, SortSpec, SortVariable, SynthConfig, Weighting,
};

fn main() -> Result<()> {
    let config = RunConfig {
        synth: Some(SynthConfig {
            seed: 33,
            n_securities: 150,
            n_months: 132,
            premium_lambda: 1.5,
            ..SynthConfig::default()
        }),
        ..RunConfig::default()
    };
    let data = load_data(&config)?;
    let estimate = estimate_all(&config, &data)?;

    let spec = SortSpec {
        primary: SortVariable::Hse,
        n_primary: 10,
        secondary: None,
        n_secondary: None,
        weighting: Weighting::Value,
    };
    let table = run_univariate_sort(
        &estimate.exposures,
        &estimate.characteristics,
        &data.panel,
        &data.risk_free,
        &spec,
    )?;
    println!("{}", render_sort_text(&table));

    let spread = table.portfolios.last().expect("spread row");
    let stat = spread.stat().expect("enough months");
    println!(
        "planted premium 1.5 %/month; realized {} spread: {:.2} %/month (t = {:.2})",
        spread.label,
        100.0 * stat.mean,
        stat.tstat
    );
    Ok(())
}
