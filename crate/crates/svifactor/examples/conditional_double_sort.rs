//! Control for size with a conditional double sort.
//!
//! Securities are first bucketed into size quintiles; within each size
//! bucket, HSE breakpoints are recomputed and securities are sorted again.
//! The inner sort is conditional: shifting exposures outside one size bucket
//! cannot move anyone else's inner breakpoints. Each row of the printed grid
//! is a size quintile, each column an HSE quintile plus the within-row
//! Happy-Unhappy spread.
//!
//! Run with: `cargo run --example conditional_double_sort`

use svifactor::pipeline::{estimate_all, load_data};
use svifactor::report::render_double_sort_text;
use svifactor::{
    run_conditional_double_sort, Result, RunConfig, SortSpec, SortVariable, SynthConfig, Weighting,
};

fn main() -> Result<()> {
    let config = RunConfig {
        synth: Some(SynthConfig {
            seed: 55,
            n_securities: 200,
            n_months: 132,
            premium_lambda: 1.0,
            ..SynthConfig::default()
        }),
        ..RunConfig::default()
    };
    let data = load_data(&config)?;
    let estimate = estimate_all(&config, &data)?;

    let spec = SortSpec {
        primary: SortVariable::Hse,
        n_primary: 5,
        secondary: Some(SortVariable::Size),
        n_secondary: Some(5),
        weighting: Weighting::Value,
    };
    let table = run_conditional_double_sort(
        &estimate.exposures,
        &estimate.characteristics,
        &data.panel,
        &data.risk_free,
        &spec,
    )?;
    println!("{}", render_double_sort_text(&table));

    // The last column of each row is that size bucket's HSE spread.
    println!("HSE spread by size quintile:");
    for (row_label, row) in table.outer_labels.iter().zip(&table.cells) {
        let spread = row.last().expect("spread column");
        match spread.stat() {
            Some(stat) => println!(
                "  {row_label:>5}: {:+.2} %/month (t = {:+.2})",
                100.0 * stat.mean,
                stat.tstat
            ),
            None => println!("  {row_label:>5}: too few months"),
        }
    }
    Ok(())
}
