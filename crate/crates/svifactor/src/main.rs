//! Thin command-line driver over the library pipeline.
//!
//! Settings come from (lowest to highest precedence) built-in defaults, a
//! `--config` TOML file, and command-line flags; several flags also read
//! `SVIFACTOR_*` environment variables. Exit codes: 0 success, 2 validation,
//! 3 data or I/O error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use svifactor::pipeline::{
    cmd_estimate, cmd_fm, cmd_ingest_check, cmd_run, cmd_sort, cmd_synth, CommandOutput,
    InputPaths, RunConfig,
};
use svifactor::sorts::Weighting;
use svifactor::synth::SynthConfig;
use svifactor::{Error, Result};

#[derive(Parser)]
#[command(
    name = "svifactor",
    version,
    about = "Search-volume factor research engine: exposure estimation, portfolio sorts, and monthly cross-sectional regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; flags override file values.
    #[arg(long, global = true, env = "SVIFACTOR_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for reports and datasets.
    #[arg(long, global = true, env = "SVIFACTOR_OUT", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Results are identical for any
    /// thread count.
    #[arg(long, global = true, env = "SVIFACTOR_THREADS", value_name = "N")]
    threads: Option<usize>,

    /// Estimation window in months.
    #[arg(long, global = true, env = "SVIFACTOR_WINDOW", value_name = "MONTHS")]
    window: Option<u32>,

    /// Minimum aligned observations per security.
    #[arg(long, global = true, env = "SVIFACTOR_MIN_OBS", value_name = "N")]
    min_obs: Option<usize>,

    /// RNG seed for synthetic data.
    #[arg(long, global = true, env = "SVIFACTOR_SEED", value_name = "SEED")]
    seed: Option<u64>,

    /// Portfolio weighting: value or equal. Applies to every configured sort.
    #[arg(long, global = true, env = "SVIFACTOR_WEIGHTING", value_name = "SCHEME")]
    weighting: Option<String>,

    /// Returns CSV (`security,year,month,ret,mktcap`).
    #[arg(long, global = true, value_name = "PATH")]
    returns: Option<PathBuf>,

    /// Search-volume CSV (`year,month,svi`).
    #[arg(long, global = true, value_name = "PATH")]
    svi: Option<PathBuf>,

    /// Book-equity CSV (`security,year,equity,preferred,dec_mktcap`).
    #[arg(long, global = true, value_name = "PATH")]
    books: Option<PathBuf>,

    /// Risk-free CSV (`year,month,rf`).
    #[arg(long, global = true, value_name = "PATH")]
    riskfree: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (four input CSVs plus ground_truth.csv).
    Synth {
        /// Number of securities.
        #[arg(long, value_name = "N")]
        securities: Option<usize>,
        /// Number of months.
        #[arg(long, value_name = "N")]
        months: Option<usize>,
    },
    /// Load and cross-check the inputs without writing reports.
    IngestCheck,
    /// Estimate exposures for every eligible June and write hse.csv.
    Estimate,
    /// Run the configured portfolio sorts and write their tables.
    Sort,
    /// Run the cross-sectional regressions and write fm-report.csv.
    Fm {
        /// Also run the full model on big/small/value/growth subsamples.
        #[arg(long)]
        subsamples: bool,
    },
    /// Full pipeline: estimation, sorts, regressions, manifest.
    Run {
        /// Also run the full model on big/small/value/growth subsamples.
        #[arg(long)]
        subsamples: bool,
    },
}

/// Builds the effective config: defaults, then file, then flags.
fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_toml_file(path)?,
        None => RunConfig::default(),
    };

    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(window) = cli.window {
        config.window_months = window;
        if let Some(synth) = &mut config.synth {
            synth.window_months = window;
        }
    }
    if let Some(min_obs) = cli.min_obs {
        config.min_obs = min_obs;
    }
    if let Some(weighting) = &cli.weighting {
        let weighting: Weighting = weighting.parse()?;
        config.weighting = weighting;
        for sort in &mut config.sorts {
            sort.weighting = weighting;
        }
    }

    let any_input =
        [&cli.returns, &cli.svi, &cli.books, &cli.riskfree].iter().any(|p| p.is_some());
    if any_input {
        let mut inputs = config.inputs.take().unwrap_or_else(|| InputPaths {
            returns: PathBuf::new(),
            svi: PathBuf::new(),
            books: PathBuf::new(),
            riskfree: PathBuf::new(),
        });
        if let Some(p) = &cli.returns {
            inputs.returns = p.clone();
        }
        if let Some(p) = &cli.svi {
            inputs.svi = p.clone();
        }
        if let Some(p) = &cli.books {
            inputs.books = p.clone();
        }
        if let Some(p) = &cli.riskfree {
            inputs.riskfree = p.clone();
        }
        for (label, path) in
            [("returns", &inputs.returns), ("svi", &inputs.svi), ("books", &inputs.books), ("riskfree", &inputs.riskfree)]
        {
            if path.as_os_str().is_empty() {
                return Err(Error::validation(format!(
                    "input files are incomplete: missing --{label}"
                )));
            }
        }
        config.inputs = Some(inputs);
    }

    if let Some(seed) = cli.seed {
        config.synth.get_or_insert_with(SynthConfig::default).seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<CommandOutput> {
    let mut config = build_config(cli)?;
    match &cli.command {
        Command::Synth { securities, months } => {
            let synth = config.synth.get_or_insert_with(SynthConfig::default);
            if let Some(n) = securities {
                synth.n_securities = *n;
            }
            if let Some(n) = months {
                synth.n_months = *n;
            }
            cmd_synth(&config)
        }
        Command::IngestCheck => cmd_ingest_check(&config),
        Command::Estimate => cmd_estimate(&config),
        Command::Sort => cmd_sort(&config),
        Command::Fm { subsamples } => {
            config.fm_subsamples |= subsamples;
            cmd_fm(&config)
        }
        Command::Run { subsamples } => {
            config.fm_subsamples |= subsamples;
            cmd_run(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
        {
            eprintln!("error: validation: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(output) => {
            print!("{}", output.summary);
            if !(output.summary.is_empty() || output.summary.ends_with('\n')) {
                println!();
            }
            if !output.files.is_empty() {
                println!("manifest {}", output.manifest.manifest_hash);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
