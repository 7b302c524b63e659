//! Command-line front end for the cross-chain propagation simulator.
//!
//! Subcommands: `validate-topology` (strong-connectivity check with
//! per-pair diagnostics), `run` (execute a scenario and write metrics CSVs),
//! `analyze-security` (fake/detection probability table), and `report`
//! (re-summarize a metrics directory).
//!
//! Exit codes are stable: 0 success, 1 domain failure (invalid topology,
//! out-of-range values), 2 input or parse failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xchain_core::security::{self, BreakProbabilities};
use xchain_core::sim::{self, metrics::MetricsLog, presets, ConfigError, Scenario, SimError};

const EXIT_DOMAIN: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "xchain-sim",
    version,
    about = "Deterministic multi-blockchain cross-chain propagation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the run length in ticks.
    #[arg(long, global = true)]
    duration_ticks: Option<u64>,
    /// Suppress the summary on standard output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a scenario topology is strongly connected.
    ValidateTopology {
        /// Scenario config file (or use --preset).
        config: Option<PathBuf>,
        /// Bundled preset name.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run a scenario and write flow/propagation/balances/blocks CSV files.
    Run {
        /// Scenario config file (or use --preset).
        config: Option<PathBuf>,
        /// Bundled preset name.
        #[arg(long)]
        preset: Option<String>,
        /// Output directory for the CSV files and summary.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the fake/detection probability table for the configured chains.
    AnalyzeSecurity {
        /// Scenario config file (or use --preset).
        config: Option<PathBuf>,
        /// Bundled preset name.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Summarize a metrics directory produced by `run`.
    Report {
        /// Directory holding the four CSV files.
        out_dir: PathBuf,
    },
}


/// A failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn domain(message: impl fmt::Display) -> Self {
        Failure {
            code: EXIT_DOMAIN,
            message: message.to_string(),
        }
    }

    fn input(message: impl fmt::Display) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(err: ConfigError) -> Self {
        if err.is_parse_error() {
            Failure::input(err)
        } else {
            Failure::domain(err)
        }
    }
}

impl From<SimError> for Failure {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Config(c) => c.into(),
            other => Failure::domain(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ValidateTopology { config, preset } => {
            let scenario = load_scenario(config.as_deref(), preset.as_deref())?;
            validate_topology(&scenario)
        }
        Command::Run { config, preset, out } => {
            let mut scenario = load_scenario(config.as_deref(), preset.as_deref())?;
            if let Some(seed) = cli.seed {
                scenario.rng_seed = seed;
            }
            if let Some(duration) = cli.duration_ticks {
                scenario.duration_ticks = duration;
            }
            run_scenario(&scenario, &out, cli.quiet)
        }
        Command::AnalyzeSecurity { config, preset } => {
            let scenario = load_scenario(config.as_deref(), preset.as_deref())?;
            analyze_security(&scenario)
        }
        Command::Report { out_dir } => report(&out_dir, cli.quiet),
    }
}

fn load_scenario(config: Option<&Path>, preset: Option<&str>) -> Result<Scenario, Failure> {
    match (config, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".to_string());
            Ok(Scenario::from_toml(&name, &text)?)
        }
        (None, Some(name)) => Ok(presets::load_preset(name)?),
        (Some(_), Some(_)) => Err(Failure::input(
            "give either a config path or --preset, not both",
        )),
        (None, None) => Err(Failure::input(
            "a config path or --preset is required (presets: s1_router, s1_ring, s2_router, s2_ring, fig12_indirect, fig14_direct)",
        )),
    }
}

fn validate_topology(scenario: &Scenario) -> Result<(), Failure> {
    let topology = &scenario.topology;
    let missing = topology.unreachable_pairs();
    if missing.is_empty() {
        println!(
            "topology ok: {} blockchains, {} direct connections, strongly connected, max out-degree {}",
            topology.node_count(),
            topology.edge_count(),
            topology.max_out_degree()
        );
        Ok(())
    } else {
        for (from, to) in &missing {
            println!("unreachable: {from} -> {to}");
        }
        Err(Failure::domain(format!(
            "topology is not strongly connected: {} unreachable ordered pairs",
            missing.len()
        )))
    }
}

fn run_scenario(scenario: &Scenario, out: &Path, quiet: bool) -> Result<(), Failure> {
    let log = sim::run(scenario)?;
    log.write_csv_files(out)
        .map_err(|e| Failure::domain(format!("cannot write metrics to {}: {e}", out.display())))?;
    let summary = sim::summarize(&log, scenario.warmup_fraction, scenario.summary_focus);
    let text = summary.to_string();
    std::fs::write(out.join(sim::metrics::SUMMARY_FILE), &text)
        .map_err(|e| Failure::domain(format!("cannot write summary: {e}")))?;
    if !quiet {
        print!("{text}");
        println!("metrics written to {}", out.display());
    }
    Ok(())
}

fn analyze_security(scenario: &Scenario) -> Result<(), Failure> {
    let setup = scenario
        .security
        .as_ref()
        .ok_or_else(|| Failure::domain("scenario has no [security] section"))?;
    let ps = BreakProbabilities::new(setup.probabilities.iter().copied())
        .map_err(Failure::domain)?;
    println!(
        "{:<24} {:>14} {:>14} {:>14} {:>10}",
        "chains", "pb", "pf", "unchanged", "total"
    );
    for set in &setup.sets {
        let pb = security::fake_probability(&ps, set).map_err(Failure::domain)?;
        let pf = security::detect_probability(&ps, set).map_err(Failure::domain)?;
        let unchanged = security::unchanged_probability(&ps, set).map_err(Failure::domain)?;
        let label = set
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        println!(
            "{label:<24} {pb:>14.6e} {pf:>14.6e} {unchanged:>14.6e} {:>10.6}",
            pb + pf + unchanged
        );
    }
    Ok(())
}

fn report(out_dir: &Path, quiet: bool) -> Result<(), Failure> {
    let log = MetricsLog::from_csv_dir(out_dir).map_err(|e| match e {
        sim::metrics::CsvError::Io(io) => {
            Failure::domain(format!("cannot read metrics in {}: {io}", out_dir.display()))
        }
        malformed => Failure::input(malformed),
    })?;
    let summary = sim::summarize(&log, 0.10, None);
    if !quiet {
        print!("{summary}");
    }
    Ok(())
}
