//! Scenario runner for the optomechanical gyroscope simulation.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! precondition failure, 3 partial success (some sweep cells errored,
//! results were still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qomg_core::experiments::{available_scenarios, run_scenario_by_name, validate_config};
use qomg_core::model::{Config, UnitMode};
use qomg_core::{oracle, QomgError};

#[derive(Parser)]
#[command(name = "qomg", version, about = "Quantum optomechanical gyroscope scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write <name>.csv plus <name>.meta.json
    Run {
        /// Scenario name (see `qomg list`)
        scenario: String,
        /// TOML config file; defaults are used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory, created if missing
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
        /// Parameter override as key=value, repeatable
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// List built-in scenarios and any defined by a config file
    List {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Parse a config file and dry-run every scenario it touches
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run numerical cross-check suites (hilbert, model, qfi, evolution,
    /// measurement, open-system, or all)
    Oracle {
        module: String,
    },
}

fn failure_code(err: &QomgError) -> u8 {
    match err {
        QomgError::Config(_) | QomgError::InvalidInput(_) => 1,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, u8> {
    match path {
        None => Ok(Config::default_for(UnitMode::Si)),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                eprintln!("error: cannot read {}: {e}", p.display());
                1u8
            })?;
            Config::parse(&text).map_err(|e| {
                eprintln!("error: {e}");
                failure_code(&e)
            })
        }
    }
}

fn cmd_run(
    scenario: &str,
    config: Option<&Path>,
    out: &Path,
    jobs: Option<usize>,
    params: &[String],
) -> u8 {
    if let Some(n) = jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = match run_scenario_by_name(&cfg, scenario, params) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return failure_code(&e);
        }
    };
    let (csv_path, meta_path) = match result.write_files(out) {
        Ok(paths) => paths,
        Err(e) => {
            eprintln!("error: cannot write results to {}: {e}", out.display());
            return 1;
        }
    };
    println!("wrote {}", csv_path.display());
    println!("wrote {}", meta_path.display());
    let m = &result.metadata;
    let data_columns = result.columns.len().saturating_sub(1);
    println!(
        "{}: {} rows x {} columns in {:.1} s",
        result.scenario, m.rows, data_columns, m.wall_time_s
    );
    let failed = result.error_count();
    if failed > 0 {
        let total = m.rows * data_columns;
        eprintln!("warning: {failed} of {total} cells failed; markers are in the CSV");
        return 3;
    }
    0
}

fn cmd_list(config: Option<&Path>) -> u8 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let builtin = available_scenarios();
    let width = builtin.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, description) in &builtin {
        println!("{name:width$}  {description}");
    }
    for name in cfg.scenario_overrides.keys() {
        if !builtin.iter().any(|(n, _)| n == name) {
            println!("{name:width$}  custom scenario from config");
        }
    }
    0
}

fn cmd_validate(config: &Path) -> u8 {
    let cfg = match load_config(Some(config)) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match validate_config(&cfg) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            failure_code(&e)
        }
    }
}

fn cmd_oracle(module: &str) -> u8 {
    let reports = match oracle::run_suite(module) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return failure_code(&e);
        }
    };
    let mut passed = 0usize;
    let mut total = 0usize;
    for report in &reports {
        println!("{} ({:.1} s)", report.module, report.seconds);
        for check in &report.checks {
            total += 1;
            let verdict = if check.passed {
                passed += 1;
                "pass"
            } else {
                "FAIL"
            };
            println!("  [{verdict}] {}: {} ({:.2} s)", check.name, check.detail, check.seconds);
        }
    }
    if passed == total {
        println!("all {total} checks passed");
        0
    } else {
        println!("{} of {total} checks failed", total - passed);
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run { scenario, config, out, jobs, params } => {
            cmd_run(scenario, config.as_deref(), out, *jobs, params)
        }
        Command::List { config } => cmd_list(config.as_deref()),
        Command::Validate { config } => cmd_validate(config),
        Command::Oracle { module } => cmd_oracle(module),
    };
    ExitCode::from(code)
}
