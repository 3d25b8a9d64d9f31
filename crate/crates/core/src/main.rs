use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lp_ito::config::{driver_catalog, ExperimentConfig};
use lp_ito::experiment::run_experiment;
use lp_ito::report::write_reports;

#[derive(Parser)]
#[command(name = "lp-ito", about = "Monte Carlo verification of jump-process p-power identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's number of Monte Carlo paths.
        #[arg(long)]
        paths: Option<u64>,
        /// Write the CSV report and JSON summary into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Fail with a nonzero exit status when an assertion fails (default).
        #[arg(long, overrides_with = "no_assert")]
        assert: bool,
        /// Report assertion outcomes without failing the process.
        #[arg(long, overrides_with = "assert")]
        no_assert: bool,
    },
    /// Print the built-in driver catalog with parameter schemas.
    ListDrivers,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListDrivers => {
            for entry in driver_catalog() {
                println!("{:<12} {}", entry.id, entry.summary);
                println!("{:<12}   parameters: {}", "", entry.parameters);
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, paths, out_dir, assert: _, no_assert } => {
            run(config, seed, paths, out_dir, !no_assert)
        }
    }
}

fn run(
    config_path: PathBuf,
    seed: Option<u64>,
    paths: Option<u64>,
    out_dir: Option<PathBuf>,
    assert_mode: bool,
) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(k) = paths {
        cfg.k_paths = k;
    }
    let name = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string());
    let (rows, summary) = match run_experiment(&cfg, &name) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(dir) = &out_dir {
        if let Err(e) = write_reports(dir, &name, &rows, &summary) {
            eprintln!("error: failed to write reports: {e}");
            return ExitCode::FAILURE;
        }
    }
    for a in &summary.assertions {
        println!(
            "{} {}: value {:.3e} bound {:.3e}",
            if a.passed { "pass" } else { "FAIL" },
            a.name,
            a.value,
            a.bound
        );
    }
    match summary.to_json() {
        Ok(text) if out_dir.is_none() => println!("{text}"),
        _ => {}
    }
    if assert_mode {
        if let Some(f) = summary.first_failure() {
            eprintln!(
                "assertion failed: {} (value {:.6e} exceeds bound {:.6e})",
                f.name, f.value, f.bound
            );
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
