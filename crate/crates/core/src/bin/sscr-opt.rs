use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sscr_core::cli::{run, ExitStatus, Mode, RunConfig};

/// Joint power allocation and sensing-threshold experiments.
#[derive(Parser, Debug)]
#[command(name = "sscr-opt", version)]
struct Args {
    /// sweep-eta, optimize, sweep-tau or mc-validate
    mode: String,
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("sscr-opt: config error: {e}");
    ExitCode::from(ExitStatus::Config.code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(ExitStatus::Config.code() as u8) } else { ExitCode::SUCCESS };
        }
    };
    let mode: Mode = match args.mode.parse() {
        Ok(m) => m,
        Err(e) => return config_error(e),
    };
    let mut cfg = match &args.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => return config_error(e),
        },
        None => RunConfig::default(),
    };
    for pair in &args.set {
        if let Err(e) = cfg.apply_override(pair) {
            return config_error(e);
        }
    }
    if let Some(seed) = args.seed {
        cfg.rng.seed = seed;
    }

    let out = run(mode, &cfg);
    if !out.csv.is_empty() {
        let written = match &args.out {
            Some(path) => std::fs::write(path, &out.csv),
            None => {
                use std::io::Write;
                std::io::stdout().write_all(out.csv.as_bytes())
            }
        };
        if let Err(e) = written {
            eprintln!("sscr-opt: cannot write output: {e}");
            return ExitCode::from(ExitStatus::Config.code() as u8);
        }
    }
    if let Some(msg) = &out.message {
        eprintln!("sscr-opt: {msg}");
    }
    ExitCode::from(out.status.code() as u8)
}
