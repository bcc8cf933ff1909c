use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use voltsmooth::commands;

/// Closed-loop voltage control simulator for battery storage on three-phase
/// radial distribution feeders.
#[derive(Parser)]
#[command(name = "voltsmooth", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario, build all models, and report dimensions and
    /// sensitivity conditioning.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run one scenario and write time series + metrics files.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the trace seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's controller (none | ofo | ofo-no-smoothing | benchmark).
        #[arg(long)]
        controller: Option<String>,
        /// Warm-up window excluded from metrics, seconds.
        #[arg(long)]
        warmup: Option<f64>,
        /// Also write a minimal SVG voltage chart.
        #[arg(long)]
        render: bool,
    },
    /// Run several controllers on the identical disturbance realization and
    /// emit a joint metrics table.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated controller list (at least 2).
        #[arg(long, value_delimiter = ',')]
        controllers: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        warmup: Option<f64>,
        #[arg(long)]
        render: bool,
    },
    /// Generate a seeded synthetic disturbance trace file.
    SynthTrace {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 18000)]
        samples: usize,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        min_mw: f64,
        #[arg(long, default_value_t = 4.0)]
        max_mw: f64,
        #[arg(long, default_value_t = 30.0)]
        mean_dwell: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => commands::cmd_validate(&scenario),
        Command::Run {
            scenario,
            out,
            seed,
            controller,
            warmup,
            render,
        } => commands::cmd_run(&scenario, &out, seed, controller.as_deref(), warmup, render),
        Command::Compare {
            scenario,
            out,
            controllers,
            seed,
            warmup,
            render,
        } => commands::cmd_compare(&scenario, &out, &controllers, seed, warmup, render),
        Command::SynthTrace {
            out,
            seed,
            samples,
            dt,
            min_mw,
            max_mw,
            mean_dwell,
        } => commands::cmd_synth_trace(&out, seed, samples, dt, min_mw, max_mw, mean_dwell),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
