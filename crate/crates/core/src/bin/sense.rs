use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sense_core::harness::{
    config_crlb, config_overhead, emit_results, emit_spectrum, load_config, run_monte_carlo, spectrum_dump,
    ExperimentConfig, HarnessError, HarnessResult, Method, RunOptions,
};

#[derive(Parser)]
#[command(name = "sense", version, about = "Multi-AP collaborative sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump one method's position spectrum over the prior box.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        /// Trial whose frames are used.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Grid step in metres.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Monte Carlo run over all configured methods.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "SENSE_THREADS")]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Write 0 for every wall time so that outputs are reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Print the CRLB report at the true target state.
    Crlb {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print per-pair transmission overhead of each fusion mode.
    Overhead {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> HarnessResult<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| HarnessError::Parse(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn load_with(path: &PathBuf, trials: Option<usize>, seed: Option<u64>) -> HarnessResult<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Spectrum {
            config,
            method,
            out,
            trial,
            step,
        } => {
            let cfg = load_config(&config)?;
            let grid = spectrum_dump(&cfg, method, trial, step)?;
            emit_spectrum(method, &grid, &out)?;
            let peak = grid.argmax();
            eprintln!(
                "{method}: peak at ({:.3}, {:.3}), wrote {}",
                peak[0],
                peak[1],
                out.join("spectrum.csv").display()
            );
        }
        Command::Mc {
            config,
            trials,
            seed,
            threads,
            out,
            no_timing,
        } => {
            let cfg = load_with(&config, trials, seed)?;
            let opts = RunOptions {
                threads,
                timing: !no_timing,
            };
            let result = run_monte_carlo(&cfg, opts)?;
            emit_results(&result.records, &result.summary, &out)?;
            for (method, stats) in &result.summary.rmse {
                match stats {
                    Some(s) => eprintln!(
                        "{method:>16}  rmse {:.4} m  {:.4} m/s  median {:.4} m  {:.4} m/s  failed {}",
                        s.position_m, s.velocity_mps, s.median_position_m, s.median_velocity_mps, s.trials_failed
                    ),
                    None => eprintln!("{method:>16}  no successful trials"),
                }
            }
        }
        Command::Crlb { config } => {
            let cfg = load_config(&config)?;
            print_json(&config_crlb(&cfg)?)?;
        }
        Command::Overhead { config } => {
            let cfg = load_config(&config)?;
            print_json(&config_overhead(&cfg)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
