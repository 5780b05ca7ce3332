use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvdose::cli_io::{self, RunOptions};
use cvdose::control::Bandwidth;
use cvdose::simulation::BiasScale;

/// Control-variable adjusted dose-response estimation.
#[derive(Debug, Parser)]
#[command(name = "cvdose", version)]
struct Cli {
    /// Seed for simulations (overrides scenario files) and the bootstrap.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulations; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate dose-level means and write estimates.csv and friends.
    Analyze {
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Control-variable balance statistics and per-arm densities.
    Diagnose {
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Fixed KDE bandwidth; Silverman's rule when omitted.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Monte Carlo comparison of unadjusted and adjusted estimators.
    Simulate {
        scenario: PathBuf,
        /// Report bias ×10 on the outcome scale instead of relative to |μ|.
        #[arg(long)]
        absolute_bias: bool,
    },
    /// Ground-truth dose means for each scenario.
    TrueMeans { scenario: PathBuf },
}

fn run(cli: Cli) -> cvdose::Result<()> {
    let opts = RunOptions {
        out_dir: cli.out,
        seed: cli.seed,
        threads: cli.threads,
    };
    match cli.command {
        Command::Analyze { data, config } => {
            let out = cli_io::cmd_analyze(&data, &config, &opts)?;
            for line in &out.log {
                if line.starts_with("warning") {
                    eprintln!("{line}");
                }
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Diagnose {
            data,
            config,
            bandwidth,
        } => {
            let bw = match bandwidth {
                Some(h) if h > 0.0 && h.is_finite() => Bandwidth::Fixed(h),
                Some(h) => {
                    return Err(cvdose::Error::InvalidInput(format!(
                        "--bandwidth must be positive, got {h}"
                    )))
                }
                None => Bandwidth::Auto,
            };
            for f in cli_io::cmd_diagnose(&data, &config, bw, &opts)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Simulate {
            scenario,
            absolute_bias,
        } => {
            let scale = if absolute_bias {
                BiasScale::Absolute
            } else {
                BiasScale::Relative
            };
            let (reports, files) = cli_io::cmd_simulate(&scenario, scale, &opts)?;
            print!("{}", cli_io::format_table(&reports, scale)?);
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::TrueMeans { scenario } => {
            let f = cli_io::cmd_true_means(&scenario, &opts)?;
            println!("wrote {}", f.display());
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
