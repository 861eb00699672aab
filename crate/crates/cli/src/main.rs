//! `trapmem`: simulate an optically trapped ensemble memory, correlate
//! the photon events, and fit the correlation decay.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use trapmem_cli::commands::{self, CliError};

#[derive(Parser)]
#[command(
    name = "trapmem",
    version,
    about = "Dipole-trap ensemble memory: simulate photon-pair correlations and fit their decay"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print derived trap and coherence quantities; write manifest.txt
    Derive {
        /// Config file (defaults built in when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the Monte Carlo plan; write events.csv
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trials per delay
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Correlations and the Cauchy-Schwarz test from an event table
    Analyze {
        /// events.csv produced by `simulate`
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Sigma threshold counted as a significant violation
        #[arg(long, default_value_t = 2.0)]
        significance: f64,
    },
    /// Fit the correlation decay in a results table
    Fit {
        /// results.csv produced by `analyze`
        #[arg(long)]
        results: PathBuf,
        /// Config supplying the beam geometry for the deconvolution
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// derive + simulate + analyze + fit, writing every artifact
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 2.0)]
        significance: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Derive { config, out } => {
            let cfg = commands::prepare_config(config.as_deref(), None, None)?;
            commands::cmd_derive(&cfg, &out)
        }
        Cmd::Simulate {
            config,
            out,
            seed,
            trials,
        } => {
            let cfg = commands::prepare_config(config.as_deref(), seed, trials)?;
            commands::cmd_simulate(&cfg, &out)
        }
        Cmd::Analyze {
            events,
            out,
            significance,
        } => commands::cmd_analyze(&events, &out, significance),
        Cmd::Fit {
            results,
            config,
            out,
        } => {
            let cfg = commands::prepare_config(config.as_deref(), None, None)?;
            commands::cmd_fit(&results, &cfg, &out)
        }
        Cmd::Pipeline {
            config,
            out,
            seed,
            trials,
            significance,
        } => {
            let cfg = commands::prepare_config(config.as_deref(), seed, trials)?;
            commands::cmd_pipeline(&cfg, &out, significance)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here; they should exit 0. Real
            // usage mistakes are input errors, so they exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e);
        std::process::exit(e.exit_code());
    }
}
