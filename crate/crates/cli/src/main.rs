//! `rescert`: train value networks, certify their residuals and check the
//! certified bounds against simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Parser)]
#[command(
    name = "rescert",
    version,
    about = "Train, certify and check residual-certified value functions"
)]
struct Cli {
    /// Worker threads for verification and oracle runs; 1 forces the deterministic path.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Run config file, or the name of a bundled one
    /// (scalar_exp, linear2d_lyap, pendulum_lyap, lqr_di, pendulum_hjb).
    #[arg(long, short)]
    pub config: String,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the network and write `net.txt` and `train_report.json`.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Certify the residual bound and write `certificate.json`.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Network file (default: `<out>/net.txt`).
        #[arg(long)]
        net: Option<PathBuf>,
        /// Only bound the residual from above (decrease certificate).
        #[arg(long)]
        one_sided: bool,
        /// Restrict to the sublevel set {V̂ ≤ c} after proving it separated from the boundary.
        #[arg(long)]
        sublevel: Option<f64>,
        /// Check a single ε instead of searching for the smallest one.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Compare the certified bounds with simulated values on a grid.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        net: Option<PathBuf>,
        /// Certificate file (default: `<out>/certificate.json`).
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Write V̂ and the pointwise error bound on a uniform grid as CSV.
    ExportGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        net: Option<PathBuf>,
        /// Certificate supplying ε for the bound column; without one the column is omitted.
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// CSV path (default: `<out>/grid.csv`).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the simulated value (Lyapunov) or closed-loop cost (HJB) at a point.
    OracleValue {
        #[command(flatten)]
        common: Common,
        /// Comma-separated state, e.g. `0.5,-0.2`.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// Network whose policy is simulated (HJB only).
        #[arg(long)]
        net: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(3);
        }
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let threads = cli.threads;
    let result = match cli.cmd {
        Cmd::Train { common } => commands::train(&common, threads),
        Cmd::Certify {
            common,
            net,
            one_sided,
            sublevel,
            eps,
        } => commands::certify(&common, threads, net, one_sided, sublevel, eps),
        Cmd::Check { common, net, cert } => commands::check(&common, threads, net, cert),
        Cmd::ExportGrid {
            common,
            net,
            cert,
            resolution,
            csv,
        } => commands::export_grid(&common, net, cert, resolution, csv),
        Cmd::OracleValue { common, x, net } => commands::oracle_value(&common, &x, net),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
    }
}
