use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poaml_cli::{cmd_benchmark, cmd_gen_data, cmd_simulate, cmd_verify, CliError};

#[derive(Parser)]
#[command(name = "poaml", version, about = "Model-derived nonces for an energy-trading ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic QoS telemetry dataset as CSV.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score all five regressors on a dataset.
    Benchmark {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.2, value_parser = parse_fraction)]
        test_fraction: f64,
        /// JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a consensus simulation from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the config's round count.
        #[arg(long)]
        max_rounds: Option<u64>,
    },
    /// Check a JSON Lines ledger for tampering.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        /// Node public keys; defaults to public_keys.json next to the ledger.
        #[arg(long)]
        keys: Option<PathBuf>,
    },
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { n, seed, out } => {
            let ds = cmd_gen_data(n, seed, &out)?;
            println!("wrote {} rows to {}", ds.len(), out.display());
        }
        Command::Benchmark { data, seed, test_fraction, out } => {
            let report = cmd_benchmark(&data, seed, test_fraction, out.as_deref())?;
            print!("{}", report.render_tables());
            if let Some(p) = out {
                println!("\nreport written to {}", p.display());
            }
        }
        Command::Simulate { config, out_dir, max_rounds } => {
            let out = cmd_simulate(&config, &out_dir, max_rounds)?;
            let r = &out.report;
            println!(
                "{} nodes, {} rounds: {} committed, {} rejected, {} cached; ledgers valid and identical ({} blocks)",
                r.n_nodes,
                r.rounds_run,
                r.committed,
                r.rejected,
                r.cached,
                out.ledgers[0].len()
            );
            println!("artifacts written to {}", out_dir.display());
        }
        Command::Verify { ledger, keys } => {
            let n = cmd_verify(&ledger, keys.as_deref())?;
            println!("ok: {n} blocks verified");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
