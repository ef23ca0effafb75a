use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pnc_sim::{
    cmd_measure_pn, cmd_simulate, cmd_stream, cmd_sweep_k, CliError, ExperimentConfig,
    DEFAULT_K_LIST,
};

#[derive(Debug, Parser)]
#[command(
    name = "pnc-sim",
    version,
    about = "OFDM phase-noise cancellation link simulator"
)]
struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run frames through the link; writes evm.csv, constellation.csv, summary.json.
    Simulate,
    /// Measure phase noise with a probe tone; writes pn_pdf.csv, pn_psd.csv, pn_fit.json.
    MeasurePn,
    /// Mean EVM per guard count; writes ksweep.csv.
    SweepK {
        /// Comma-separated guard counts.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_LIST)]
        k: Vec<usize>,
    },
    /// Send a file over the link and write what was recovered.
    Stream {
        /// Input file, or `-` for standard input.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Simulate => {
            let summary = cmd_simulate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::MeasurePn => {
            let fit = cmd_measure_pn(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
        }
        Command::SweepK { k } => {
            for row in cmd_sweep_k(&cfg, k)? {
                println!("K = {:>2}: mean EVM {:.2} dB", row.k, row.mean_evm_db);
            }
        }
        Command::Stream { input, output } => {
            let report = cmd_stream(&cfg, input, output)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnc-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
