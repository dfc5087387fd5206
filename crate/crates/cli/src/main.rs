mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hybridnas::events::Encoding;

use config::UsageError;

#[derive(Parser)]
#[command(
    name = "hybridnas",
    version,
    about = "Training-free architecture search for event-camera detectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Vtei,
    Mdes,
    Shist,
    Taf,
}

impl From<FormatArg> for Encoding {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Vtei => Encoding::Vtei,
            FormatArg::Mdes => Encoding::Mdes,
            FormatArg::Shist => Encoding::Shist,
            FormatArg::Taf => Encoding::Taf,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split an event file into fixed windows and encode each one to a .ten tensor.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: FormatArg,
        #[arg(long, default_value_t = 5)]
        bins: usize,
        #[arg(long, default_value_t = 40_000)]
        window_us: u64,
        #[arg(long, default_value_t = 346)]
        width: usize,
        #[arg(long, default_value_t = 260)]
        height: usize,
        /// Event file format; inferred from the extension when omitted.
        #[arg(long, value_parser = ["csv", "evt"])]
        input_format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every genome in a file (one per line) and write a proxy CSV.
    Profile {
        #[arg(long)]
        genomes: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "64x64")]
        res: String,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        /// Number of input seeds averaged per score, starting at --seed.
        #[arg(long, default_value_t = 4)]
        score_seeds: u64,
        #[arg(long, default_value_t = 5)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit successfully even when some rows failed.
        #[arg(long)]
        keep_going: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the constrained evolutionary search.
    Search {
        /// Flat key = value file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one key, e.g. --set seed=7. May be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate blended zen/MACs scores with accuracy over a grid of weights.
    SweepWeights {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-proxy, per-encoding rank correlations with accuracy.
    Correlate {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a benchmark table with a planted proxy-to-accuracy relation.
    SynthBenchmark {
        #[arg(long, default_value_t = 250)]
        rows: usize,
        #[arg(long, default_value_t = 0.6)]
        w_zen: f64,
        #[arg(long, default_value_t = 0.4)]
        w_macs: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        w_ntk: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated encodings; rows are spread over them.
        #[arg(long, default_value = "SHIST")]
        encodings: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the block plan, parameters and MACs of one genome.
    Summary {
        #[arg(long)]
        genome: String,
        #[arg(long, default_value = "64x64")]
        res: String,
        #[arg(long, default_value_t = 5)]
        bins: usize,
    },
}

/// 2 for usage mistakes, 4 for an unsatisfiable search constraint, 3 for any other failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        match cause.downcast_ref::<hybridnas::Error>() {
            Some(hybridnas::Error::Infeasible { .. }) => return 4,
            Some(hybridnas::Error::Config(_)) => return 2,
            _ => {}
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
