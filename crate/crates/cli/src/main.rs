//! `bi-ice`: synthesize data, train a Bi-ICE module and produce its
//! interpretability reports.
//!
//! Progress is written to stdout as JSON lines. Failures are written to
//! stderr as a single JSON object; the exit code is 1 for runtime failures
//! and 2 for bad flags, configuration or input files.

mod commands;
mod config;
mod failure;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bi-ice", version, about = "Bi-ICE concept models over patch embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-concept dataset from the `synth` section.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train from fresh parameters.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ann: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class global concept scores and per-sample spatial activations.
    Importance {
        #[command(flatten)]
        eval: EvalArgs,
        /// Restrict the report to one class.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long, default_value_t = bi_ice::eval::ACTIVATION_THRESHOLD)]
        threshold: f64,
    },
    /// Concept insertion and deletion curves against random orders.
    Curves {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        /// Number of random orders in the baseline.
        #[arg(long, default_value_t = 10)]
        random_seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Winning spatial concept of every patch of one sample.
    Localize {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        sample: usize,
        #[arg(long, default_value_t = bi_ice::eval::ACTIVATION_THRESHOLD)]
        threshold: f64,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        /// Check at these parameters instead of a fresh initialization.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Write the concept snapshots of a training run as BIEM1 plus
    /// convergence series.
    ExportConcepts {
        /// Directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Planted concepts (from `synth`) to score recovery against.
        #[arg(long)]
        planted: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ann: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Insertion,
    Deletion,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { config, out } => commands::synth(&config, out),
        Command::Train { config, data, ann, out } => commands::train(&config, data, ann, out),
        Command::Importance { eval, class, threshold } => {
            commands::importance(&eval.into(), class, threshold)
        }
        Command::Curves {
            eval,
            mode,
            random_seeds,
            seed,
        } => {
            let modes = match mode {
                Mode::Insertion => vec![bi_ice::eval::CurveMode::Insertion],
                Mode::Deletion => vec![bi_ice::eval::CurveMode::Deletion],
                Mode::Both => vec![bi_ice::eval::CurveMode::Insertion, bi_ice::eval::CurveMode::Deletion],
            };
            commands::curves(&eval.into(), &modes, random_seeds, seed)
        }
        Command::Localize { eval, sample, threshold } => commands::localize(&eval.into(), sample, threshold),
        Command::Gradcheck { config, params, eps } => commands::gradcheck(&config, params.as_deref(), eps),
        Command::ExportConcepts { run, planted, out } => commands::export_concepts(&run, planted.as_deref(), out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::to_string(&f).expect("failure serializes");
            let _ = writeln!(std::io::stderr(), "{line}");
            ExitCode::from(f.code)
        }
    }
}

impl From<EvalArgs> for commands::EvalInputs {
    fn from(a: EvalArgs) -> Self {
        commands::EvalInputs {
            params: a.params,
            data: a.data,
            ann: a.ann,
            out: a.out,
        }
    }
}
