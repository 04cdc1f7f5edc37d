mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Inverse medium scattering with support-regularized reconstruction.
#[derive(Parser, Debug)]
#[command(name = "scatterkit", version)]
struct Cli {
    /// TOML run configuration; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = "SCATTERKIT_JOBS")]
    jobs: Option<usize>,

    /// More logging (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a training/evaluation dataset directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Synthesize (noisy) far-field data for a contrast file.
    Simulate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Wave number [default: reconstruction.k].
        #[arg(long)]
        k: Option<f64>,
        /// Observation directions [default: p1].
        #[arg(long)]
        p: Option<usize>,
        /// Incident directions [default: q1].
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Imaging indicator of far-field data on a pixel grid.
    Image {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid side [default: n_inv].
        #[arg(long)]
        n: Option<usize>,
    },
    /// Support mask from an imaging matrix.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Extractor::Classical)]
        method: Extractor,
        /// Threshold [default: 0.5 classical, reconstruction.gamma neural].
        #[arg(long)]
        gamma: Option<f64>,
        /// UNETW1 file for `neural`.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Contrast file for `oracle`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Reconstruct a contrast from far-field data.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Algorithm,
        /// Required by `projected` and `variational`.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Optional truth on the inversion grid; adds errors to the trace.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Grid side for `landweber` without a mask [default: n_inv].
        #[arg(long)]
        n: Option<usize>,
    },
    /// Relative error of a reconstruction.
    Eval {
        #[arg(long)]
        reconstruction: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// CSV file to append a report row to.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render any matrix file as 16-bit PGM or CSV (by extension).
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Extractor {
    Classical,
    Neural,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Landweber,
    Projected,
    Variational,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<scatterkit::Error> for CliError {
    fn from(e: scatterkit::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scatterkit: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    commands::dispatch(cli.command, cfg)
}
