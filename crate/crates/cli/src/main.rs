// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "qaint",
    version,
    about = "Quantization-aware artifact mitigation for pre-quantized volumes"
)]
struct Cli {
    /// Upper bound on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
#[group(required = true, multiple = false)]
pub struct BoundArgs {
    /// Error bound as a fraction of the value range.
    #[arg(long)]
    pub eps_rel: Option<f64>,
    #[arg(long)]
    pub eps_abs: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-quantize a raw float32 volume.
    Quantize {
        input: PathBuf,
        /// Extents, slowest axis first, e.g. 64,64,64.
        #[arg(long)]
        dims: String,
        #[command(flatten)]
        bound: BoundArgs,
        /// Decompressed volume (float32).
        #[arg(long)]
        out: PathBuf,
        /// Index file (int32); ε and dims go to `<out-q>.eps`.
        #[arg(long)]
        out_q: PathBuf,
    },
    /// Compensate a decompressed volume using its quantization indices.
    Mitigate {
        decomp: PathBuf,
        q: PathBuf,
        /// Defaults to the sidecar next to the index file.
        #[arg(long)]
        dims: Option<String>,
        /// Defaults to the sidecar next to the index file.
        #[arg(long)]
        eps_abs: Option<f64>,
        #[arg(long, default_value_t = qaint_core::mitigate::DEFAULT_ETA)]
        eta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print `ssim,psnr,max_abs,max_rel` for a test volume against a reference.
    Metrics {
        reference: PathBuf,
        test: PathBuf,
        #[arg(long)]
        dims: String,
    },
    /// Error-bound versus distortion sweep over methods.
    Sweep {
        input: PathBuf,
        #[arg(long)]
        dims: String,
        /// Comma-separated relative bounds, ascending.
        #[arg(long, default_value = "1e-4,5e-4,1e-3,5e-3,1e-2,5e-2")]
        bounds: String,
        /// Subset of none,compensate,gaussian,uniform,wiener.
        #[arg(long, default_value = "none,compensate,gaussian,uniform,wiener")]
        methods: String,
        #[arg(long, default_value_t = qaint_core::mitigate::DEFAULT_ETA)]
        eta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a distributed strategy over simulated ranks.
    Parallel {
        decomp: PathBuf,
        q: PathBuf,
        #[arg(long)]
        dims: Option<String>,
        #[arg(long)]
        eps_abs: Option<f64>,
        #[arg(long, default_value_t = qaint_core::mitigate::DEFAULT_ETA)]
        eta: f64,
        /// Blocks per axis, e.g. 2,2,2.
        #[arg(long)]
        splits: String,
        /// embarrassing, exact or approximate.
        #[arg(long, default_value = "approximate")]
        strategy: String,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.exchange.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> error::CliResult<()> {
    let workers = commands::init_workers(cli.workers)?;
    match cli.command {
        Command::Quantize {
            input,
            dims,
            bound,
            out,
            out_q,
        } => commands::cmd_quantize(&input, &dims, bound, &out, &out_q),
        Command::Mitigate {
            decomp,
            q,
            dims,
            eps_abs,
            eta,
            out,
        } => commands::cmd_mitigate(&decomp, &q, dims.as_deref(), eps_abs, eta, &out),
        Command::Metrics {
            reference,
            test,
            dims,
        } => commands::cmd_metrics(&reference, &test, &dims),
        Command::Sweep {
            input,
            dims,
            bounds,
            methods,
            eta,
            out,
        } => commands::cmd_sweep(&input, &dims, &bounds, &methods, eta, &out),
        Command::Parallel {
            decomp,
            q,
            dims,
            eps_abs,
            eta,
            splits,
            strategy,
            out,
            log,
        } => commands::cmd_parallel(
            commands::ParallelArgs {
                decomp: &decomp,
                q: &q,
                dims: dims.as_deref(),
                eps_abs,
                eta,
                splits: &splits,
                strategy: &strategy,
                out: &out,
                log: log.as_deref(),
            },
            workers,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qaint: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
