use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convbound_cli::bench::{BenchOptions, Method};
use convbound_cli::commands::{self, ExactMethod, Outcome, OutputFormat};
use convbound_cli::compare::CompareOptions;
use convbound_cli::error::EXIT_INPUT;
use convbound_cli::manifest::Manifest;
use convbound_cli::{init_threads, CliResult};
use convbound_core::oracle::DEFAULT_SIZE_CAP;
use convbound_core::{FilterDims, PowerIterOptions};

/// Spectral-norm bounds for 2D multi-channel circular convolutions.
///
/// Filters are read from CFT1 binary files or, for paths ending in .json,
/// from {"dims": [c_out, c_in, h, w], "values": [...]}. Worker threads can
/// be capped with CONVBOUND_THREADS.
#[derive(Parser)]
#[command(name = "convbound", version)]
struct Cli {
    /// Emit CSV tables instead of JSON.
    #[arg(long, global = true)]
    csv: bool,

    #[command(flatten)]
    power: PowerArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PowerArgs {
    /// Power-iteration relative tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,

    /// Power-iteration iteration cap.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_iter: usize,

    /// Seed of the power-iteration start vector.
    #[arg(long, global = true, default_value_t = 0)]
    power_seed: u64,
}

impl PowerArgs {
    fn options(&self) -> PowerIterOptions {
        PowerIterOptions { tol: self.tol, max_iter: self.max_iter, seed: self.power_seed }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Four reshape norms and the bound (independent of the input size).
    Bound { filter: PathBuf },

    /// Exact spectral norm for n x n inputs.
    Exact {
        filter: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ExactMethod::Fft)]
        method: ExactMethod,
        /// With --method oracle, also dump the Jacobian as CSV.
        #[arg(long)]
        jacobian_csv: Option<PathBuf>,
    },

    /// Bound versus exact norm for every filter in a manifest.
    Compare {
        /// JSON list of {dims, seed | path, n, label}.
        manifest: PathBuf,
        /// Input size for entries without their own n.
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Seeds per generated entry, counting up from its seed.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Also run the matrix-free exact method.
        #[arg(long)]
        matfree: bool,
    },

    /// Timing table; the bound is measured once per shape.
    Bench {
        /// Filter shapes such as 16x16x3x3.
        #[arg(required = true, num_args = 1..)]
        shapes: Vec<FilterDims>,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Any of bound, fft, matfree, oracle.
        #[arg(long, value_delimiter = ',', default_value = "bound,fft")]
        methods: Vec<Method>,
        /// Seed of the random filters.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Finite-difference check of the bound's gradient.
    Gradcheck {
        filter: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Absolute tolerance reported in the pass field.
        #[arg(long = "fd-tol", default_value_t = 1e-5)]
        fd_tol: f64,
    },

    /// Regularized teacher-student fit; writes the trace CSV.
    Regdemo {
        /// JSON config; missing fields take defaults.
        config: PathBuf,
        /// Write the trace here and print a summary instead.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Write a filter with i.i.d. standard-normal entries.
    Gen {
        dims: FilterDims,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<Outcome> {
    init_threads()?;
    let power = cli.power.options();
    let format = if cli.csv { OutputFormat::Csv } else { OutputFormat::Json };
    match cli.command {
        Command::Bound { filter } => commands::cmd_bound(&filter, &power, format),
        Command::Exact { filter, n, method, jacobian_csv } => {
            commands::cmd_exact(&filter, n, method, &power, jacobian_csv.as_deref(), format)
        }
        Command::Compare { manifest, n, seeds, matfree } => {
            let manifest = Manifest::load(&manifest)?;
            commands::cmd_compare(&manifest, &CompareOptions { n, seeds, matfree, power }, format)
        }
        Command::Bench { shapes, n_list, repeats, methods, seed } => {
            let opts = BenchOptions { shapes, n_list, repeats, methods, seed, power, size_cap: DEFAULT_SIZE_CAP };
            commands::cmd_bench(&opts, format)
        }
        Command::Gradcheck { filter, eps, fd_tol } => commands::cmd_gradcheck(&filter, eps, fd_tol, &power, format),
        Command::Regdemo { config, out } => {
            let cfg = commands::load_regdemo_config(&config)?;
            commands::cmd_regdemo(&cfg, out.as_deref())
        }
        Command::Gen { dims, seed, out } => commands::cmd_gen(dims, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            let _ = std::io::stdout().write_all(out.stdout.as_bytes());
            let _ = std::io::stderr().write_all(out.stderr.as_bytes());
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
