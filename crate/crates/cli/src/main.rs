mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fiberfem::FiberError;

/// Multiple solutions of -Δu - f(u) = g on a rectangle by fiber tracing.
#[derive(Parser, Debug)]
#[command(name = "fiberfem", version)]
struct Cli {
    /// Worker threads for assembly and path fan-out (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArg {
    /// Problem configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a uniform rectangle mesh as JSON.
    Mesh {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long, default_value_t = 2.0)]
        height: f64,
        #[arg(long, default_value = "mesh.json")]
        out: PathBuf,
    },
    /// Smallest eigenpairs of the Dirichlet Laplacian.
    Eigen {
        #[command(flatten)]
        config: ConfigArg,
        /// Number of eigenpairs (defaults to the config's k).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trace the fiber of g over a height window.
    Trace {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, allow_hyphen_values = true)]
        tmin: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        tmax: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Height-space direction, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenpairs, fiber trace and all crossings of the height of g (|J| = 1).
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Image of a planar path (|J| = 2); without --path runs the configured
    /// circle / half-axis double-point construction.
    Path2d {
        #[command(flatten)]
        config: ConfigArg,
        /// "circle:r=R" or "ray:angle=A[,length=L]".
        #[arg(long)]
        path: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a preimage of a target height pair (|J| = 2).
    Preimage {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute ‖F(u) - g‖_Y for a stored solution vector.
    Residual {
        #[command(flatten)]
        config: ConfigArg,
        /// Solution CSV (node_index,value).
        #[arg(long)]
        solution: PathBuf,
        /// Exit with status 3 if the residual exceeds the solution tolerance.
        #[arg(long)]
        check: bool,
    },
}

fn init_logging() {
    let level = match std::env::var("FIBERFEM_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

pub fn exit_code(e: &FiberError) -> u8 {
    match e {
        FiberError::Io { .. } => 4,
        e if e.is_convergence() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let threads = cli.threads;
    match fiberfem::parallel::with_threads(threads, || run::execute(cli.command, threads)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
