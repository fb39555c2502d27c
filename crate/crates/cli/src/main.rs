mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convex_order::order::OrderRelation;
use convex_order::sim::BatteryChoice;

/// Convex-order checks, certificates and Monte Carlo inequality tests.
///
/// Exit status: 0 when the pair is ordered or the inequalities hold, 1 when
/// it is not ordered or a violation was found, 2 on any error.
#[derive(Parser, Debug)]
#[command(name = "convex-order", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide an order between two measures.
    #[command(subcommand)]
    Order(OrderCmd),
    /// The sets C_x and witness simplices.
    #[command(subcommand)]
    Geometry(GeometryCmd),
    /// Simulate pairs of terminal values and compare them.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Transition kernels carrying mu onto nu.
    #[command(subcommand)]
    Kernel(KernelCmd),
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Measure file for mu.
    #[arg(long)]
    mu: PathBuf,
    /// Measure file for nu.
    #[arg(long)]
    nu: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Relation {
    Cx,
    Cxp,
    Cxpi,
}

impl From<Relation> for OrderRelation {
    fn from(r: Relation) -> Self {
        match r {
            Relation::Cx => OrderRelation::Cx,
            Relation::Cxp => OrderRelation::Cxp,
            Relation::Cxpi => OrderRelation::Cxpi,
        }
    }
}

#[derive(Subcommand, Debug)]
enum OrderCmd {
    /// Decide `mu <= nu` and write the certificate.
    Check {
        #[arg(long, value_enum)]
        relation: Relation,
        #[command(flatten)]
        pair: PairArgs,
        /// Where to write the coupling or separator.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Also re-check the certificate in exact rational arithmetic.
        #[arg(long)]
        exact: bool,
        /// Check an existing certificate file instead of solving.
        #[arg(long, conflicts_with = "certificate")]
        validate: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GeometryCmd {
    /// Half-space description (and planar vertices) of C_x.
    CxSet {
        #[command(flatten)]
        pair: PairArgs,
        /// Comma-separated coordinates of x.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// JSON array of points; computes C_E for that set instead.
        #[arg(long)]
        subset: Option<PathBuf>,
        /// Number of sampled directions (default: exact critical set in the plane).
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long, required_unless_present = "validate")]
        out: Option<PathBuf>,
        /// Check that a polytope file contains x and its own vertices.
        #[arg(long, conflicts_with = "out")]
        validate: Option<PathBuf>,
    },
    /// Atoms of nu inside C_x with x as their barycenter.
    Witness {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, required_unless_present = "validate")]
        out: Option<PathBuf>,
        /// Check a witness file against nu and x.
        #[arg(long, conflicts_with = "out")]
        validate: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Paths per side.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Battery {
    Auto,
    Full,
    DirectionallyConvex,
}

impl From<Battery> for BatteryChoice {
    fn from(b: Battery) -> Self {
        match b {
            Battery::Auto => BatteryChoice::Auto,
            Battery::Full => BatteryChoice::Full,
            Battery::DirectionallyConvex => BatteryChoice::DirectionallyConvex,
        }
    }
}

#[derive(Subcommand, Debug)]
enum SimCmd {
    /// Compare E phi(F) with E phi(G) over the test battery.
    Compare {
        #[command(flatten)]
        sim: SimArgs,
        /// Simulate even if the scenario's hypotheses fail.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value = "auto")]
        battery: Battery,
    },
    /// Laplace-transform tail bounds from G against the empirical tail of F.
    Deviation {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated thresholds.
        #[arg(long)]
        x_grid: String,
        /// Comma-separated positive exponents (default 0.05, 0.10, ..., 10).
        #[arg(long)]
        lambda_grid: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Lp,
    Iterative,
}

#[derive(Subcommand, Debug)]
enum KernelCmd {
    /// Build K with mu K = nu and barycentric rows.
    Build {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, value_enum, default_value = "iterative")]
        method: Method,
        #[arg(long, default_value_t = 200)]
        max_rounds: usize,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        eps_floor: f64,
        #[arg(long, required_unless_present = "validate")]
        out: Option<PathBuf>,
        /// Check a kernel file against mu and nu.
        #[arg(long, conflicts_with = "out")]
        validate: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), io::CliError> {
    let Ok(v) = std::env::var("CONVEX_ORDER_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        io::CliError::Arg(format!(
            "CONVEX_ORDER_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| io::CliError::Arg(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Order(c) => commands::order(c),
        Command::Geometry(c) => commands::geometry(c),
        Command::Sim(c) => commands::sim(c),
        Command::Kernel(c) => commands::kernel(c),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
