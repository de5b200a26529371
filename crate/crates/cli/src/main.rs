//! `jsr-certify`: bounds and Lyapunov certificate searches for switched
//! linear systems, from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jsr_certify_core::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "jsr-certify", version, about = "Joint spectral radius bounds and Lyapunov certificates")]
pub struct Cli {
    /// Output format. Defaults to CSV for tables and sweeps, JSON otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Seed for randomized validation points.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Matrix family generators.
    #[command(subcommand)]
    Family(FamilyCmd),
    /// Joint spectral radius bounds.
    #[command(subcommand)]
    Jsr(JsrCmd),
    /// Certificate searches and re-validation.
    #[command(subcommand)]
    Certify(CertifyCmd),
    /// Sweeps over degree or piece count.
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Benchmark tables.
    #[command(subcommand)]
    Table(TableCmd),
}

#[derive(Subcommand, Debug)]
pub enum FamilyCmd {
    /// Write a matrix set as JSON.
    Gen(FamilyGen),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Kozyakin,
    Blondel,
    Lw,
    LwExp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Stable,
    Unstable,
}

#[derive(Args, Debug)]
pub struct FamilyGen {
    #[arg(long, value_enum)]
    pub family: FamilyName,
    #[arg(long)]
    pub k: Option<u32>,
    /// Family parameter; Lagarias–Wang defaults to the interval midpoint.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "stable")]
    pub branch: BranchArg,
    /// Normalize Lagarias–Wang so that the joint spectral radius is one.
    #[arg(long)]
    pub scaled: bool,
}

#[derive(Subcommand, Debug)]
pub enum JsrCmd {
    /// Branch-and-bound bracket on the joint spectral radius.
    Bracket(JsrBracketArgs),
}

#[derive(Args, Debug)]
pub struct JsrBracketArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub depth: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub delta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: u64,
}

#[derive(Subcommand, Debug)]
pub enum CertifyCmd {
    /// Sum-of-squares polynomial Lyapunov function of a given degree.
    Sos(CertifySos),
    /// Common or piecewise quadratic Lyapunov function.
    Quad(CertifyQuad),
    /// Polytopic Lyapunov function (planar systems only).
    Polytope(CertifyPolytope),
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, args = ["input", "validate_only"])]
pub struct Source {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Re-check a certificate file without solving anything.
    #[arg(long, value_name = "CERT.json")]
    pub validate_only: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CertifySos {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, required_unless_present = "validate_only")]
    pub degree: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Cqlf,
    Maxq,
    Minq,
}

#[derive(Args, Debug)]
pub struct CertifyQuad {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, value_enum, required_unless_present = "validate_only")]
    pub kind: Option<KindArg>,
    /// De Bruijn order (ignored for cqlf).
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Eig,
    Square,
}

#[derive(Args, Debug)]
pub struct CertifyPolytope {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 200)]
    pub max_vertices: usize,
    #[arg(long, value_enum, default_value = "eig")]
    pub init: InitArg,
}

#[derive(Subcommand, Debug)]
pub enum SweepCmd {
    /// Smallest SOS degree with a certificate at γ = 1.
    MinDegree(SweepMinDegree),
    /// Status of the piecewise quadratic search for each De Bruijn order.
    Pieces(SweepPieces),
}

#[derive(Args, Debug)]
pub struct SweepMinDegree {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub dmax: u32,
}

#[derive(Args, Debug)]
pub struct SweepPieces {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 4)]
    pub lmax: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Subcommand, Debug)]
pub enum TableCmd {
    /// Minimum SOS degree for the Lagarias–Wang benchmark, k = 2..=kmax.
    Sec5(TableSec5),
}

#[derive(Args, Debug)]
pub struct TableSec5 {
    #[arg(long)]
    pub kmax: u32,
    #[arg(long, default_value_t = 30)]
    pub dmax: u32,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports usage errors with 2 and help/version with 0
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(commands::EXIT_USAGE);
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
