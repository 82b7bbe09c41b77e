//! Command-line front end: reads a JSON problem file, runs one analysis,
//! and writes a report as "key: value" text on stdout or as JSON with
//! --json. Exit codes: 0 success, 1 usage/format error, 2 mathematical
//! failure (the report carries a certificate).

mod commands;
mod problem;
mod report;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};

use commands::{CommandError, Flags};
use polyann::unipotence::LimitStrategy;

#[derive(Parser)]
#[command(
    name = "polyann",
    about = "Exact analysis of logarithmic differential modules on p-adic polyannuli",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    /// Averaging operators over all variables.
    Dl,
    /// Operator polynomials in the last variable.
    Qj,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Parse and validate a problem file; checks integrability of
    /// connections and reports norms of series.
    Validate(CommonArgs),
    /// Residue matrices along every boundary divisor.
    Residues(CommonArgs),
    /// Nilpotency of every residue; fails with a certificate otherwise.
    Nilpotency(CommonArgs),
    /// Canonical gauge to constant matrices, with a certified radius.
    Gauge(CommonArgs),
    /// Unipotent filtration: gauge, adapted basis, step ranks.
    Filtration(CommonArgs),
    /// Horizontal section by the limit-operator sequences.
    Horizontal(CommonArgs),
    /// Gauge coefficient growth in one variable and the estimated
    /// convergence radius exponent.
    Radius(CommonArgs),
    /// Taylor transport coefficients, decay view, and cocycle check.
    Transport(CommonArgs),
    /// Agreement of the averaging operator with its closed form.
    DlCheck(CommonArgs),
    /// Norm-controlled division in the weighted Tate algebra.
    Reduce(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON problem file.
    file: String,
    /// Override the prime from the problem file.
    #[arg(long)]
    prime: Option<u64>,
    /// Clamp the truncation order (window upper bounds).
    #[arg(long)]
    trunc: Option<i64>,
    /// Variable index (1-based) for single-variable analyses.
    #[arg(long, default_value_t = 1)]
    var: usize,
    /// Eta exponent (rational, e.g. "1/2") for convergence checks.
    #[arg(long)]
    eta_exp: Option<String>,
    /// Rho exponent (rational > 0) for division norms.
    #[arg(long)]
    rho_exp: Option<String>,
    /// Outer radius exponent for gauge bounds (default 0 = radius 1).
    #[arg(long, default_value = "0")]
    radius_exp: String,
    /// Iteration budget for limit sequences and division.
    #[arg(long)]
    budget: Option<usize>,
    /// Order for the Taylor transport expansion.
    #[arg(long, default_value_t = 8)]
    order: usize,
    /// Limit strategy for horizontal extraction.
    #[arg(long, value_enum, default_value_t = StrategyArg::Dl)]
    strategy: StrategyArg,
    /// Section coordinates as a JSON list of term lists.
    #[arg(long)]
    section: Option<String>,
    /// Write the report as JSON to this path instead of text to stdout.
    #[arg(long)]
    json: Option<String>,
}

fn build_flags(args: &CommonArgs) -> Result<Flags, String> {
    let eta_exp = match &args.eta_exp {
        Some(s) => Some(problem::parse_exp(s).ok_or_else(|| format!("bad --eta-exp {:?}", s))?),
        None => None,
    };
    let rho_exp = match &args.rho_exp {
        Some(s) => Some(problem::parse_exp(s).ok_or_else(|| format!("bad --rho-exp {:?}", s))?),
        None => None,
    };
    let radius_exp = problem::parse_exp(&args.radius_exp)
        .ok_or_else(|| format!("bad --radius-exp {:?}", args.radius_exp))?;
    if args.var == 0 {
        return Err("--var is 1-based".into());
    }
    Ok(Flags {
        prime: args.prime,
        trunc: args.trunc,
        var: args.var - 1,
        eta_exp,
        rho_exp,
        radius_exp,
        budget: args.budget,
        order: args.order,
        strategy: match args.strategy {
            StrategyArg::Dl => LimitStrategy::DlSequence,
            StrategyArg::Qj => LimitStrategy::QjSequence,
        },
        section: args.section.clone(),
    })
}

fn run() -> u8 {
    let cli = Cli::parse();
    let (name, args): (&str, &CommonArgs) = match &cli.command {
        Command::Validate(a) => ("validate", a),
        Command::Residues(a) => ("residues", a),
        Command::Nilpotency(a) => ("nilpotency", a),
        Command::Gauge(a) => ("gauge", a),
        Command::Filtration(a) => ("filtration", a),
        Command::Horizontal(a) => ("horizontal", a),
        Command::Radius(a) => ("radius", a),
        Command::Transport(a) => ("transport", a),
        Command::DlCheck(a) => ("dl-check", a),
        Command::Reduce(a) => ("reduce", a),
    };

    let flags = match build_flags(args) {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("error: {}", msg);
            return 1;
        }
    };
    let file = match problem::load(&args.file) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}", e);
            return 1;
        }
    };

    let started = Instant::now();
    let outcome = match name {
        "validate" => commands::validate(&file, &flags),
        "residues" => commands::residues(&file, &flags),
        "nilpotency" => commands::nilpotency(&file, &flags),
        "gauge" => commands::gauge(&file, &flags),
        "filtration" => commands::filtration(&file, &flags),
        "horizontal" => commands::horizontal(&file, &flags),
        "radius" => commands::radius(&file, &flags),
        "transport" => commands::transport(&file, &flags),
        "dl-check" => commands::dl_check(&file, &flags),
        "reduce" => commands::reduce(&file, &flags),
        _ => unreachable!("subcommands are exhaustive"),
    };

    match outcome {
        Ok((mut report, code)) => {
            report.timing_ms = started.elapsed().as_millis();
            match &args.json {
                Some(path) => {
                    let rendered = serde_json::to_string_pretty(&report.to_json())
                        .expect("report serializes");
                    if let Err(e) = std::fs::write(path, rendered) {
                        eprintln!("error: cannot write {}: {}", path, e);
                        return 1;
                    }
                }
                None => println!("{}", report.to_text()),
            }
            code as u8
        }
        Err(CommandError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            1
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run())
}
