use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use polydist::certify::verify_perturbation;
use polydist::io::{parse_complex, read_polynomial};
use polydist::mulink::mu_consistency_check;
use polydist::pipeline::{analyze, AnalysisConfig, DistanceReport, Status};
use polydist::tables::{paper_table, paper_tables, reproduce_table, TableOptions};
use polydist::{MatrixPolynomial, NormKind};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_SINGULAR: u8 = 3;

#[derive(Parser)]
#[command(name = "polydist", version, about = "Distance to matrix polynomials with a prescribed multiple eigenvalue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds, optimized distance and certificates.
    Distance(RunArgs),
    /// Lower and upper bounds only.
    Bounds(RunArgs),
    /// Check that P + dP has the requested multiplicity at lambda0.
    Verify(VerifyArgs),
    /// Recompute the published tables and compare.
    ReproduceTables(TableArgs),
}

#[derive(Args)]
struct Target {
    /// Eigenvalue as RE or RE,IM.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_lambda)]
    lambda0: Complex64,
    /// Target multiplicity r + 1.
    #[arg(long)]
    r: usize,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[command(flatten)]
    target: Target,
    /// 2 or F.
    #[arg(long, default_value = "F")]
    norm: NormKind,
    /// Optimizer starts.
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Function evaluations per bound search start.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    perturbation: PathBuf,
    #[command(flatten)]
    target: Target,
    /// Relative singular-value tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct TableArgs {
    /// 1..8 or all.
    #[arg(long, default_value = "all")]
    table: String,
    #[arg(long, default_value_t = TableOptions::default().starts)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TableOptions::default().bound_budget)]
    budget: usize,
    /// Relative deviation above which a row is marked.
    #[arg(long, default_value_t = 1e-2)]
    tolerance: f64,
    /// Also write machine-readable rows here.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_lambda(s: &str) -> Result<Complex64, String> {
    parse_complex(s).map_err(|e| e.to_string())
}

fn load(path: &Path) -> Result<MatrixPolynomial, ExitCode> {
    read_polynomial(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_PARSE)
    })
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(args: &RunArgs, optimize: bool) -> anyhow::Result<ExitCode> {
    let poly = match load(&args.file) {
        Ok(p) => p,
        Err(code) => return Ok(code),
    };
    let mut cfg = AnalysisConfig::new(args.target.lambda0, args.target.r, args.norm).with_seed(args.seed);
    cfg.distopt.starts = args.starts;
    cfg.search.budget = args.budget;
    cfg.run_optimizer = optimize;
    let report: DistanceReport = match analyze(&poly, &cfg) {
        Ok(r) => r,
        Err(e @ (polydist::Error::InvalidParameter(_) | polydist::Error::Parse(_))) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_PARSE));
        }
        Err(e) => return Err(e.into()),
    };
    emit(&serde_json::to_string_pretty(&report)?, args.out.as_deref())?;
    Ok(if report.status == Status::SingularPolynomial {
        ExitCode::from(EXIT_SINGULAR)
    } else {
        ExitCode::SUCCESS
    })
}

fn verify(args: &VerifyArgs) -> anyhow::Result<ExitCode> {
    let (poly, delta) = match (load(&args.instance), load(&args.perturbation)) {
        (Ok(p), Ok(d)) => (p, d),
        (Err(code), _) | (_, Err(code)) => return Ok(code),
    };
    let (lambda0, r_plus_1) = (args.target.lambda0, args.target.r);
    if delta.n() != poly.n() || delta.degree() != poly.degree() {
        eprintln!("error: perturbation shape does not match the instance");
        return Ok(ExitCode::from(EXIT_PARSE));
    }
    if r_plus_1 == 0 || r_plus_1 > poly.n() * poly.degree() {
        eprintln!("error: --r must lie in 1..={}", poly.n() * poly.degree());
        return Ok(ExitCode::from(EXIT_PARSE));
    }
    let verification = verify_perturbation(&poly, &delta, lambda0, r_plus_1, args.tol)?;
    let mu = match mu_consistency_check(&poly, lambda0, r_plus_1 - 1, &delta, 1e-8) {
        Ok(m) => Some(m),
        Err(polydist::Error::EigenvalueAtLambda0 { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let passed = verification.passed && mu.as_ref().is_none_or(|m| m.consistent);
    let out = json!({ "passed": passed, "verification": verification, "mu_consistency": mu });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFY_FAILED) })
}

fn reproduce(args: &TableArgs) -> anyhow::Result<ExitCode> {
    let tables = if args.table == "all" {
        paper_tables()
    } else {
        match args.table.parse().ok().and_then(paper_table) {
            Some(t) => vec![t],
            None => {
                eprintln!("error: --table must be 1..8 or all");
                return Ok(ExitCode::from(EXIT_PARSE));
            }
        }
    };
    let opts = TableOptions { starts: args.starts, seed: args.seed, bound_budget: args.budget, ..Default::default() };
    let mut all = Vec::new();
    for table in &tables {
        let started = std::time::Instant::now();
        let rep = reproduce_table(table, &opts)?;
        print!("{}", rep.render());
        for row in &rep.rows {
            let paper = row.paper.best_distance();
            let rel = row.distance_dev.map(|d| d.abs() / paper);
            let mark = match rel {
                Some(x) if x <= args.tolerance => "ok",
                _ => "DEVIATES",
            };
            let sandwich = if row.report.sandwich_ok { "ok" } else { "VIOLATED" };
            println!(
                "  r+1={} rel.dev={} [{mark}] sandwich [{sandwich}]",
                row.paper.r_plus_1,
                rel.map_or_else(|| "-".into(), |x| format!("{x:.2e}"))
            );
        }
        println!("  elapsed {:.1}s\n", started.elapsed().as_secs_f64());
        all.push(rep);
    }
    if let Some(p) = &args.json {
        emit(&serde_json::to_string_pretty(&all)?, Some(p))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Distance(a) => run(a, true),
        Command::Bounds(a) => run(a, false),
        Command::Verify(a) => verify(a),
        Command::ReproduceTables(a) => reproduce(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
