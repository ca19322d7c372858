use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use bagsched::model::Objective;
use bagsched::oracle::{exact_solve, OracleBudget};
use bagsched::rounding::Epsilon;
use bagsched::schemes::{solve, Budgets};
use bagsched_cli::bench::{bench, BenchConfig};
use bagsched_cli::gen::{generate, GenParams, ScenarioDist, SizeDist};
use bagsched_cli::io::InstanceFile;
use bagsched_cli::report::{exact_report_value, parse_objective, render, report_value};
use clap::{Args, Parser, Subcommand};

const EXIT_USAGE: u8 = 1;
const EXIT_DEGRADED: u8 = 2;
const EXIT_ORACLE_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "bagsched", version, about = "Two-stage scheduling with bags and an unknown machine count")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the approximation pipeline and write a JSON report.
    Solve(SolveArgs),
    /// Solve exactly by enumeration (small instances only).
    Exact(ExactArgs),
    /// Write a seeded random instance.
    Gen(GenArgs),
    /// Run scheme, baseline and oracle over a directory of instances; CSV out.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ObjectiveArgs {
    #[arg(long)]
    objective: String,
    /// Exponent for `--objective lp`, as `N` or `N/D`.
    #[arg(long)]
    p: Option<String>,
}

#[derive(Args)]
struct SchemeArgs {
    /// `1/E` with integer `E >= 5`.
    #[arg(long, default_value = "1/5")]
    epsilon: String,
    /// Search node limit per feasibility program.
    #[arg(long)]
    budget_nodes: Option<u64>,
    /// Worker threads for the guess loop (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Leave out `elapsed_ms` so identical runs give identical files.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[arg(long)]
    max_jobs: Option<usize>,
    #[arg(long)]
    max_bags: Option<usize>,
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    seed: u64,
    /// uniform, geometric or twotier.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// uniform, point:K or geometric.
    #[arg(long, default_value = "uniform")]
    qdist: String,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Comma-separated list from makespan, santa, lp.
    #[arg(long, default_value = "makespan,santa,lp")]
    objectives: String,
    /// Exponent for lp rows.
    #[arg(long, default_value = "2")]
    p: String,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with a specific exit code.
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(EXIT_USAGE, e.into())
    }
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn objective(args: &ObjectiveArgs) -> anyhow::Result<Objective> {
    parse_objective(&args.objective, args.p.as_deref())
}

fn scheme_settings(args: &SchemeArgs) -> anyhow::Result<(Epsilon, Budgets)> {
    let epsilon = Epsilon::parse(&args.epsilon).with_context(|| format!("--epsilon {:?} is not 1/E", args.epsilon))?;
    if epsilon.denom() < 5 {
        bail!("--epsilon must be 1/E with E >= 5, got {epsilon}");
    }
    if let Some(threads) = args.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let mut budgets = Budgets::default();
    if let Some(nodes) = args.budget_nodes {
        budgets.ip_nodes = nodes;
    }
    Ok((epsilon, budgets))
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Exit> {
    let objective = objective(&args.objective)?;
    let (epsilon, budgets) = scheme_settings(&args.scheme)?;
    let file = InstanceFile::load(&args.instance)?;
    let report = solve(&file.instance, &objective, epsilon, &budgets);
    emit(&render(&report_value(&file, &report, !args.no_timing)), args.out.as_deref())?;
    Ok(if report.scheme_feasible { 0 } else { EXIT_DEGRADED })
}

fn cmd_exact(args: ExactArgs) -> Result<u8, Exit> {
    let objective = objective(&args.objective)?;
    let file = InstanceFile::load(&args.instance)?;
    let mut budget = OracleBudget::default();
    budget.max_jobs = args.max_jobs.unwrap_or(budget.max_jobs);
    budget.max_bags = args.max_bags.unwrap_or(budget.max_bags);
    let start = Instant::now();
    let (solution, cost) =
        exact_solve(&file.instance, &objective, &budget).map_err(|e| Exit(EXIT_ORACLE_BUDGET, e.into()))?;
    let elapsed = (!args.no_timing).then(|| start.elapsed().as_millis() as u64);
    emit(&render(&exact_report_value(&file, &objective, &solution, &cost, elapsed)), args.out.as_deref())?;
    Ok(0)
}

fn cmd_gen(args: GenArgs) -> Result<u8, Exit> {
    let params = GenParams {
        n: args.n,
        m: args.m,
        seed: args.seed,
        sizes: args.dist.parse::<SizeDist>()?,
        scenarios: args.qdist.parse::<ScenarioDist>()?,
    };
    let instance = generate(&params)?;
    let name =
        args.name.unwrap_or_else(|| format!("n{}-m{}-{}-{}-s{}", args.n, args.m, args.dist, args.qdist, args.seed));
    emit(&InstanceFile { name, instance }.to_json(), args.out.as_deref())?;
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Exit> {
    let (epsilon, budgets) = scheme_settings(&args.scheme)?;
    let objectives = args
        .objectives
        .split(',')
        .map(|name| {
            let name = name.trim();
            parse_objective(name, (name == "lp").then_some(args.p.as_str()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let config = BenchConfig { objectives, epsilon, budgets, oracle: OracleBudget::default() };
    emit(&bench(&args.dir, &config)?, args.out.as_deref())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
