//! `vecpack` CLI: generate instances, solve them with any of the packing
//! algorithms, run the benchmark experiment, and verify packing files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vecpack::core::{validate_packing, Instance, Packing};
use vecpack::exact::{solve_exact, DEFAULT_NODE_BUDGET};
use vecpack::harness::{
    generate_instance, run_experiment, summaries_to_csv, Distribution, ExperimentConfig,
    GenConfig,
};
use vecpack::heuristics::{first_fit, first_fit_decreasing};
use vecpack::qp::{extract_packing, solve_nlp_prime};
use vecpack::relaxation::solve_relaxation;
use vecpack::rounding::{merge_bins, packing_vectors};

#[derive(Parser)]
#[command(name = "vecpack", about = "Vector bin packing solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file
    Gen(GenArgs),
    /// Solve an instance with one algorithm
    Solve(SolveArgs),
    /// Run the approximation-ratio experiment and write a CSV summary
    Bench(BenchArgs),
    /// Validate a packing file against an instance file
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform01,
    Scaled,
}

#[derive(Args)]
struct DistOpts {
    /// Coordinate distribution
    #[arg(long, value_enum, default_value = "uniform01")]
    dist: DistArg,
    /// Lower endpoint for --dist scaled
    #[arg(long, default_value_t = 0.1)]
    lo: f64,
    /// Upper endpoint for --dist scaled
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
}

impl DistOpts {
    fn distribution(&self) -> Distribution {
        match self.dist {
            DistArg::Uniform01 => Distribution::Uniform01,
            DistArg::Scaled => Distribution::UniformScaled {
                lo: self.lo,
                hi: self.hi,
            },
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Items per instance
    #[arg(long)]
    n: usize,
    /// Dimension
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dist: DistOpts,
    /// Output format
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    FirstFit,
    Ffd,
    PackingVectors,
    Qp,
    Exact,
}

#[derive(Args)]
struct SolveArgs {
    /// Algorithm to run
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Instance file (JSON or plain text)
    #[arg(long)]
    input: PathBuf,
    /// Restarts for --algo qp
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    /// Seed for --algo qp
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Node budget for --algo exact
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: u64,
    /// Greedy bin-merge post-pass for --algo packing-vectors
    #[arg(long)]
    merge: bool,
    /// Write the packing JSON here as well as stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Inclusive dimension range, e.g. 2..10
    #[arg(long, default_value = "2..10")]
    dims: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    dist: DistOpts,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: u64,
    /// QP restarts per trial
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Summary CSV output path
    #[arg(long)]
    out: PathBuf,
    /// Optional per-trial records as JSON lines
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    packing: PathBuf,
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading instance file {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str(&text)
            .with_context(|| format!("parsing JSON instance {}", path.display()))
    } else {
        Instance::from_text(&text)
            .with_context(|| format!("parsing text instance {}", path.display()))
    }
}

fn parse_dims(spec: &str) -> Result<(usize, usize)> {
    let Some((lo, hi)) = spec.split_once("..") else {
        bail!("--dims expects LO..HI (inclusive), got {spec:?}");
    };
    let lo: usize = lo.trim().parse().context("parsing --dims lower endpoint")?;
    let hi: usize = hi.trim().parse().context("parsing --dims upper endpoint")?;
    if lo == 0 || lo > hi {
        bail!("--dims requires 1 <= LO <= HI, got {spec:?}");
    }
    Ok((lo, hi))
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = GenConfig::new(args.n, args.d, args.dist.distribution(), args.seed)?;
    let inst = generate_instance(&cfg);
    let rendered = match args.format {
        FormatArg::Json => serde_json::to_string(&inst)?,
        FormatArg::Text => inst.to_text(),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{rendered}"),
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let inst = read_instance(&args.input)?;
    let mut extra = serde_json::Map::new();
    let packing = match args.algo {
        AlgoArg::FirstFit => first_fit(&inst),
        AlgoArg::Ffd => first_fit_decreasing(&inst),
        AlgoArg::PackingVectors => {
            let (pk, trace) = packing_vectors(&inst);
            extra.insert("trace".into(), serde_json::to_value(&trace)?);
            if args.merge {
                merge_bins(&inst, &pk)
            } else {
                pk
            }
        }
        AlgoArg::Qp => {
            let relax = solve_relaxation(&inst)?;
            let m = relax.m_prime.max(1);
            let q = solve_nlp_prime(&inst, m, args.restarts, args.seed)?;
            extra.insert("objective".into(), serde_json::json!(q.objective));
            extra.insert("integral".into(), serde_json::json!(q.integral));
            extra.insert("restarts_used".into(), serde_json::json!(q.restarts_used));
            extract_packing(&q, &inst)
        }
        AlgoArg::Exact => {
            let r = solve_exact(&inst, args.node_budget);
            extra.insert("proven".into(), serde_json::json!(r.proven));
            extra.insert("nodes_explored".into(), serde_json::json!(r.nodes_explored));
            r.packing
        }
    };
    let violations = validate_packing(&inst, &packing)?;
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("invalid packing: {v}");
        }
        bail!("solver produced an invalid packing");
    }
    let mut value = serde_json::to_value(&packing)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.extend(extra);
    }
    let rendered = serde_json::to_string(&value)?;
    println!("{rendered}");
    println!("bins={}", packing.bin_count);
    if let Some(path) = &args.out {
        std::fs::write(path, rendered.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let dims = parse_dims(&args.dims)?;
    let cfg = ExperimentConfig {
        dims,
        trials: args.trials,
        n: args.n,
        distribution: args.dist.distribution(),
        seed: args.seed,
        node_budget: args.node_budget,
        qp_restarts: args.restarts,
    };
    let (records, summaries) = run_experiment(&cfg)?;
    for row in &summaries {
        if row.flagged {
            eprintln!(
                "warning: d={} has {} unproven trials (> 5%), means cover proven trials only",
                row.d, row.unproven
            );
        }
        println!(
            "d={} trials={} mean_ratio_pv={:.4} ln(d)+1={:.4}",
            row.d, row.trials, row.mean_ratio_pv, row.ln_d_plus_1
        );
    }
    let csv = summaries_to_csv(&summaries, &cfg);
    std::fs::write(&args.out, csv.as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.records {
        let mut lines = String::new();
        for r in &records {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        std::fs::write(path, lines.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let inst = read_instance(&args.instance)?;
    let text = std::fs::read_to_string(&args.packing)
        .with_context(|| format!("reading packing file {}", args.packing.display()))?;
    let packing: Packing = serde_json::from_str(&text)
        .with_context(|| format!("parsing packing {}", args.packing.display()))?;
    let violations = validate_packing(&inst, &packing)?;
    if violations.is_empty() {
        println!("ok: {} items in {} bins", packing.assignment.len(), packing.bin_count);
        Ok(true)
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Ok(false)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => cmd_gen(args).map(|()| true),
        Command::Solve(args) => cmd_solve(args).map(|()| true),
        Command::Bench(args) => cmd_bench(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
