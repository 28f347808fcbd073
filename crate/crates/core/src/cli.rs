//! Command-line interface: corpus generation, benchmarking, and granularity
//! simulation.
//!
//! Reports are schema-stable JSON written to `--out` or stdout; human
//! summaries go to stderr. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 equivalence-check failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{run_bench, BenchConfig, BenchMethod, BenchMode};
use crate::corpus::{generate_corpus, read_corpus, write_corpus, ArityDist, GenConfig};
use crate::counter;
use crate::granularity::{compare, render_table, simulate, Granularity};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_EQUIVALENCE: i32 = 3;

/// Relative deviation from the oracle above which a bench run fails.
const DEVIATION_LIMIT: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "jitbatch",
    version,
    about = "Lazy tensor runtime with just-in-time dynamic batching over tree workloads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled tree corpus (JSONL, one tree per line).
    GenCorpus(GenArgs),
    /// Benchmark the relatedness pipeline: per-instance vs. JIT-batched.
    Bench(BenchArgs),
    /// Simulate depth-matched batching at kernel or subgraph granularity.
    Simulate(SimArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    /// Number of trees to generate.
    #[arg(long, default_value_t = 4500)]
    trees: usize,
    /// Largest child count a node may have.
    #[arg(long, default_value_t = 9)]
    max_arity: usize,
    /// Depth cap (distance from root to deepest leaf).
    #[arg(long, default_value_t = 7)]
    max_depth: usize,
    /// Vocabulary size for leaf tokens.
    #[arg(long, default_value_t = 64)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Arity distribution for internal nodes.
    #[arg(long, value_enum, default_value_t = DistArg::Skewed)]
    arity_dist: DistArg,
    /// Output path for the JSONL corpus.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Skewed,
}

impl From<DistArg> for ArityDist {
    fn from(value: DistArg) -> Self {
        match value {
            DistArg::Uniform => ArityDist::Uniform,
            DistArg::Skewed => ArityDist::Skewed,
        }
    }
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Corpus file; consecutive records form pairs.
    #[arg(long)]
    corpus: PathBuf,
    /// Pairs per batching scope.
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Infer)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Jit)]
    method: MethodArg,
    /// Hidden state dimension.
    #[arg(long, default_value_t = 150)]
    hidden: usize,
    /// Embedding dimension; defaults to twice the hidden dimension.
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learning rate (train mode).
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Largest child count accepted when reading the corpus.
    #[arg(long, default_value_t = 9)]
    max_arity: usize,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the first scope's execution plan to stderr.
    #[arg(long)]
    dump_plan: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Infer,
    Train,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    PerInstance,
    Jit,
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Trees per simulated batch.
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = GranArg::Both)]
    granularity: GranArg,
    /// Largest child count accepted when reading the corpus.
    #[arg(long, default_value_t = 9)]
    max_arity: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the published reference counts alongside the simulated ones.
    #[arg(long)]
    paper_ref: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranArg {
    Kernel,
    Subgraph,
    Both,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return EXIT_USAGE;
        }
    };
    match cli.command {
        Command::GenCorpus(args) => gen_corpus(args),
        Command::Bench(args) => bench(args),
        Command::Simulate(args) => sim(args),
    }
}

fn emit_json(out: &Option<PathBuf>, value: &impl serde::Serialize) -> Result<(), String> {
    let json = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    match out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| e.to_string()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn gen_corpus(args: GenArgs) -> i32 {
    let cfg = GenConfig {
        trees: args.trees,
        max_arity: args.max_arity,
        max_depth: args.max_depth,
        vocab: args.vocab,
        seed: args.seed,
        dist: args.arity_dist.into(),
    };
    let records = generate_corpus(&cfg);
    if let Err(err) = write_corpus(&args.out, &records) {
        eprintln!("error: {err}");
        return EXIT_DATA;
    }
    let nodes: usize = records.iter().map(|r| r.tree.node_count()).sum();
    eprintln!(
        "wrote {} trees ({} nodes) to {}",
        records.len(),
        nodes,
        args.out.display()
    );
    EXIT_OK
}

fn bench(args: BenchArgs) -> i32 {
    let records = match read_corpus(&args.corpus, args.max_arity) {
        Ok(records) => records,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_DATA;
        }
    };
    let cfg = BenchConfig {
        batch_size: args.batch_size,
        mode: match args.mode {
            ModeArg::Infer => BenchMode::Infer,
            ModeArg::Train => BenchMode::Train,
        },
        method: match args.method {
            MethodArg::PerInstance => BenchMethod::PerInstance,
            MethodArg::Jit => BenchMethod::Jit,
        },
        hidden_dim: args.hidden,
        input_dim: args.input_dim.unwrap_or(args.hidden * 2),
        seed: args.seed,
        lr: args.lr,
        collect_plan: args.dump_plan,
    };

    counter::reset();
    let outcome = match run_bench(&records, &cfg) {
        Ok(outcome) => outcome,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_DATA;
        }
    };
    if let Some(plan) = &outcome.plan_text {
        eprintln!("execution plan (first scope):\n{plan}");
    }
    let report = &outcome.report;
    eprintln!(
        "{}/{}: {} pairs, {:.1} samples/s, {} main + {} overhead launches (ratio {:.1}x), max deviation {:.2e}, {} total kernel launches this process",
        report.method,
        report.mode,
        report.pairs,
        report.samples_per_sec,
        report.main_launches,
        report.overhead_launches,
        report.batching_ratio,
        report.max_rel_deviation,
        counter::launches(),
    );
    if let Err(err) = emit_json(&args.out, report) {
        eprintln!("error: {err}");
        return EXIT_DATA;
    }
    if report.max_rel_deviation > DEVIATION_LIMIT {
        eprintln!(
            "error: outputs deviate from the per-instance oracle by {:.3e} (limit {DEVIATION_LIMIT:.0e})",
            report.max_rel_deviation
        );
        return EXIT_EQUIVALENCE;
    }
    EXIT_OK
}

fn sim(args: SimArgs) -> i32 {
    let records = match read_corpus(&args.corpus, args.max_arity) {
        Ok(records) => records,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_DATA;
        }
    };
    let trees: Vec<_> = records.into_iter().map(|r| r.tree).collect();

    let result = match args.granularity {
        GranArg::Both => compare(&trees, args.batch_size)
            .map_err(|e| e.to_string())
            .and_then(|report| {
                eprint!("{}", render_table(&report));
                emit_json(&args.out, &report)
            }),
        GranArg::Kernel | GranArg::Subgraph => {
            let granularity = match args.granularity {
                GranArg::Kernel => Granularity::Kernel,
                _ => Granularity::Subgraph,
            };
            simulate(&trees, granularity, args.batch_size)
                .map_err(|e| e.to_string())
                .and_then(|report| {
                    eprintln!(
                        "{}: no-batch {} / batch {} / ratio {:.1}x",
                        report.granularity, report.no_batch, report.batch, report.ratio
                    );
                    emit_json(&args.out, &report)
                })
        }
    };
    if args.paper_ref {
        eprintln!(
            "reference (tree LSTM over parsed sentences, batches of 256):\n\
             {:<10} {:>14} {:>14}\n{:<10} {:>14} {:>14}\n{:<10} {:>14} {:>14}\n{:<10} {:>13}x {:>13}x",
            "counts", "kernel", "subgraph", "no-batch", 5_018_658, 148_681, "batch", "~2650",
            1081, "ratio", 1930, 137
        );
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_DATA
        }
    }
}
