//! `seedtree` command line: simulations, sweeps, trace files and matching dumps.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seedtree_core::{
    emit_trace, export, generate_trace, ingest_trace, run, sweep, write_csv, ExperimentConfig, ItemId, SeedTree, Trace,
    TraceFormat, TraceSpec, TreeConfig,
};

#[derive(Parser, Debug)]
#[command(name = "seedtree", version, about = "Self-adjusting capacity tree experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one configuration `--repeats` times and write CSV rows.
    Simulate(SimulateArgs),
    /// Cross product over comma-separated capacities, occupancies and localities.
    Sweep(SweepArgs),
    /// Write a synthetic trace in canonical form.
    GenTrace(GenTraceArgs),
    /// Convert an external trace to canonical form.
    Ingest(IngestArgs),
    /// Dump a tree as topological and membership matchings.
    ExportMatchings(ExportArgs),
}

#[derive(Args, Debug, Clone)]
struct TraceArgs {
    /// Number of items in a generated trace.
    #[arg(long, default_value_t = 4095)]
    items: u64,
    /// Number of requests in a generated trace.
    #[arg(long, default_value_t = 100_000)]
    requests: usize,
    /// Read requests from this file instead of generating them.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "canonical")]
    format: TraceFormat,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 4)]
    capacity: usize,
    #[arg(long, default_value_t = 0.5)]
    occupancy: f64,
    #[arg(long, default_value_t = 0.0)]
    locality: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    trace: TraceArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    capacity: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    occupancy: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.0")]
    locality: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenTraceArgs {
    #[arg(long, default_value_t = 4095)]
    items: u64,
    #[arg(long, default_value_t = 100_000)]
    requests: usize,
    #[arg(long, default_value_t = 0.0)]
    locality: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "canonical")]
    format: TraceFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, default_value_t = 2)]
    capacity: usize,
    #[arg(long, default_value_t = 0.5)]
    occupancy: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Items `0..items` of a fresh tree; ignored with `--trace`.
    #[arg(long, default_value_t = 255)]
    items: u64,
    /// Replay this trace before exporting.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "canonical")]
    format: TraceFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn trace_spec(args: &TraceArgs, locality: f64) -> TraceSpec {
    match &args.trace {
        Some(path) => TraceSpec::File { path: path.clone(), format: args.format },
        None => TraceSpec::Generated { n_items: args.items, requests: args.requests, locality },
    }
}

fn warn_init(config: &ExperimentConfig) -> Result<()> {
    let trace = config.trace.load(config.seed)?;
    let tree = SeedTree::init(&trace.items(), config.tree_config(config.seed))?;
    for w in &tree.init_report().warnings {
        eprintln!("warning: c={} f={}: {w}", config.capacity, config.occupancy);
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let config = ExperimentConfig {
        capacity: a.capacity,
        occupancy: a.occupancy,
        trace: trace_spec(&a.trace, a.locality),
        seed: a.seed,
        repeats: a.repeats,
    };
    config.validate()?;
    warn_init(&config)?;
    let rows = run(&config)?;
    let source = match &a.trace.trace {
        Some(p) => format!("trace={} format={}", p.display(), a.trace.format),
        None => format!("items={} requests={} locality={}", a.trace.items, a.trace.requests, a.locality),
    };
    let meta = vec![format!(
        "simulate capacity={} occupancy={} seed={} repeats={} {source}",
        a.capacity, a.occupancy, a.seed, a.repeats
    )];
    write_csv(&rows, &meta, open_output(a.output.as_deref())?)?;
    Ok(())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let localities = if a.trace.trace.is_some() { vec![f64::NAN] } else { a.locality.clone() };
    let mut configs = Vec::new();
    for &capacity in &a.capacity {
        for &occupancy in &a.occupancy {
            for &p in &localities {
                configs.push(ExperimentConfig {
                    capacity,
                    occupancy,
                    trace: trace_spec(&a.trace, p),
                    seed: a.seed,
                    repeats: a.repeats,
                });
            }
        }
    }
    if configs.is_empty() {
        bail!("empty sweep grid");
    }
    for cfg in &configs {
        cfg.validate()?;
        warn_init(cfg)?;
    }
    let rows = sweep(&configs)?;
    let source = match &a.trace.trace {
        Some(p) => format!("trace={} format={}", p.display(), a.trace.format),
        None => format!("items={} requests={} locality={}", a.trace.items, a.trace.requests, join(&a.locality)),
    };
    let meta = vec![format!(
        "sweep capacity={} occupancy={} seed={} repeats={} {source}",
        join(&a.capacity),
        join(&a.occupancy),
        a.seed,
        a.repeats
    )];
    write_csv(&rows, &meta, open_output(a.output.as_deref())?)?;
    Ok(())
}

fn write_trace(trace: &Trace, output: Option<&Path>) -> Result<()> {
    let mut w = open_output(output)?;
    emit_trace(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    let config = TreeConfig::new(a.capacity, a.occupancy, a.seed);
    let tree = match &a.trace {
        Some(path) => {
            let trace = ingest_trace(path, a.format)?;
            let mut tree = SeedTree::init(&trace.items(), config)?;
            for &v in trace.requests() {
                tree.access(v)?;
            }
            tree
        }
        None => SeedTree::init(&(0..a.items).map(ItemId).collect::<Vec<_>>(), config)?,
    };
    for w in &tree.init_report().warnings {
        eprintln!("warning: {w}");
    }
    let mut out = open_output(a.output.as_deref())?;
    out.write_all(export(&tree)?.to_dump().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::GenTrace(a) => {
            let trace = generate_trace(a.items, a.requests, a.locality, a.seed)?;
            write_trace(&trace, a.output.as_deref())
        }
        Command::Ingest(a) => {
            let trace = ingest_trace(&a.trace, a.format).with_context(|| format!("reading {}", a.trace.display()))?;
            write_trace(&trace, a.output.as_deref())
        }
        Command::ExportMatchings(a) => export_cmd(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
