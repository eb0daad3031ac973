//! `marco`: validate, run, export and score task-graph configurations.
//!
//! Exit codes: 0 on success, 1 when validation, a run or scoring fails, 2 on
//! usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use marco::eda::{generate, FixtureSpec, Manifest};
use marco::engine::{self, default_catalog, BackendKind, RunConfig, RunOptions, TraceDocument};
use marco::graph::export_dot;

#[derive(Parser)]
#[command(name = "marco", version, about = "Task-graph solving with configurable multi-agent nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and report every problem found.
    Validate { config: PathBuf },
    /// Execute a config and write its trace.
    Run(RunArgs),
    /// Task graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Timing report fixtures.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    /// Compare a trace's findings with a fixture manifest.
    Score { trace: PathBuf, manifest: PathBuf },
    /// Print the JSON schema of a file format.
    Schema { kind: SchemaKind },
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Send every request to the config's first backend of this kind.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Where to write the trace; defaults to stdout.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// One node at a time, in frontier order, with zeroed timings.
    #[arg(long)]
    deterministic: bool,
    /// Record every backend reply into this cache directory.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Cache directory for replay backends.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Write the blackboard here after every node.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Solve the collapsed single-node form of the graph instead.
    #[arg(long)]
    baseline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
    Replay,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
            BackendArg::Replay => BackendKind::Replay,
        }
    }
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Write the config's graph in Graphviz DOT format.
    Export {
        config: PathBuf,
        #[arg(long)]
        dot: PathBuf,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Generate a seeded fixture set with its manifest.
    Gen {
        #[arg(long, default_value_t = 3)]
        corners: usize,
        #[arg(long, default_value_t = 8)]
        paths: usize,
        #[arg(long, default_value_t = 6)]
        max_stages: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generate without planted anomalies.
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Config,
    Trace,
}

fn load(path: &Path) -> anyhow::Result<RunConfig> {
    RunConfig::load(path, &default_catalog()).map_err(|e| anyhow::anyhow!("{e}"))
}

fn emit(trace: &TraceDocument, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => trace.write_to(path).with_context(|| format!("writing {}", path.display())),
        None => {
            trace.check_order().map_err(|e| anyhow::anyhow!("INVALID_TRACE: {e}"))?;
            print!("{}", trace.to_json());
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let config = load(&args.config)?;
    let options = RunOptions {
        deterministic: args.deterministic,
        backend: args.backend.map(Into::into),
        cache_dir: args.cache_dir,
        record_dir: args.record,
        snapshot_path: args.snapshot,
    };
    let catalog = default_catalog();
    let result = if args.baseline {
        engine::run_baseline(&config, &catalog, &options)
    } else {
        engine::run(&config, &catalog, &options)
    };
    match result {
        Ok(trace) => {
            emit(&trace, args.trace_out.as_deref())?;
            for n in &trace.nodes {
                eprintln!("{} {:?}", n.outcome.node_id, n.outcome.status);
            }
            Ok(())
        }
        Err(failure) => {
            // The partial trace is still worth keeping.
            if let Err(e) = emit(&failure.trace, args.trace_out.as_deref()) {
                eprintln!("could not write partial trace: {e:#}");
            }
            Err(anyhow::anyhow!("{}", failure.error))
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Validate { config } => {
            let c = load(&config)?;
            println!("{}: ok ({} nodes, {} agents)", config.display(), c.graph.nodes.len(), c.agents.len());
        }
        Command::Run(args) => run(args)?,
        Command::Graph { command: GraphCommand::Export { config, dot } } => {
            let c = load(&config)?;
            let text = export_dot(&c.graph)?;
            std::fs::write(&dot, text).with_context(|| format!("writing {}", dot.display()))?;
        }
        Command::Fixtures { command: FixturesCommand::Gen { corners, paths, max_stages, seed, clean, out } } => {
            let set = generate(&FixtureSpec { corners, paths, max_stages, seed, clean })?;
            set.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("{} files, {} planted anomalies in {}", set.files.len() + 1, set.manifest.entries.len(), out.display());
        }
        Command::Score { trace, manifest } => {
            let t = TraceDocument::read_from(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let text = std::fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let m = Manifest::parse(&text)?;
            println!("{}", engine::score(&t, &m));
        }
        Command::Schema { kind } => {
            let schema = match kind {
                SchemaKind::Config => engine::config_schema(),
                SchemaKind::Trace => engine::trace_schema(),
            };
            println!("{}", serde_json::to_string_pretty(&schema)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("MARCO_LOG"))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
