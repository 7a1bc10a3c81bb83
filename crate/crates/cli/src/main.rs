use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use congest_apsp::blocker::{Mode, Params};
use congest_apsp::engine::EngineConfig;
use congest_apsp::fraction::parse_fraction;
use congest_apsp::graph::{generate_graph, load_graph, GraphFormat};
use congest_apsp::oracle::dijkstra_apsp;
use congest_apsp::pipeline::PipelineOutcome;
use congest_apsp::qsink::{QSinkParams, Schedule};
use congest_apsp::{run_apsp, Error, GenSpec, Graph, PipelineConfig};

#[derive(Parser)]
#[command(name = "congest-apsp", version, about = "Simulate blocker-set APSP in the CONGEST model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the pipeline and write distances and metrics.
    Run(RunArgs),
    /// Run the pipeline and compare against Dijkstra; exits 1 on mismatch.
    Verify(RunArgs),
    /// Write a generated graph to a file (`.json`, anything else is DIMACS).
    Gen {
        #[arg(long)]
        gen: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run random graphs of increasing size and report rounds as CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GraphSource {
    /// Graph file: JSON (`.json`) or DIMACS `.gr`.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    graph: Option<PathBuf>,
    /// Generator spec such as `path:8`, `grid:3x4`, `gnp:16:0.3:8:directed`.
    #[arg(long)]
    gen: Option<String>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Deterministic,
    Randomized,
}

#[derive(Copy, Clone, ValueEnum)]
enum ScheduleArg {
    Plain,
    Staged,
}

#[derive(Args)]
struct PipelineArgs {
    /// Hop bound (default ⌈n^(1/3)⌉).
    #[arg(long)]
    h: Option<u32>,
    #[arg(long, default_value = "1/12")]
    epsilon: String,
    #[arg(long, default_value = "1/12")]
    delta: String,
    #[arg(long, value_enum, default_value = "deterministic")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "staged")]
    schedule: ScheduleArg,
    /// Messages per channel direction per round.
    #[arg(long, default_value_t = 1)]
    bandwidth: usize,
    /// Seed for graph generation and the randomized blocker.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Always use the sampling branch when selecting blocker nodes.
    #[arg(long)]
    no_heavy_check: bool,
    /// Hop bound of the in-trees used for routing to blocker nodes.
    #[arg(long)]
    qsink_hops: Option<u32>,
    /// Per-node message budget for routing.
    #[arg(long)]
    qsink_threshold: Option<u64>,
    /// Seed the final relaxation with out-tree labels at every node.
    #[arg(long)]
    seed_local: bool,
    /// Skip the built-in comparisons against sequential shortest paths.
    #[arg(long)]
    no_checks: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: GraphSource,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Metrics JSON output.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Distance matrix CSV output; standard output when absent.
    #[arg(long)]
    distances: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    #[arg(long, default_value_t = 8)]
    wmax: u64,
    #[arg(long)]
    directed: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Mismatch(String),
    Config(String),
    Sim(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Graph(_) | Error::Config(_) => Failure::Config(e.to_string()),
            Error::Step { .. } => Failure::Sim(e.to_string()),
        }
    }
}

fn config_err(e: impl ToString) -> Failure {
    Failure::Config(e.to_string())
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, Failure> {
        let blocker = Params {
            epsilon: parse_fraction(&self.epsilon).map_err(config_err)?,
            delta: parse_fraction(&self.delta).map_err(config_err)?,
            heavy_check: !self.no_heavy_check,
        };
        blocker.validate().map_err(config_err)?;
        if self.bandwidth == 0 {
            return Err(config_err("bandwidth must be at least 1"));
        }
        Ok(PipelineConfig {
            h: self.h,
            blocker,
            mode: match self.mode {
                ModeArg::Deterministic => Mode::Deterministic,
                ModeArg::Randomized => Mode::Randomized { seed: self.seed },
            },
            qsink: QSinkParams { hops: self.qsink_hops, threshold: self.qsink_threshold, log: None },
            schedule: match self.schedule {
                ScheduleArg::Plain => Schedule::Plain,
                ScheduleArg::Staged => Schedule::Staged,
            },
            extension_seed_local: self.seed_local,
            check_invariants: !self.no_checks,
            engine: EngineConfig { bandwidth: self.bandwidth, max_rounds: None },
        })
    }
}

fn load(source: &GraphSource, seed: u64) -> Result<Graph, Failure> {
    let g = match (&source.graph, &source.gen) {
        (Some(path), _) => load_graph(path, GraphFormat::from_path(path)),
        (None, Some(spec)) => GenSpec::parse(spec).and_then(|s| generate_graph(&s, seed)),
        (None, None) => return Err(config_err("one of --graph or --gen is required")),
    };
    g.map_err(config_err)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(config_err),
    }
}

fn run(args: &RunArgs, verify: bool) -> Result<(), Failure> {
    let mut cfg = args.pipeline.config()?;
    let g = load(&args.source, args.pipeline.seed)?;
    if verify {
        // compare here so a wrong answer is reported as a mismatch, not a crash
        cfg.check_invariants = false;
    }
    let out = run_apsp(&g, &cfg)?;
    write_outputs(args, &cfg, &out)?;
    if verify {
        if let Some((x, t, got, want)) = out.distances.first_mismatch(&dijkstra_apsp(&g)) {
            return Err(Failure::Mismatch(format!("distance {x} -> {t}: computed {got}, expected {want}")));
        }
        eprintln!("ok: {} nodes, {} rounds, |Q| = {}", g.n(), out.metrics.total_rounds(), out.q.len());
    }
    Ok(())
}

fn write_outputs(args: &RunArgs, cfg: &PipelineConfig, out: &PipelineOutcome) -> Result<(), Failure> {
    if let Some(path) = &args.metrics {
        let text = serde_json::to_string_pretty(&out.metrics_json(cfg)).map_err(config_err)?;
        write_out(Some(path), &(text + "\n"))?;
    }
    write_out(args.distances.as_deref(), &out.distances.to_csv())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let cfg = args.pipeline.config()?;
    let mut csv = String::from("n,total_rounds,q,b,step1,step2,step6\n");
    for &n in &args.ns {
        let spec = GenSpec::Gnp { n, p: args.p, wmax: args.wmax, directed: args.directed };
        let g = generate_graph(&spec, args.pipeline.seed).map_err(config_err)?;
        let out = run_apsp(&g, &cfg)?;
        let b = out.qsink.as_ref().map_or(0, |s| s.bottleneck.nodes.len());
        csv += &format!(
            "{n},{},{},{b},{},{},{}\n",
            out.metrics.total_rounds(),
            out.q.len(),
            out.step(1).rounds,
            out.step(2).rounds,
            out.step(6).rounds
        );
    }
    write_out(args.out.as_deref(), &csv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(a) => run(a, false),
        Cmd::Verify(a) => run(a, true),
        Cmd::Gen { gen, seed, out } => GenSpec::parse(gen)
            .and_then(|s| generate_graph(&s, *seed))
            .map_err(config_err)
            .and_then(|g| {
                let text = match GraphFormat::from_path(out) {
                    GraphFormat::Json => g.to_json(),
                    GraphFormat::Dimacs => g.to_dimacs(),
                };
                write_out(Some(out), &text)
            }),
        Cmd::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(m)) => {
            eprintln!("mismatch: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Sim(m)) => {
            eprintln!("simulation error: {m}");
            ExitCode::from(3)
        }
    }
}
