use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use hybridnas_core::cost::{estimate, DeploymentAssumptions};
use hybridnas_core::graph::{build_graph, infer_shapes, NetworkGraph};
use hybridnas_core::report::{write_outputs, ScatterAxes};
use hybridnas_core::search::{
    run_search, BuiltinEvaluator, Evaluator, ExternalError, ExternalEvaluator, Objective, ObjectiveSpec, SearchConfig,
    SearchError,
};
use hybridnas_core::searchspace::{decode, validate, ArchitectureDescriptor, Genome, SearchSpaceConfig};

#[derive(Parser)]
#[command(name = "hybridnas", version, about = "Hardware-aware hybrid CNN-ViT architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run aging evolution and write history, genomes, Pareto set, stats and a scatter plot.
    Search(SearchArgs),
    /// Print the cost report of one graph JSON file.
    Estimate(EstimateArgs),
    /// Lower an architecture descriptor or genome to graph JSON.
    Lower(LowerArgs),
    /// Print the default search-space config.
    Space,
}

#[derive(Clone, Debug)]
enum EvaluatorChoice {
    Builtin(BuiltinEvaluator),
    External(String),
}

impl FromStr for EvaluatorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("extern:") {
            Some(cmd) if cmd.trim().is_empty() => Err("extern: needs a command".into()),
            Some(cmd) => Ok(EvaluatorChoice::External(cmd.to_string())),
            None => s.parse().map(EvaluatorChoice::Builtin).map_err(|e| {
                format!("{e}; expected constant, synthetic-param-target, negative-macs or extern:<command>")
            }),
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Search-space config JSON.
    #[arg(long)]
    space: PathBuf,
    /// Number of evaluated candidates.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter ceiling; defaults to the space's max_params.
    #[arg(long)]
    max_params: Option<u64>,
    /// Built-in proxy name or extern:<command>.
    #[arg(long, default_value = "synthetic-param-target")]
    evaluator: EvaluatorChoice,
    #[arg(long, default_value = "nas_out")]
    out: PathBuf,
    /// Children generated and evaluated per step.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Defaults to min(100, budget).
    #[arg(long)]
    population: Option<usize>,
    /// Defaults to min(25, population).
    #[arg(long)]
    tournament: Option<usize>,
    /// Comma-separated objectives; default all five.
    #[arg(long, value_delimiter = ',')]
    objectives: Vec<Objective>,
    /// Deployment assumptions JSON.
    #[arg(long)]
    assumptions: Option<PathBuf>,
    /// Proxy-training epochs sent to the evaluator.
    #[arg(long, default_value_t = 10)]
    epochs: u32,
    /// Seconds to wait for each external evaluator response.
    #[arg(long, default_value_t = 3600.0)]
    eval_timeout: f64,
    #[arg(long, default_value = "params")]
    plot_x: Objective,
    #[arg(long, default_value = "val_accuracy")]
    plot_y: Objective,
}

#[derive(Args)]
struct EstimateArgs {
    /// Graph JSON; shapes are re-inferred from the Input node's shape.
    #[arg(long)]
    arch: PathBuf,
    #[arg(long)]
    assumptions: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct LowerSource {
    /// Architecture descriptor JSON file.
    #[arg(long)]
    descriptor: Option<PathBuf>,
    /// Genome JSON file (an array of gene indices).
    #[arg(long)]
    genome: Option<PathBuf>,
}

#[derive(Args)]
struct LowerArgs {
    /// Search-space config JSON; defaults to the built-in space.
    #[arg(long)]
    space: Option<PathBuf>,
    #[command(flatten)]
    source: LowerSource,
}

/// Failure mapped to a process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }

    fn infeasible(error: anyhow::Error) -> Self {
        Self { code: 3, error }
    }

    fn spawn(error: anyhow::Error) -> Self {
        Self { code: 4, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn read_input(path: &Path, what: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {what} {}", path.display()))
        .map_err(Failure::usage)
}

fn load_space(path: &Path) -> Result<SearchSpaceConfig, Failure> {
    let text = read_input(path, "search space")?;
    SearchSpaceConfig::from_json_str(&text)
        .with_context(|| format!("invalid search space {}", path.display()))
        .map_err(Failure::usage)
}

fn load_assumptions(path: Option<&Path>) -> Result<DeploymentAssumptions, Failure> {
    let Some(path) = path else { return Ok(DeploymentAssumptions::default()) };
    let text = read_input(path, "assumptions")?;
    DeploymentAssumptions::from_json_str(&text)
        .with_context(|| format!("invalid assumptions {}", path.display()))
        .map_err(Failure::usage)
}

fn search(args: SearchArgs) -> Result<(), Failure> {
    let space = load_space(&args.space)?;
    let assumptions = load_assumptions(args.assumptions.as_deref())?;
    let population_size = args.population.unwrap_or(args.budget.min(100));
    let objectives: Vec<ObjectiveSpec> = if args.objectives.is_empty() {
        Objective::ALL.into_iter().map(ObjectiveSpec::from).collect()
    } else {
        args.objectives.iter().copied().map(ObjectiveSpec::from).collect()
    };
    let config = SearchConfig {
        population_size,
        tournament_size: args.tournament.unwrap_or(population_size.min(25)),
        evaluation_budget: args.budget,
        seed: args.seed,
        max_params: args.max_params,
        objectives,
        parallelism: args.parallel,
        proxy_epochs: args.epochs,
        reject_duplicates: true,
        assumptions,
    };
    config.check().map_err(|e| Failure::usage(e.into()))?;
    if !(args.eval_timeout.is_finite() && args.eval_timeout > 0.0) {
        return Err(Failure::usage(anyhow!("--eval-timeout must be a positive number of seconds")));
    }

    let mut evaluator: Box<dyn Evaluator> = match &args.evaluator {
        EvaluatorChoice::Builtin(b) => Box::new(*b),
        EvaluatorChoice::External(cmd) => {
            let ev =
                ExternalEvaluator::spawn(cmd, Duration::from_secs_f64(args.eval_timeout)).map_err(|e| match e {
                    ExternalError::Spawn { .. } => Failure::spawn(e.into()),
                    _ => Failure::usage(e.into()),
                })?;
            Box::new(ev)
        }
    };
    log::info!(
        "searching {} with {} (budget {}, population {}, tournament {}, seed {})",
        args.space.display(),
        evaluator.describe(),
        config.evaluation_budget,
        config.population_size,
        config.tournament_size,
        config.seed
    );
    let history = run_search(&space, &config, evaluator.as_mut()).map_err(|e| match e {
        SearchError::Infeasible { .. } => Failure::infeasible(e.into()),
        _ => Failure::usage(e.into()),
    })?;
    drop(evaluator);

    let axes = ScatterAxes { x: args.plot_x.into(), y: args.plot_y.into() };
    write_outputs(&history, &config.objectives, &axes, &args.out)
        .with_context(|| format!("cannot write outputs to {}", args.out.display()))?;

    let ok = history.ok().count();
    emit(&format!("evaluated {} candidates ({ok} ok); outputs in {}", history.len(), args.out.display()))?;
    let Some(best) = history.best(Objective::ValAccuracy.into()) else {
        return Err(anyhow!("no candidate was evaluated successfully").into());
    };
    emit(&format!(
        "best {}: val_accuracy={} params={} macs={} rom={} ram={} latency_proxy={:.1}",
        best.id,
        best.val_accuracy.unwrap_or(f64::NAN),
        best.cost.params,
        best.cost.macs,
        best.cost.rom_bytes,
        best.cost.ram_bytes,
        best.cost.latency_proxy
    ))?;
    emit(&format!("pareto set: {} candidates", history.pareto(&config.objectives).len()))
}

fn estimate_cmd(args: EstimateArgs) -> Result<(), Failure> {
    let text = read_input(&args.arch, "graph")?;
    let graph = NetworkGraph::from_json_str(&text)
        .with_context(|| format!("invalid graph JSON {}", args.arch.display()))
        .map_err(Failure::usage)?;
    let input = graph
        .input_shape()
        .ok_or_else(|| Failure::usage(anyhow!("the Input node of {} carries no shape", args.arch.display())))?;
    let assumptions = load_assumptions(args.assumptions.as_deref())?;
    let graph = infer_shapes(graph, input).map_err(|e| Failure::infeasible(e.into()))?;
    let report = estimate(&graph, &assumptions).context("cost estimation failed")?;
    emit(&report.to_json_pretty())
}

fn lower_cmd(args: LowerArgs) -> Result<(), Failure> {
    let space = match &args.space {
        Some(p) => load_space(p)?,
        None => SearchSpaceConfig::default(),
    };
    let arch: ArchitectureDescriptor = match (&args.source.descriptor, &args.source.genome) {
        (Some(p), _) => serde_json::from_str(&read_input(p, "descriptor")?)
            .with_context(|| format!("invalid descriptor {}", p.display()))
            .map_err(Failure::usage)?,
        (None, Some(p)) => {
            let genome: Genome = serde_json::from_str(&read_input(p, "genome")?)
                .with_context(|| format!("invalid genome {}", p.display()))
                .map_err(Failure::usage)?;
            decode(&genome, &space).map_err(|e| Failure::usage(e.into()))?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let report = validate(&arch, &space);
    if !report.valid {
        let lines: Vec<String> = report.violations.iter().map(|v| format!("  {}: {}", v.rule_id, v.message)).collect();
        return Err(Failure::infeasible(anyhow!("architecture violates the search space:\n{}", lines.join("\n"))));
    }
    let graph = build_graph(&arch, &space).map_err(|e| Failure::infeasible(e.into()))?;
    emit(&graph.to_json_pretty())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(anyhow::Error::from(e).context("cannot write to stdout").into())
        }
        _ => Ok(()),
    }
}

fn init_logging() {
    let filter = std::env::var("NAS_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new().parse_filters(&filter).format_timestamp_millis().init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let result = match cli.command {
        Command::Search(a) => search(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Lower(a) => lower_cmd(a),
        Command::Space => emit(&SearchSpaceConfig::default().to_json_pretty()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
