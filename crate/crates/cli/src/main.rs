use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use epigraph::epi::io::{write_trajectories_csv, write_trajectories_ndjson, ModelConfig};
use epigraph::epi::{CompartmentState, ContactChangePoint};
use epigraph::eval::{
    bench_runtime, evaluate_dummy, evaluate_model, split_dataset, write_bench_csv, BenchConfig, DummyEstimator,
};
use epigraph::metapop::{load_mobility, load_populations, MetapopGraph, NodePopulation};
use epigraph::scenario::{
    generate_dataset, run_scenario, sample_init, write_ndjson, Dataset, GraphSpec, Regime, ScenarioConfig,
    SPATIAL_WIDTH,
};
use epigraph::surrogate::{
    grid_search, train, write_grid_csv, Checkpoint, GridSpace, ModelSpec, OptimizerKind, Preset, Surrogate, TrainConfig,
};
use epigraph_service::ServiceConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "epigraph", version, about = "Metapopulation epidemic simulator with graph neural network surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mechanistic model for one scenario and export daily trajectories.
    Simulate(SimulateArgs),
    /// Build a mobility graph and write it as JSON.
    Graph(GraphArgs),
    /// Generate a scenario dataset.
    Generate(GenerateArgs),
    /// Convert a dataset to NDJSON.
    ExportNdjson {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train a surrogate on the 80% split and report test MAPE.
    Train(TrainArgs),
    /// k-fold grid search over architectures.
    Grid(GridArgs),
    /// Evaluate a checkpoint on the test split of a dataset.
    Evaluate(EvaluateArgs),
    /// Mean-trajectory baseline MAPE on the test split.
    Dummy {
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        split_seed: u64,
    },
    /// Time the simulator against surrogates.
    Bench(BenchArgs),
    /// Write the default model configuration as JSON.
    ModelDefaults,
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Ndjson,
}

#[derive(Args, Clone)]
struct GraphSource {
    /// Graph JSON written by `epigraph graph`.
    #[arg(long, conflicts_with_all = ["nodes", "density", "graph_seed"])]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    #[arg(long, default_value_t = 0.25)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
}

impl GraphSource {
    fn spec(&self) -> GraphSpec {
        GraphSpec { n: self.nodes, density: self.density, seed: self.graph_seed }
    }

    fn build(&self) -> Result<MetapopGraph> {
        match &self.graph {
            Some(path) => read_json(path),
            None => Ok(self.spec().build()?),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: GraphSource,
    /// Simulate one region instead of a graph.
    #[arg(long)]
    single: bool,
    #[arg(long, default_value_t = 100_000.0)]
    population: f64,
    #[arg(long, default_value = "outbreak")]
    regime: Regime,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON array of per-node day-0 states (48 values each) instead of sampling.
    #[arg(long)]
    initial: Option<PathBuf>,
    /// Contact change point as DAY:REDUCTION; repeat up to three times.
    #[arg(long = "change", value_parser = parse_change)]
    changes: Vec<ContactChangePoint>,
    #[arg(long, default_value_t = 35)]
    days: u32,
    /// Model configuration JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    #[arg(long, default_value_t = 0.25)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square mobility CSV; replaces the synthetic graph.
    #[arg(long, requires = "populations")]
    mobility: Option<PathBuf>,
    /// Population CSV matching the mobility rows.
    #[arg(long)]
    populations: Option<PathBuf>,
    #[arg(long)]
    symmetrize: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario configuration JSON; flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "outbreak")]
    regime: Regime,
    #[arg(long, default_value_t = 30)]
    horizon: u32,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    nonspatial: bool,
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    #[arg(long, default_value_t = 0.25)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
    /// Exact number of change points per sample instead of uniform over 0..=3.
    #[arg(long)]
    fixed_changes: Option<usize>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value = "adam")]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    data: PathBuf,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value_t = 1)]
    split_seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    data: PathBuf,
    /// `mlp`, `graph`, or a GridSpace JSON file.
    #[arg(long, default_value = "mlp")]
    space: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    parallel: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    split_seed: u64,
    /// Evaluate every sample rather than the test split.
    #[arg(long)]
    all: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    source: GraphSource,
    /// Checkpoints keyed by their horizon; untrained desk networks are used for missing horizons.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "30,60,90")]
    horizons: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    executions: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,3")]
    changes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_change(s: &str) -> Result<ContactChangePoint, String> {
    let (day, r) = s.split_once(':').ok_or_else(|| format!("expected DAY:REDUCTION, got {s:?}"))?;
    let day: f64 = day.trim().parse().map_err(|_| format!("invalid day {day:?}"))?;
    let r: f64 = r.trim().parse().map_err(|_| format!("invalid reduction {r:?}"))?;
    Ok(ContactChangePoint::new(day, r))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn model_config(path: &Option<PathBuf>) -> Result<ModelConfig> {
    match path {
        Some(p) => ModelConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ModelConfig::default()),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model = model_config(&args.model)?;
    let graph = if args.single { None } else { Some(args.source.build()?) };
    let nodes: Vec<NodePopulation> = match &graph {
        Some(g) => g.nodes().to_vec(),
        None => vec![NodePopulation { population: args.population, age_shares: model.age_shares() }],
    };
    let initial: Vec<CompartmentState> = match &args.initial {
        Some(path) => {
            let rows: Vec<Vec<f64>> = read_json(path)?;
            if rows.len() != nodes.len() {
                bail!("{} holds {} states for {} nodes", path.display(), rows.len(), nodes.len());
            }
            rows.iter()
                .enumerate()
                .map(|(i, r)| CompartmentState::from_slice(r).with_context(|| format!("state {i} needs 48 values")))
                .collect::<Result<_>>()?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            nodes.iter().map(|p| sample_init(&mut rng, args.regime, p)).collect::<Result<_, _>>()?
        }
    };
    let run = run_scenario(graph.as_ref(), &initial, &model, args.changes, args.days, true)?;
    let out = output(&args.out)?;
    match args.format {
        Format::Csv => write_trajectories_csv(out, &run.nodes)?,
        Format::Ndjson => write_trajectories_ndjson(out, &run.nodes)?,
    }
    Ok(())
}

fn graph(args: GraphArgs) -> Result<()> {
    let graph = match (&args.mobility, &args.populations) {
        (Some(m), Some(p)) => MetapopGraph::new(load_populations(p)?, load_mobility(m)?, args.symmetrize)?,
        _ => MetapopGraph::synthetic(args.nodes, args.density, args.seed)?,
    };
    serde_json::to_writer(BufWriter::new(File::create(&args.out)?), &graph)?;
    let mut summary = serde_json::to_value(graph.summary())?;
    summary["graph_id"] = epigraph_service::graph_id(&graph).into();
    print_json(&summary)
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => read_json(path)?,
        None => {
            let mut c = ScenarioConfig::new(args.regime, args.horizon, !args.nonspatial, args.samples, args.seed);
            c.graph = GraphSpec { n: args.nodes, density: args.density, seed: args.graph_seed };
            c.fixed_changes = args.fixed_changes;
            c.model = model_config(&args.model)?;
            c
        }
    };
    let mut out = BufWriter::new(File::create(&args.out)?);
    let header = generate_dataset(&config, &mut out)?;
    out.flush()?;
    print_json(&serde_json::json!({
        "count": header.count,
        "feature_shape": header.feature_shape,
        "label_shape": header.label_shape,
    }))
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let plan = split_dataset(data.samples.len(), args.split_seed)?;
    let (tr, va, te) = (data.subset(&plan.train), data.subset(&plan.validation), data.subset(&plan.test));
    let spec = ModelSpec::for_dataset(&data.header, args.preset.hidden())?;
    let adjacency = data.header.graph.as_ref().map(|g| g.adjacency().clone());
    let ckpt = train(&spec, adjacency.as_ref(), &tr, &va, &args.flags.config())?;
    ckpt.save(&args.out)?;
    let model = evaluate_model(&ckpt.network()?, &te)?;
    let dummy = evaluate_dummy(&DummyEstimator::fit_dataset(&tr)?, &te)?;
    print_json(&serde_json::json!({
        "checkpoint": args.out,
        "epochs": ckpt.meta.epochs,
        "best_epoch": ckpt.meta.best_epoch,
        "train_seconds": ckpt.meta.train_seconds,
        "test_mape": model.overall.mape,
        "dummy_mape": dummy.mape,
        "ratio": model.overall.mape.zip(dummy.mape).map(|(m, d)| m / d),
    }))
}

fn grid(args: GridArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let space = match args.space.as_str() {
        "mlp" => GridSpace::mlp(),
        "graph" => GridSpace::graph(),
        path => read_json(Path::new(path))?,
    };
    let results = grid_search(&space.points(), &data, args.folds, &args.flags.config(), args.parallel)?;
    write_grid_csv(&results, BufWriter::new(File::create(&args.out)?))?;
    print_json(&results.iter().take(5).collect::<Vec<_>>())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let eval = if args.all { data } else { data.subset(&split_dataset(data.samples.len(), args.split_seed)?.test) };
    let report = evaluate_model(&ckpt.network()?, &eval)?;
    let mut out = output(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    Ok(())
}

fn dummy(data: PathBuf, split_seed: u64) -> Result<()> {
    let data = load_dataset(&data)?;
    let plan = split_dataset(data.samples.len(), split_seed)?;
    let estimator = DummyEstimator::fit_dataset(&data.subset(&plan.train))?;
    print_json(&evaluate_dummy(&estimator, &data.subset(&plan.test))?)
}

fn bench(args: BenchArgs) -> Result<()> {
    let graph = args.source.build()?;
    let model = model_config(&args.model)?;
    let mut surrogates: BTreeMap<usize, Surrogate> = BTreeMap::new();
    for path in &args.checkpoints {
        let net = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?.network()?;
        if net.spec().nodes != graph.n() {
            bail!("{} expects {} nodes, the graph has {}", path.display(), net.spec().nodes, graph.n());
        }
        surrogates.insert(net.spec().horizon, net);
    }
    for &h in &args.horizons {
        if !surrogates.contains_key(&h) {
            let spec = ModelSpec::new(Preset::Desk.hidden(), SPATIAL_WIDTH, h, graph.n(), true)?;
            surrogates.insert(h, Surrogate::init(spec, Some(graph.adjacency().clone()), args.seed)?);
        }
    }
    let config = BenchConfig {
        executions: args.executions,
        horizons: args.horizons,
        changes: args.changes,
        repetitions: args.repetitions,
        seed: args.seed,
        ..BenchConfig::default()
    };
    let report = bench_runtime(&config, &graph, &model, &surrogates)?;
    if let Some(path) = &args.out {
        write_bench_csv(&report, BufWriter::new(File::create(path)?))?;
    }
    print_json(&report)
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    }
    .with_process_env()?;
    if let Some(v) = args.host {
        config.host = v;
    }
    if let Some(v) = args.port {
        config.port = v;
    }
    if let Some(v) = args.checkpoint {
        config.checkpoint = Some(v);
    }
    if let Some(v) = args.graph {
        config.graph = Some(v);
    }
    if let Some(v) = args.workers {
        config.workers = v;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(epigraph_service::serve(config))?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info,tower_http=debug")),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Graph(a) => graph(a),
        Command::Generate(a) => generate(a),
        Command::ExportNdjson { input, out } => Ok(write_ndjson(&load_dataset(&input)?, output(&out)?)?),
        Command::Train(a) => train_cmd(a),
        Command::Grid(a) => grid(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Dummy { data, split_seed } => dummy(data, split_seed),
        Command::Bench(a) => bench(a),
        Command::ModelDefaults => print_json(&ModelConfig::default()),
        Command::Serve(a) => serve(a),
    }
}
