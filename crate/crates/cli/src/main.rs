use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggplace::experiment::{self, ScalingConfig, TRIAL_FAILURE};
use aggplace::payload::{simulate_bytes, PayloadModel, DEFAULT_ENTRY_BYTES};
use aggplace::reduce::{simulate_reduce, write_edge_csv, Placement};
use aggplace::scenario::{
    corpus_payloads, gen_complete_binary, gen_loads, gen_payloads, gen_rpa, rng_from_seed, KRule,
    LoadDist, PayloadSpec, RateScheme, ScenarioConfig, UseCase,
};
use aggplace::soar::solve_retaining_tables;
use aggplace::strategies::{self, StrategyKind};
use aggplace::topology::DESTINATION_LABEL;
use aggplace::Tree;
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aggplace",
    version,
    about = "Aggregation switch placement on tree networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place at most k aggregating switches and print the cost.
    Solve(SolveArgs),
    /// Evaluate a given placement, optionally with byte-level payloads.
    Simulate(SimulateArgs),
    /// Run a JSON experiment configuration and write per-trial CSV rows.
    Experiment(ExperimentArgs),
    /// SOAR scaling sweep over complete binary trees with power-law loads.
    Scaling(ScalingArgs),
    /// Time the gather and color phases.
    Bench(BenchArgs),
    /// Write a generated topology as JSON.
    Generate(GenerateArgs),
}

/// Either a JSON file or a generator such as `btnet:256` or `rpa:128`.
#[derive(Args)]
struct TopologyArgs {
    #[arg(long)]
    topology: String,
    #[arg(long)]
    rates: Option<RateScheme>,
    /// Replaces the loads of the topology.
    #[arg(long)]
    loads: Option<LoadDist>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "soar")]
    strategy: StrategyKind,
    /// Per-edge CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump of every gathered table cell (SOAR only).
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    /// Comma-separated blue switch labels.
    #[arg(long, conflicts_with = "strategy")]
    placement: Option<String>,
    #[arg(long, requires = "k")]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "none")]
    use_case: UseCase,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ENTRY_BYTES)]
    entry_bytes: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<StrategyKind>>,
    #[arg(long)]
    use_case: Option<UseCase>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Per-trial rows; the summary goes next to it with a `.summary.csv` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096")]
    sizes: Vec<usize>,
    /// Budget rules such as `1%`, `log`, `sqrt`, or a fixed number.
    #[arg(long, value_delimiter = ',', default_value = "1%,log,sqrt")]
    k: Vec<KRule>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    reductions: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Normalized costs; blue fractions go next to it with a `.blue.csv` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64,128")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes with distinct exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Scaling(a) => cmd_scaling(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            if is_broken_pipe(e) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn load_topology(args: &TopologyArgs) -> Result<Tree, Failure> {
    let mut rng = rng_from_seed(args.seed);
    let generated = |kind: &str| -> Option<Result<usize, Failure>> {
        args.topology.strip_prefix(kind).map(|n| {
            n.parse::<usize>()
                .with_context(|| format!("bad size in `{}`", args.topology))
                .config()
        })
    };
    let tree = if let Some(n) = generated("btnet:") {
        gen_complete_binary(n?, args.rates.unwrap_or(RateScheme::Constant)).config()?
    } else if let Some(n) = generated("rpa:") {
        if args.rates.is_some_and(|r| r != RateScheme::Constant) {
            return Err(Failure::Config(anyhow!("rpa trees use constant rates")));
        }
        gen_rpa(n?, &mut rng).config()?
    } else {
        if args.rates.is_some() {
            return Err(Failure::Config(anyhow!(
                "--rates applies to generated topologies only"
            )));
        }
        let text = std::fs::read_to_string(&args.topology)
            .with_context(|| format!("reading {}", args.topology))
            .config()?;
        Tree::from_json(&text)
            .with_context(|| format!("invalid topology {}", args.topology))
            .config()?
    };
    match &args.loads {
        Some(dist) => {
            let loads = gen_loads(&tree, dist, &mut rng).config()?;
            tree.with_loads(loads).config()
        }
        None => Ok(tree),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .runtime()?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn parent_label(tree: &Tree, v: aggplace::SwitchId) -> &str {
    tree.parent(v).map_or(DESTINATION_LABEL, |p| tree.label(p))
}

fn print_placement(
    tree: &Tree,
    placement: &Placement,
    bytes: Option<&[u64]>,
) -> Result<f64, Failure> {
    let util = simulate_reduce(tree, placement).runtime()?;
    let mut out = io::stdout().lock();
    writeln!(out, "blue: {}", placement.labels(tree).join(" ")).runtime()?;
    writeln!(out, "cost: {}", util.total).runtime()?;
    if let Some(b) = bytes {
        writeln!(out, "bytes: {}", b.iter().sum::<u64>()).runtime()?;
    }
    writeln!(out, "edges:").runtime()?;
    for v in tree.pre_order() {
        let bytes = bytes
            .map(|b| format!(" bytes={}", b[v.0]))
            .unwrap_or_default();
        writeln!(
            out,
            "  {} -> {} msg={} cost={}{bytes}",
            tree.label(v),
            parent_label(tree, v),
            util.msg[v.0],
            util.cost[v.0]
        )
        .runtime()?;
    }
    Ok(util.total)
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let tree = load_topology(&args.topo)?;
    let (placement, tables) = if args.strategy == StrategyKind::Soar {
        let res = solve_retaining_tables(&tree, args.k);
        (res.placement, res.tables)
    } else {
        (
            strategies::place(args.strategy, &tree, args.k).runtime()?,
            None,
        )
    };
    writeln!(io::stdout(), "strategy: {}\nk: {}", args.strategy, args.k).runtime()?;
    print_placement(&tree, &placement, None)?;
    if let Some(path) = &args.out {
        let util = simulate_reduce(&tree, &placement).runtime()?;
        write_edge_csv(&tree, &util, None, output(Some(path))?)
            .map_err(io::Error::from)
            .runtime()?;
    }
    if let Some(path) = &args.tables {
        let tables =
            tables.ok_or_else(|| Failure::Config(anyhow!("--tables needs the soar strategy")))?;
        tables
            .write_csv(&tree, output(Some(path))?)
            .map_err(io::Error::from)
            .runtime()?;
    }
    Ok(())
}

fn payload_model(tree: &Tree, args: &SimulateArgs) -> Result<Option<PayloadModel>, Failure> {
    let mut rng = rng_from_seed(args.topo.seed);
    match (args.use_case, &args.corpus) {
        (UseCase::None, None) => Ok(None),
        (UseCase::None, Some(_)) | (UseCase::Gradient, Some(_)) => Err(Failure::Config(anyhow!(
            "--corpus needs --use-case wordcount"
        ))),
        (UseCase::WordCount, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .config()?;
            corpus_payloads(tree, &text, args.entry_bytes)
                .config()
                .map(Some)
        }
        (UseCase::WordCount, None) => gen_payloads(
            tree,
            &PayloadSpec::default_wordcount(),
            args.entry_bytes,
            &mut rng,
        )
        .config()
        .map(Some),
        (UseCase::Gradient, None) => gen_payloads(
            tree,
            &PayloadSpec::default_gradient(),
            args.entry_bytes,
            &mut rng,
        )
        .config()
        .map(Some),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let tree = load_topology(&args.topo)?;
    let placement: Placement = match (&args.placement, args.strategy, args.k) {
        (Some(list), _, _) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|l| {
                tree.id_of(l)
                    .ok_or_else(|| Failure::Config(anyhow!("unknown switch `{l}`")))
            })
            .collect::<Result<_, _>>()?,
        (None, Some(kind), Some(k)) => strategies::place(kind, &tree, k).runtime()?,
        _ => Placement::empty(),
    };
    placement.validate(&tree).config()?;
    let model = payload_model(&tree, &args)?;
    let bytes = match &model {
        Some(m) => Some(simulate_bytes(&tree, &placement, m).runtime()?.per_edge),
        None => None,
    };
    print_placement(&tree, &placement, bytes.as_deref())?;
    if let Some(path) = &args.out {
        let util = simulate_reduce(&tree, &placement).runtime()?;
        write_edge_csv(&tree, &util, bytes.as_deref(), output(Some(path))?)
            .map_err(io::Error::from)
            .runtime()?;
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))
        .config()?;
    let mut cfg = ScenarioConfig::from_json(&text)
        .with_context(|| format!("invalid config {}", args.config.display()))
        .config()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(list) = args.strategy {
        cfg.strategies = list;
    }
    if let Some(use_case) = args.use_case {
        cfg.use_case = use_case;
    }
    if args.corpus.is_some() {
        cfg.corpus = args.corpus;
    }
    let rows = experiment::run_experiment(&cfg).config()?;
    experiment::write_csv(&rows, output(args.out.as_deref())?).runtime()?;
    let summary = experiment::summarize(&rows);
    match &args.out {
        Some(path) => {
            experiment::write_csv(&summary, output(Some(&sibling(path, ".summary.csv")))?)
                .runtime()?
        }
        None => {
            writeln!(io::stdout()).runtime()?;
            experiment::write_csv(&summary, io::stdout().lock()).runtime()?;
        }
    }
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.strategy == TRIAL_FAILURE)
        .map(|r| r.error.as_str())
        .collect();
    if let Some(first) = failed.first() {
        return Err(Failure::Runtime(anyhow!(
            "{} trial(s) failed, first: {first}",
            failed.len()
        )));
    }
    Ok(())
}

fn cmd_scaling(args: ScalingArgs) -> Result<(), Failure> {
    let cfg = ScalingConfig {
        sizes: args.sizes,
        k_rules: args.k,
        reductions: args.reductions,
        seed: args.seed,
        trials: args.trials,
    };
    let (rows, fractions) = experiment::run_scaling(&cfg).config()?;
    experiment::write_csv(&rows, output(args.out.as_deref())?).runtime()?;
    match &args.out {
        Some(path) => experiment::write_csv(&fractions, output(Some(&sibling(path, ".blue.csv")))?)
            .runtime()?,
        None => {
            writeln!(io::stdout()).runtime()?;
            experiment::write_csv(&fractions, io::stdout().lock()).runtime()?;
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for &n in &args.sizes {
        for &k in &args.k {
            rows.push(experiment::bench(n, k, args.reps, args.seed).config()?);
        }
    }
    experiment::write_csv(&rows, output(args.out.as_deref())?).runtime()
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let tree = load_topology(&args.topo)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", tree.to_json()).runtime()?;
    out.flush().runtime()
}
