//! `temg` command-line front end. Stages talk through files; every command
//! writes a JSON manifest next to its main output.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or I/O error,
//! 3 verification failure (oracle or gradient gate).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchError, TimingRow};
use crate::config::{ConfigError, Manifest, RunConfig, SCHEMA_VERSION};
use crate::gnn::{
    forward, gradient_check, load_checkpoint, save_checkpoint, sigmoid, train, Checkpoint, DropoutMode, GnnError,
    ModelConfig, ModelInputs,
};
use crate::graph::{
    chronological_split, load_feature_override, load_labels, load_transactions, message_graph, ColumnSchema,
    DataSplit, GraphError, TemporalGraph,
};
use crate::metrics::{evaluate, EvalResult, MetricError};
use crate::motif::{
    count_motifs, count_motifs_bruteforce, enumerate_taxonomy, MotifCountMatrix, MotifError, MotifMatchConfig,
    BRUTEFORCE_MAX_EDGES,
};
use crate::synth::{shift_pair_annotated, write_dataset, SynthError};
use crate::tta::{adapt, StepDiagnostics, TtaError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Largest relative error the `--gradcheck` gate accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }

    fn verify(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERIFY, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Invariant(_) => Self::internal(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<MotifError> for CliError {
    fn from(e: MotifError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::NonFinite { .. } | GnnError::Divergence { .. } | GnnError::Feature(_) => {
                Self::internal(e.to_string())
            }
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<TtaError> for CliError {
    fn from(e: TtaError) -> Self {
        match e {
            TtaError::Model(m) => m.into(),
            TtaError::InvalidConfig(_) => Self::usage(e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Graph(g) => g.into(),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Motif(m) => m.into(),
            BenchError::Synth(s) => s.into(),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::usage(format!("cannot evaluate: {e}"))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "temg", version, about = "Temporal motif counting, motif-aware anomaly detection and test-time adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled train/test pair with a distribution shift.
    Synth(SynthArgs),
    /// Count motif roles per node and time the matcher.
    Motifs(MotifsArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Adapt a checkpoint to an unlabeled test graph.
    Tta(TtaArgs),
    /// Score a graph with a checkpoint and report metrics.
    Eval(EvalArgs),
    /// Matcher scaling and parameter-effect timings.
    Bench(BenchArgs),
    /// Dump the motif taxonomy as JSON.
    Taxonomy(TaxonomyArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set k=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Manifest path (defaults next to the main output).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    #[arg(long, default_value = "src")]
    pub src_col: String,
    #[arg(long, default_value = "dst")]
    pub dst_col: String,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "amount")]
    pub amount_col: String,
}

impl SchemaArgs {
    fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            src: self.src_col.clone(),
            dst: self.dst_col.clone(),
            time: self.time_col.clone(),
            amount: self.amount_col.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Transaction CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Label CSV (`address,label`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Node feature override CSV.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Precomputed count CSV from `motifs`; counted on the fly when absent.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for `train_*` and `test_*` files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_nodes: Option<usize>,
    #[arg(long)]
    pub n_tx: Option<usize>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct MotifsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Count CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Timing JSON (defaults to `<out>.timing.json`).
    #[arg(long)]
    pub timing: Option<PathBuf>,
    /// Edge limit, or `none`.
    #[arg(long)]
    pub k: Option<String>,
    /// Aggregation range in seconds, or `none`.
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub window: Option<i64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Cross-check against the brute-force counter (small inputs only).
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch JSONL log (defaults to `<out>.log.jsonl`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Split JSON (defaults to `<out>.split.json`).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Finite-difference check of the trained model; exit 3 on failure.
    #[arg(long)]
    pub gradcheck: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TtaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Adapted checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON (defaults to `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Split JSON from `train`; restricts scoring to `--subset`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Node subset (default: `test` with a split, `all` without).
    #[arg(long, value_enum)]
    pub subset: Option<Subset>,
    /// Per-node score CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Timing CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Stream sizes for the matcher scaling run.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 20_000, 40_000, 80_000])]
    pub sizes: Vec<usize>,
    /// Stream sizes for the brute-force scaling run.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 200, 400])]
    pub oracle_sizes: Vec<usize>,
    /// Size of the dense burst stream for the parameter-effect run; 0 skips it.
    #[arg(long, default_value_t = 1500)]
    pub burst: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary JSON (defaults to `<out>.summary.json`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TaxonomyArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command, argv: &[String]) -> CliResult {
    match command {
        Command::Synth(a) => cmd_synth(a, argv),
        Command::Motifs(a) => cmd_motifs(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Tta(a) => cmd_tta(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::Bench(a) => cmd_bench(a, argv),
        Command::Taxonomy(a) => cmd_taxonomy(a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn ensure_exists(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("no such file: {}", path.display())))
    }
}

/// Defaults, then `--config`, then `--set`, then the command's own flags.
fn resolve(cfg: &ConfigArgs, flags: Vec<(String, String)>) -> CliResult<RunConfig> {
    let file = cfg.config.as_deref().map(read_text).transpose()?;
    let mut overrides = Vec::new();
    for item in &cfg.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    overrides.extend(flags);
    Ok(RunConfig::resolve(file.as_deref(), &overrides)?)
}

fn flag<T: ToString>(key: &str, v: &Option<T>) -> Option<(String, String)> {
    v.as_ref().map(|v| (key.to_string(), v.to_string()))
}

struct Run {
    manifest: Manifest,
    path: PathBuf,
}

impl Run {
    fn new(command: &str, cfg: &RunConfig, argv: &[String], explicit: &Option<PathBuf>, default: PathBuf) -> Self {
        let mut manifest = Manifest::new(command, cfg);
        manifest.args = argv.to_vec();
        Self { manifest, path: explicit.clone().unwrap_or(default) }
    }

    fn input(&mut self, path: &Path) -> CliResult {
        self.manifest.input(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
    }

    fn output(&mut self, path: &Path) -> CliResult {
        self.manifest.output(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
    }

    fn finish(self) -> CliResult {
        write_text(&self.path, &(self.manifest.to_json() + "\n"))
    }
}

fn load_graph(args: &GraphArgs, run: &mut Run, require_labels: bool) -> CliResult<TemporalGraph> {
    ensure_exists(&args.input)?;
    let raw = load_transactions(&args.input, &args.schema.schema())?;
    if raw.report.self_transfers > 0 {
        log::warn!("dropped {} self-transfers from {}", raw.report.self_transfers, args.input.display());
    }
    run.input(&args.input)?;
    let mut graph = TemporalGraph::from_raw(raw)?;
    match &args.labels {
        Some(path) => {
            ensure_exists(path)?;
            graph.attach_labels(&load_labels(path)?)?;
            run.input(path)?;
        }
        None if require_labels => return Err(CliError::usage("--labels is required for this command")),
        None => {}
    }
    if let Some(path) = &args.features {
        ensure_exists(path)?;
        let x = load_feature_override(path, &graph)?;
        graph.set_features(x)?;
        run.input(path)?;
    }
    Ok(graph)
}

fn load_counts(args: &GraphArgs, graph: &TemporalGraph, cfg: &RunConfig, run: &mut Run) -> CliResult<MotifCountMatrix> {
    match &args.counts {
        Some(path) => {
            ensure_exists(path)?;
            let file = File::open(path).map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
            let counts = MotifCountMatrix::read_csv(std::io::BufReader::new(file), graph)?;
            run.input(path)?;
            Ok(counts)
        }
        None => with_threads(cfg.threads, || count_motifs(graph, &cfg.motif, &enumerate_taxonomy()))?
            .map_err(Into::into),
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_in_dim(model: &ModelConfig, graph: &TemporalGraph) -> CliResult {
    if model.in_dim != graph.features.ncols() {
        return Err(CliError::usage(format!(
            "checkpoint expects {} input features, graph has {}",
            model.in_dim,
            graph.features.ncols()
        )));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs, argv: &[String]) -> CliResult {
    let flags = [
        flag("synth.n_nodes", &a.n_nodes),
        flag("synth.n_background_tx", &a.n_tx),
        flag("synth.shift_strength", &a.shift),
        flag("synth.seed", &a.seed),
    ];
    let cfg = resolve(&a.cfg, flags.into_iter().flatten().collect())?;
    let mut run = Run::new("synth", &cfg, argv, &a.cfg.manifest, a.out.join("manifest.json"));
    let ((train_g, train_a), (test_g, test_a)) = shift_pair_annotated(&cfg.synth)?;
    write_dataset(&a.out, "train_", &train_g, &train_a)?;
    write_dataset(&a.out, "test_", &test_g, &test_a)?;
    for prefix in ["train_", "test_"] {
        for name in ["transactions.csv", "labels.csv", "annotations.json"] {
            run.output(&a.out.join(format!("{prefix}{name}")))?;
        }
    }
    println!(
        "synth: train {} nodes / {} edges, test {} nodes / {} edges -> {}",
        train_g.num_nodes,
        train_g.edges.len(),
        test_g.num_nodes,
        test_g.edges.len(),
        a.out.display()
    );
    run.finish()
}

#[derive(Debug, Serialize)]
struct TimingReport {
    schema_version: u32,
    variant: String,
    seconds: f64,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    threads: usize,
    oracle: Option<String>,
}

fn cmd_motifs(a: MotifsArgs, argv: &[String]) -> CliResult {
    let flags = [
        flag("edge_limit", &a.k),
        flag("aggregation", &a.dt),
        flag("window", &a.window),
        flag("threads", &a.threads),
    ];
    let cfg = resolve(&a.cfg, flags.into_iter().flatten().collect())?;
    let timing_path = a.timing.clone().unwrap_or_else(|| with_suffix(&a.out, ".timing.json"));
    let mut run = Run::new("motifs", &cfg, argv, &a.cfg.manifest, with_suffix(&a.out, ".manifest.json"));
    ensure_exists(&a.input)?;
    let graph = TemporalGraph::from_raw(load_transactions(&a.input, &a.schema.schema())?)?;
    run.input(&a.input)?;
    let tax = enumerate_taxonomy();

    let start = Instant::now();
    let counts = with_threads(cfg.threads, || count_motifs(&graph, &cfg.motif, &tax))??;
    let seconds = start.elapsed().as_secs_f64();

    let oracle = if a.oracle {
        if graph.edges.len() > BRUTEFORCE_MAX_EDGES {
            return Err(CliError::usage(format!(
                "--oracle needs at most {BRUTEFORCE_MAX_EDGES} transactions, input has {}",
                graph.edges.len()
            )));
        }
        // the oracle has no edge limit, so compare the unlimited matcher
        let unlimited = MotifMatchConfig { edge_limit: None, ..cfg.motif };
        let fast = with_threads(cfg.threads, || count_motifs(&graph, &unlimited, &tax))??;
        let slow = count_motifs_bruteforce(&graph, &unlimited, &tax)?;
        if fast != slow {
            let bad = (0..graph.num_nodes).filter(|&v| fast.row(v) != slow.row(v)).count();
            return Err(CliError::verify(format!("matcher and brute-force counts differ on {bad} nodes")));
        }
        Some("match".to_string())
    } else {
        None
    };

    let mut w = create(&a.out)?;
    counts
        .write_csv(&mut w, &graph)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", a.out.display())))?;
    drop(w);
    let timing = TimingReport {
        schema_version: SCHEMA_VERSION,
        variant: bench::variant_name(&cfg.motif).to_string(),
        seconds,
        m: graph.edges.len(),
        n: graph.num_nodes,
        threads: cfg.threads,
        oracle,
    };
    write_json(&timing_path, &timing)?;
    run.output(&a.out)?;
    println!(
        "motifs: {} instances-roles over {} nodes, {} edges in {:.3}s ({})",
        counts.total(),
        graph.num_nodes,
        graph.edges.len(),
        seconds,
        timing.variant
    );
    run.finish()
}

/// Split as addresses, so it survives re-interning.
#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    schema_version: u32,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

impl SplitFile {
    fn new(split: &DataSplit, graph: &TemporalGraph) -> Self {
        let names = |v: &[usize]| v.iter().map(|&i| graph.node_ids.address(i as u32).to_string()).collect();
        Self {
            schema_version: SCHEMA_VERSION,
            train: names(&split.train_nodes),
            val: names(&split.val_nodes),
            test: names(&split.test_nodes),
        }
    }

    fn nodes(&self, subset: Subset, graph: &TemporalGraph) -> CliResult<Vec<usize>> {
        let list: Vec<&String> = match subset {
            Subset::All => self.train.iter().chain(&self.val).chain(&self.test).collect(),
            Subset::Train => self.train.iter().collect(),
            Subset::Val => self.val.iter().collect(),
            Subset::Test => self.test.iter().collect(),
        };
        let mut nodes: Vec<usize> = list
            .into_iter()
            .map(|a| {
                graph
                    .node_ids
                    .get(a)
                    .map(|v| v as usize)
                    .ok_or_else(|| CliError::usage(format!("split names unknown address `{a}`")))
            })
            .collect::<CliResult<_>>()?;
        nodes.sort_unstable();
        Ok(nodes)
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    best_epoch: usize,
    epochs_run: usize,
    gradcheck: Option<crate::gnn::GradCheckReport>,
}

fn cmd_train(a: TrainArgs, argv: &[String]) -> CliResult {
    let flags = [flag("seed", &a.seed), flag("max_epochs", &a.epochs)];
    let mut cfg = resolve(&a.cfg, flags.into_iter().flatten().collect())?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.jsonl"));
    let split_path = a.split.clone().unwrap_or_else(|| with_suffix(&a.out, ".split.json"));
    let mut run = Run::new("train", &cfg, argv, &a.cfg.manifest, with_suffix(&a.out, ".manifest.json"));
    let graph = load_graph(&a.graph, &mut run, true)?;
    cfg.gnn.model.in_dim = graph.features.ncols();
    let counts = load_counts(&a.graph, &graph, &cfg, &mut run)?;

    let split = chronological_split(&graph, cfg.split)?;
    let msg = message_graph(&graph);
    let inputs = ModelInputs::from_graph(&graph, &counts, &cfg.gnn.model)?;
    let outcome = train(&inputs, &msg, &graph.label_vector(), &split, &cfg.gnn)?;

    let gradcheck = if a.gradcheck {
        let report = gradient_check(&outcome.params, &cfg.gnn.model, &inputs, &msg, 2, cfg.gnn.seed)?;
        if report.max_rel_err.is_nan() || report.max_rel_err >= GRADCHECK_TOLERANCE {
            return Err(CliError::verify(format!(
                "gradient check failed: max relative error {:.3e} in {}",
                report.max_rel_err,
                report.worst_tensor.as_deref().unwrap_or("?")
            )));
        }
        Some(report)
    } else {
        None
    };

    let ck = Checkpoint { config: cfg.gnn.model.clone(), provenance: "train".into(), params: outcome.params.clone() };
    save_checkpoint(&a.out, &ck)?;
    write_text(&log_path, &outcome.log_jsonl())?;
    write_json(&split_path, &SplitFile::new(&split, &graph))?;
    for p in [&a.out, &log_path, &split_path] {
        run.output(p)?;
    }
    let summary = TrainSummary { best_epoch: outcome.best_epoch, epochs_run: outcome.history.len(), gradcheck };
    println!("train: {}", serde_json::to_string(&summary).expect("summary serializes"));
    run.finish()
}

#[derive(Debug, Serialize)]
struct TtaReportFile {
    schema_version: u32,
    steps: usize,
    predict_with: String,
    per_step: Vec<StepDiagnostics>,
    initial_metrics: Option<EvalResult>,
    final_metrics: Option<EvalResult>,
}

fn labeled_metrics(graph: &TemporalGraph, logits: &[f64], nodes: &[usize]) -> CliResult<EvalResult> {
    let scores: Vec<f64> = nodes.iter().map(|&v| sigmoid(logits[v])).collect();
    let labels: Vec<bool> = nodes.iter().map(|&v| graph.labels[v] == Some(true)).collect();
    Ok(evaluate(&scores, &labels)?)
}

fn cmd_tta(a: TtaArgs, argv: &[String]) -> CliResult {
    let flags = [flag("tta.steps", &a.steps)];
    let mut cfg = resolve(&a.cfg, flags.into_iter().flatten().collect())?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    ensure_exists(&a.checkpoint)?;
    let ck = load_checkpoint(&a.checkpoint, None)?;
    // the model shape comes from the checkpoint, echo that one
    cfg.gnn.model = ck.config.clone();
    let mut run = Run::new("tta", &cfg, argv, &a.cfg.manifest, with_suffix(&a.out, ".manifest.json"));
    run.input(&a.checkpoint)?;
    let graph = load_graph(&a.graph, &mut run, false)?;
    check_in_dim(&ck.config, &graph)?;
    let counts = load_counts(&a.graph, &graph, &cfg, &mut run)?;
    let msg = message_graph(&graph);
    let inputs = ModelInputs::from_graph(&graph, &counts, &ck.config)?;

    let labeled = graph.labeled_nodes();
    let initial_metrics = if labeled.is_empty() {
        None
    } else {
        let logits = forward(&ck.params, &ck.config, &inputs, &msg, DropoutMode::Eval)?.logits;
        Some(labeled_metrics(&graph, &logits, &labeled)?)
    };
    let outcome = adapt(&ck.params, &ck.config, &inputs, &msg, &cfg.tta)?;
    let final_metrics =
        if labeled.is_empty() { None } else { Some(labeled_metrics(&graph, &outcome.logits, &labeled)?) };

    let adapted = Checkpoint { config: ck.config.clone(), provenance: "tta".into(), params: outcome.predictor(&cfg.tta).clone() };
    save_checkpoint(&a.out, &adapted)?;
    let predict_with = serde_json::to_value(cfg.tta.predict_with)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let report = TtaReportFile {
        schema_version: SCHEMA_VERSION,
        steps: cfg.tta.steps,
        predict_with,
        per_step: outcome.per_step,
        initial_metrics,
        final_metrics,
    };
    write_json(&report_path, &report)?;
    run.output(&a.out)?;
    run.output(&report_path)?;
    match (initial_metrics, final_metrics) {
        (Some(i), Some(f)) => println!("tta: {} steps, AUC-PRC {:.4} -> {:.4}", cfg.tta.steps, i.auc_prc, f.auc_prc),
        _ => println!("tta: {} steps", cfg.tta.steps),
    }
    run.finish()
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    schema_version: u32,
    subset: Subset,
    metrics: EvalResult,
}

fn cmd_eval(a: EvalArgs, argv: &[String]) -> CliResult {
    let mut cfg = resolve(&a.cfg, Vec::new())?;
    ensure_exists(&a.checkpoint)?;
    let ck = load_checkpoint(&a.checkpoint, None)?;
    // the model shape comes from the checkpoint, echo that one
    cfg.gnn.model = ck.config.clone();
    let mut run = Run::new("eval", &cfg, argv, &a.cfg.manifest, with_suffix(&a.out, ".manifest.json"));
    run.input(&a.checkpoint)?;
    let graph = load_graph(&a.graph, &mut run, true)?;
    check_in_dim(&ck.config, &graph)?;
    let counts = load_counts(&a.graph, &graph, &cfg, &mut run)?;
    let msg = message_graph(&graph);
    let inputs = ModelInputs::from_graph(&graph, &counts, &ck.config)?;
    let logits = forward(&ck.params, &ck.config, &inputs, &msg, DropoutMode::Eval)?.logits;

    let (subset, nodes) = match &a.split {
        Some(path) => {
            ensure_exists(path)?;
            let split: SplitFile =
                serde_json::from_str(&read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            run.input(path)?;
            let subset = a.subset.unwrap_or(Subset::Test);
            (subset, split.nodes(subset, &graph)?)
        }
        None => match a.subset {
            None | Some(Subset::All) => (Subset::All, graph.labeled_nodes()),
            Some(_) => return Err(CliError::usage("--subset other than `all` needs --split")),
        },
    };
    let nodes: Vec<usize> = nodes.into_iter().filter(|&v| graph.labels[v].is_some()).collect();
    let metrics = labeled_metrics(&graph, &logits, &nodes)?;
    write_json(&a.out, &MetricsFile { schema_version: SCHEMA_VERSION, subset, metrics })?;
    run.output(&a.out)?;
    if let Some(path) = &a.scores {
        let mut w = create(path)?;
        let mut text = String::from("address,score\n");
        for (v, z) in logits.iter().enumerate() {
            text.push_str(&format!("{},{}\n", graph.node_ids.address(v as u32), sigmoid(*z)));
        }
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
        drop(w);
        run.output(path)?;
    }
    println!(
        "eval: AUC-PRC {:.4}  Rec@{} {:.4}  F1 {:.4}  ({} pos / {} neg)",
        metrics.auc_prc, metrics.k_used, metrics.rec_at_k, metrics.f1, metrics.n_pos, metrics.n_neg
    );
    run.finish()
}

#[derive(Debug, Serialize)]
struct BenchSummary {
    schema_version: u32,
    edge_limit: usize,
    window: i64,
    matcher_slope: Option<f64>,
    oracle_slope: Option<f64>,
    speedup_k: Option<f64>,
    speedup_dt: Option<f64>,
}

fn slope(rows: &[TimingRow]) -> Option<f64> {
    (rows.len() >= 2).then(|| {
        let xs: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.seconds.max(1e-9)).collect();
        bench::log_log_slope(&xs, &ys)
    })
}

fn cmd_bench(a: BenchArgs, argv: &[String]) -> CliResult {
    let cfg = resolve(&a.cfg, Vec::new())?;
    let summary_path = a.summary.clone().unwrap_or_else(|| with_suffix(&a.out, ".summary.json"));
    let mut run = Run::new("bench", &cfg, argv, &a.cfg.manifest, with_suffix(&a.out, ".manifest.json"));
    let tax = enumerate_taxonomy();
    let k = cfg.motif.edge_limit.unwrap_or(100);
    let dt = cfg.motif.aggregation.unwrap_or(3600);
    let fixed_k = MotifMatchConfig { edge_limit: Some(k), aggregation: None, ..cfg.motif };

    let (fast, oracle, effect) = with_threads(cfg.threads, || -> Result<_, BenchError> {
        let fast = bench::scaling(&a.sizes, &fixed_k, &tax, a.repeats, a.seed)?;
        let oracle = bench::oracle_scaling(&a.oracle_sizes, &tax, a.seed)?;
        let effect = if a.burst > 0 {
            bench::parameter_effect(a.burst, cfg.motif.window, k, dt, &tax, a.repeats, a.seed)?
        } else {
            Vec::new()
        };
        Ok((fast, oracle, effect))
    })??;

    let mut text = String::from("workload,variant,m,n,seconds\n");
    for (workload, rows) in [("scaling", &fast), ("scaling", &oracle), ("burst", &effect)] {
        for r in rows {
            text.push_str(&format!("{workload},{},{},{},{}\n", r.variant, r.m, r.n, r.seconds));
        }
    }
    write_text(&a.out, &text)?;
    let speedup = |name: &str| {
        let base = effect.iter().find(|r| r.variant == "unlimited")?;
        let other = effect.iter().find(|r| r.variant == name)?;
        Some(base.seconds / other.seconds.max(1e-9))
    };
    let summary = BenchSummary {
        schema_version: SCHEMA_VERSION,
        edge_limit: k,
        window: cfg.motif.window,
        matcher_slope: slope(&fast),
        oracle_slope: slope(&oracle),
        speedup_k: speedup("k"),
        speedup_dt: speedup("dt"),
    };
    write_json(&summary_path, &summary)?;
    run.output(&a.out)?;
    run.output(&summary_path)?;
    println!("bench: {}", serde_json::to_string(&summary).expect("summary serializes"));
    run.finish()
}

#[derive(Debug, Serialize)]
struct TaxonomyEntry {
    index: usize,
    node_count: u8,
    edges: [(u8, u8); 3],
}

#[derive(Debug, Serialize)]
struct TaxonomyFile {
    schema_version: u32,
    count: usize,
    classes: Vec<TaxonomyEntry>,
}

fn cmd_taxonomy(a: TaxonomyArgs) -> CliResult {
    let tax = enumerate_taxonomy();
    let file = TaxonomyFile {
        schema_version: SCHEMA_VERSION,
        count: tax.len(),
        classes: tax
            .classes()
            .iter()
            .enumerate()
            .map(|(index, s)| TaxonomyEntry { index, node_count: s.node_count, edges: s.edges })
            .collect(),
    };
    match &a.out {
        Some(path) => write_json(path, &file),
        None => {
            println!("{}", serde_json::to_string_pretty(&file).expect("taxonomy serializes"));
            Ok(())
        }
    }
}
