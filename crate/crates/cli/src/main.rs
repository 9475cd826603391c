use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fuzzcoh::evaluation::{evaluate, write_evaluation_json, AssignRule, DEFAULT_THRESHOLD};
use fuzzcoh::fcm::{fcm_fit, read_memberships_csv, write_centers_json, write_memberships_csv, FcmParams};
use fuzzcoh::filter::{design_bandpass, filter_dataset, BandTable, DEFAULT_ORDER};
use fuzzcoh::kencoh::{extract_features, read_features_csv, write_features_csv, ExtractOptions};
use fuzzcoh::kendall::DependenceEstimator;
use fuzzcoh::mts::{write_csv, MtsDataset};
use fuzzcoh::pipeline::{reproduce_sim, run_pipeline, write_curves_csv, CsvInput, PipelineConfig, ReproduceOptions, RAW_BAND};
use fuzzcoh::simgen::{gen_dataset, write_truth_json, SimConfig, SimTruth};
use fuzzcoh::validity::{grid_search, write_grid_json, DEFAULT_C_GRID, DEFAULT_M_GRID};
use fuzzcoh::Error;

#[derive(Parser)]
#[command(name = "fuzzcoh", version, about = "Robust spectral fuzzy clustering of multivariate time series")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and its truth labels.
    Simulate(SimulateArgs),
    /// Band-pass filter every block of a CSV recording.
    Filter(FilterArgs),
    /// Extract canonical-coherence feature vectors.
    Features(FeaturesArgs),
    /// Fit fuzzy C-means for one (C, m).
    Cluster(ClusterArgs),
    /// Grid-search (C, m) by the fuzzy silhouette index.
    Validate(ValidateArgs),
    /// Score memberships against truth or labels.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Replicated simulation study: accuracy and Rand index against m.
    ReproduceSim(ReproduceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in example: 1 Gaussian, 2 Student t3, 3 Cauchy noise.
    #[arg(long, conflicts_with = "config")]
    example: Option<u8>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of blocks.
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// CSV recording with one header row of channel names.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 128.0)]
    sample_rate: f64,
    /// Rows per block.
    #[arg(long)]
    block_length: Option<usize>,
    /// Column whose value changes at block boundaries.
    #[arg(long)]
    boundary_column: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    label_column: Option<String>,
    /// JSON sidecar with block_length, labels and regions.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Region pair `A:B` from the metadata regions.
    #[arg(long, value_parser = parse_pair)]
    pair: Option<(String, String)>,
}

impl InputArgs {
    fn load(&self) -> fuzzcoh::Result<MtsDataset> {
        let input = CsvInput {
            path: self.input.clone(),
            sample_rate_hz: self.sample_rate,
            block_length: self.block_length,
            boundary_column: self.boundary_column.clone(),
            p: self.p,
            q: self.q,
            label_column: self.label_column.clone(),
            metadata: self.metadata.clone(),
            strict: true,
        };
        match &self.pair {
            Some((a, b)) => {
                let map = input
                    .regions(None)?
                    .ok_or_else(|| Error::Config("--pair needs regions in the metadata sidecar".into()))?;
                input.load(Some((&map, (a, b))))
            }
            None => input.load(None),
        }
    }
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    band: String,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Band to filter to first, or `raw`.
    #[arg(long, default_value = RAW_BAND)]
    band: String,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    #[arg(long, default_value_t = 5)]
    max_lag: usize,
    #[arg(long, default_value = "kendall")]
    dependence: DependenceEstimator,
    /// Drop degenerate or failing blocks instead of aborting.
    #[arg(long)]
    skip_degenerate: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Feature CSV from `features`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, short = 'c', default_value_t = 2)]
    clusters: usize,
    #[arg(long, short = 'm', default_value_t = 1.5)]
    m: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    features: PathBuf,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<usize>>,
    /// Comma-separated m values.
    #[arg(long, value_delimiter = ',')]
    m_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    memberships: PathBuf,
    /// Simulation truth JSON from `simulate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Metadata sidecar carrying per-block labels.
    #[arg(long, conflicts_with = "truth")]
    metadata: Option<PathBuf>,
    #[arg(long, value_parser = parse_rule)]
    rule: Option<AssignRule>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Bands to run, replacing the configured list.
    #[arg(long)]
    band: Vec<String>,
    /// Region pairs `A:B`, replacing the configured list.
    #[arg(long, value_parser = parse_pair)]
    pair: Vec<(String, String)>,
    #[arg(long)]
    dependence: Option<DependenceEstimator>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    skip_degenerate: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, default_value_t = 1)]
    example: u8,
    /// Fraction of the full 300-block dataset.
    #[arg(long, default_value_t = 0.2)]
    scale: f64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Optional band to filter to before analysis.
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    dependence: Vec<DependenceEstimator>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected a region pair like A:B, got '{s}'")),
    }
}

fn parse_rule(s: &str) -> Result<AssignRule, String> {
    match s {
        "threshold" => Ok(AssignRule::Threshold),
        "max-membership" | "max" => Ok(AssignRule::MaxMembership),
        _ => Err(format!("unknown rule '{s}'; expected threshold or max-membership")),
    }
}

fn create(path: &Path) -> fuzzcoh::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> fuzzcoh::Result<T> {
    let f = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(f).map_err(|e| Error::Config(format!("invalid JSON in {}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> fuzzcoh::Result<()> {
    let mut cfg: SimConfig = match (&a.config, a.example) {
        (Some(p), _) => read_json(p)?,
        (None, Some(k)) => SimConfig::example(k)?,
        (None, None) => SimConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.blocks {
        cfg.n_blocks = b;
    }
    let sim = gen_dataset(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    write_csv(&sim.dataset, create(&a.out_dir.join("data.csv"))?, true)?;
    write_truth_json(&sim.truth(&cfg), create(&a.out_dir.join("truth.json"))?)?;
    log::info!("wrote {} blocks to {}", sim.dataset.len(), a.out_dir.display());
    Ok(())
}

fn filter(a: FilterArgs) -> fuzzcoh::Result<()> {
    let ds = a.input.load()?;
    let band = BandTable::default().band(&a.band, ds.sample_rate_hz())?;
    let design = design_bandpass(&band, a.order)?;
    let out = filter_dataset(&ds, &design)?;
    write_csv(&out, create(&a.out)?, true)
}

fn features(a: FeaturesArgs) -> fuzzcoh::Result<()> {
    let ds = a.input.load()?;
    let ds = if a.band == RAW_BAND {
        ds
    } else {
        let band = BandTable::default().band(&a.band, ds.sample_rate_hz())?;
        filter_dataset(&ds, &design_bandpass(&band, a.order)?)?
    };
    let opts = ExtractOptions {
        max_lag: a.max_lag,
        estimator: a.dependence,
        skip_degenerate: a.skip_degenerate,
    };
    let set = extract_features(&ds, &opts)?;
    write_features_csv(&set, &a.band, create(&a.out)?)?;
    if !set.excluded.is_empty() {
        let path = a.out.with_extension("excluded.json");
        serde_json::to_writer_pretty(create(&path)?, &set.excluded)?;
        eprintln!("excluded {} blocks; see {}", set.excluded.len(), path.display());
    }
    Ok(())
}

fn load_features(path: &Path) -> fuzzcoh::Result<(Vec<usize>, Vec<Vec<f64>>)> {
    read_features_csv(File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?)
}

fn cluster(a: ClusterArgs) -> fuzzcoh::Result<()> {
    let (ids, x) = load_features(&a.features)?;
    let params = FcmParams {
        n_restarts: a.restarts,
        ..FcmParams::new(a.clusters, a.m, a.seed)
    };
    let part = fcm_fit(&x, &params)?;
    fs::create_dir_all(&a.out_dir)?;
    write_memberships_csv(&part, &ids, create(&a.out_dir.join("memberships.csv"))?)?;
    write_centers_json(&part, create(&a.out_dir.join("centers.json"))?)
}

fn validate(a: ValidateArgs) -> fuzzcoh::Result<()> {
    let (ids, x) = load_features(&a.features)?;
    let c_grid = a.c_grid.unwrap_or_else(|| DEFAULT_C_GRID.to_vec());
    let m_grid = a.m_grid.unwrap_or_else(|| DEFAULT_M_GRID.to_vec());
    let res = grid_search(&x, &c_grid, &m_grid, a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    write_grid_json(&res.report, create(&a.out_dir.join("fsi_grid.json"))?)?;
    write_memberships_csv(&res.partition, &ids, create(&a.out_dir.join("memberships.csv"))?)?;
    write_centers_json(&res.partition, create(&a.out_dir.join("centers.json"))?)?;
    println!("selected C = {}, m = {}", res.report.selected.c, res.report.selected.m);
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> fuzzcoh::Result<()> {
    let (ids, e) = read_memberships_csv(File::open(&a.memberships)?)?;
    let truth: Option<SimTruth> = a.truth.as_deref().map(read_json).transpose()?;
    let labels: Option<Vec<String>> = match &a.metadata {
        Some(p) => {
            let meta: fuzzcoh::mts::DatasetMetadata = read_json(p)?;
            meta.labels.map(|l| l.iter().map(|v| v.to_string()).collect())
        }
        None => None,
    };
    let max_id = ids.iter().copied().max().unwrap_or(0);
    let known = truth.as_ref().map(|t| t.kinds.len()).or(labels.as_ref().map(Vec::len));
    if known.is_some_and(|n| max_id >= n) {
        return Err(Error::Config(format!("block id {max_id} is outside the truth labels")));
    }
    let rule = a.rule.unwrap_or(if truth.is_some() { AssignRule::Threshold } else { AssignRule::MaxMembership });
    let report = evaluate(&e, &ids, rule, a.threshold, truth.as_ref().map(|t| t.kinds.as_slice()), labels.as_deref())?;
    write_evaluation_json(&report, create(&a.out)?)?;
    if let Some(acc) = report.accuracy {
        println!("accuracy {acc}");
    }
    if let Some(ri) = report.rand_index {
        println!("rand index {ri}");
    }
    println!("fuzzy fraction {}", report.fuzzy_fraction);
    Ok(())
}

fn pipeline(a: PipelineArgs) -> fuzzcoh::Result<()> {
    let mut cfg = PipelineConfig::from_path(&a.config)?;
    if !a.band.is_empty() {
        cfg.bands = a.band;
    }
    if !a.pair.is_empty() {
        cfg.pairs = a.pair;
    }
    if let Some(d) = a.dependence {
        cfg.dependence = d;
    }
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.skip_degenerate {
        cfg.skip_degenerate = true;
    }
    if let Some(o) = a.output_dir {
        cfg.output_dir = o;
    }
    let out = run_pipeline(&cfg)?;
    for r in &out.rows {
        println!(
            "{:<8} {:<12} C={:<2} m={:<4} RI={} fuzzy%={} {}",
            r.band,
            r.pair,
            r.c.map_or("-".into(), |c| c.to_string()),
            r.m.map_or("-".into(), |m| m.to_string()),
            r.rand_index.map_or("-".into(), |v| format!("{v:.4}")),
            r.fuzzy_pct.map_or("-".into(), |v| format!("{v:.1}")),
            r.status
        );
    }
    match out.errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn reproduce(a: ReproduceArgs) -> fuzzcoh::Result<()> {
    let mut opts = ReproduceOptions::new(a.example, a.scale, a.reps, a.seed);
    opts.threshold = a.threshold;
    if !a.dependence.is_empty() {
        opts.estimators = a.dependence;
    }
    if let Some(b) = &a.band {
        opts.band = Some(BandTable::default().band(b, SimConfig::default().sample_rate_hz)?);
    }
    let res = reproduce_sim(&opts)?;
    let curves = res.curves();
    write_curves_csv(&curves, create(&a.out)?)?;
    for c in &curves {
        println!(
            "{:<8} m={:<4} accuracy {:.3} (sd {:.3})  RI {:.3} (sd {:.3})",
            c.estimator, c.m, c.mean_accuracy, c.sd_accuracy, c.mean_ri, c.sd_ri
        );
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if e.is_config() || matches!(root(e), Error::InvalidInput(_) | Error::Csv { .. } | Error::Json(_)) {
        2
    } else {
        1
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Block { source, .. } | Error::Context { source, .. } => root(source),
        other => other,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Filter(a) => filter(a),
        Command::Features(a) => features(a),
        Command::Cluster(a) => cluster(a),
        Command::Validate(a) => validate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Pipeline(a) => pipeline(a),
        Command::ReproduceSim(a) => reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
