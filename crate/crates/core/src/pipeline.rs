//! End-to-end runs: load or simulate, filter per band, extract features,
//! grid-search the fuzzy partition, evaluate, and write the artifacts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, simulation_accuracy, write_evaluation_json, AssignRule, TruthKind, DEFAULT_THRESHOLD};
use crate::fcm::{fcm_fit, write_centers_json, write_memberships_csv, FcmParams, FuzzyPartition};
use crate::filter::{design_bandpass, filter_dataset, BandSpec, BandTable, DEFAULT_ORDER};
use crate::kencoh::{extract_features, write_features_csv, ExtractOptions, FeatureSet};
use crate::kendall::DependenceEstimator;
use crate::mts::{load_csv, ChannelGroups, CsvLayout, CsvOptions, DatasetMetadata, MtsDataset, RegionMap};
use crate::seed::derive_seed;
use crate::simgen::{gen_dataset, SimConfig};
use crate::validity::{grid_search, write_grid_json, DEFAULT_C_GRID, DEFAULT_M_GRID};

/// Band name that skips filtering.
pub const RAW_BAND: &str = "raw";

fn default_true() -> bool {
    true
}

/// A CSV recording and how to split it into blocks and channel groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvInput {
    pub path: PathBuf,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub block_length: Option<usize>,
    #[serde(default)]
    pub boundary_column: Option<String>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub label_column: Option<String>,
    /// JSON sidecar with `block_length`, `labels` and `regions`.
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub strict: bool,
}

impl CsvInput {
    fn metadata(&self) -> Result<DatasetMetadata> {
        match &self.metadata {
            Some(p) => DatasetMetadata::from_path(p),
            None => Ok(DatasetMetadata::default()),
        }
    }

    fn layout(&self, meta: &DatasetMetadata) -> Result<CsvLayout> {
        match (&self.boundary_column, self.block_length.or(meta.block_length)) {
            (Some(c), _) => Ok(CsvLayout::BoundaryColumn(c.clone())),
            (None, Some(t)) => Ok(CsvLayout::BlockLength(t)),
            (None, None) => Err(Error::Config(
                "CSV input needs block_length, boundary_column or a metadata block_length".into(),
            )),
        }
    }

    /// Region definitions from the config take precedence over the sidecar.
    pub fn regions(&self, configured: Option<&BTreeMap<String, Vec<String>>>) -> Result<Option<RegionMap>> {
        let regions = match configured {
            Some(r) => Some(r.clone()),
            None => self.metadata()?.regions,
        };
        regions.map(RegionMap::new).transpose()
    }

    /// Load the dataset, grouped either by counts or by a region pair.
    pub fn load(&self, regions: Option<(&RegionMap, (&str, &str))>) -> Result<MtsDataset> {
        let meta = self.metadata()?;
        let groups = match regions {
            Some((map, (a, b))) => ChannelGroups::Regions {
                map: map.clone(),
                pair: (a.to_string(), b.to_string()),
            },
            None => match (self.p, self.q) {
                (Some(p), Some(q)) => ChannelGroups::Counts { p, q },
                _ => return Err(Error::Config("CSV input without regions needs p and q".into())),
            },
        };
        let opts = CsvOptions {
            layout: self.layout(&meta)?,
            groups,
            sample_rate_hz: self.sample_rate_hz,
            label_column: self.label_column.clone(),
            labels: meta.labels.clone(),
            strict: self.strict,
        };
        let (ds, rep) = load_csv(&self.path, &opts)?;
        log::info!(
            "read {} rows from {} into {} blocks",
            rep.rows_read,
            self.path.display(),
            ds.len()
        );
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Simulation(SimConfig),
    Csv(CsvInput),
}

fn default_bands() -> Vec<String> {
    vec![RAW_BAND.to_string()]
}
fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_lag() -> usize {
    5
}
fn default_c_grid() -> Vec<usize> {
    DEFAULT_C_GRID.to_vec()
}
fn default_m_grid() -> Vec<f64> {
    DEFAULT_M_GRID.to_vec()
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSource,
    #[serde(default = "default_bands")]
    pub bands: Vec<String>,
    #[serde(default)]
    pub band_table: BandTable,
    #[serde(default = "default_order")]
    pub filter_order: usize,
    #[serde(default)]
    pub regions: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
    #[serde(default = "default_lag")]
    pub max_lag: usize,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<usize>,
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Assignment rule for the report; threshold for simulations and
    /// max-membership for recordings when absent.
    #[serde(default)]
    pub rule: Option<AssignRule>,
    #[serde(default)]
    pub dependence: DependenceEstimator,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub skip_degenerate: bool,
}

impl PipelineConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot open config {}: {e}", path.as_ref().display())))?;
        serde_json::from_reader(f).map_err(|e| Error::Config(format!("invalid config {}: {e}", path.as_ref().display())))
    }

    fn sample_rate_hz(&self) -> f64 {
        match &self.input {
            InputSource::Simulation(s) => s.sample_rate_hz,
            InputSource::Csv(c) => c.sample_rate_hz,
        }
    }

    pub fn rule(&self) -> AssignRule {
        self.rule.unwrap_or(match self.input {
            InputSource::Simulation(_) => AssignRule::Threshold,
            InputSource::Csv(_) => AssignRule::MaxMembership,
        })
    }

    /// Resolved band specs in configured order; `None` is the raw band.
    pub fn band_specs(&self) -> Result<Vec<Option<BandSpec>>> {
        self.bands
            .iter()
            .map(|b| {
                if b == RAW_BAND {
                    Ok(None)
                } else {
                    self.band_table.band(b, self.sample_rate_hz()).map(Some)
                }
            })
            .collect()
    }

    fn region_map(&self) -> Result<Option<RegionMap>> {
        match &self.input {
            InputSource::Csv(c) => c.regions(self.regions.as_ref()),
            InputSource::Simulation(_) => self.regions.clone().map(RegionMap::new).transpose(),
        }
    }

    /// Check everything that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Error::Config(m);
        if self.bands.is_empty() {
            return Err(cfg("no bands configured".into()));
        }
        if self.c_grid.is_empty() || self.m_grid.is_empty() {
            return Err(cfg("C and m grids must be non-empty".into()));
        }
        if let Some(&c) = self.c_grid.iter().find(|&&c| c < 2) {
            return Err(cfg(format!("C grid value {c} is below 2")));
        }
        if let Some(&m) = self.m_grid.iter().find(|&&m| !(m > 1.0)) {
            return Err(cfg(format!("m grid value {m} must exceed 1")));
        }
        let max_c = *self.c_grid.iter().max().expect("non-empty");
        if !(self.threshold > 0.5 && self.threshold < 1.0) {
            return Err(cfg(format!("threshold {} must lie in (1/2, 1)", self.threshold)));
        }
        if self.rule() == AssignRule::Threshold && self.threshold <= 1.0 / max_c as f64 {
            return Err(cfg(format!("threshold {} must exceed 1/{max_c}", self.threshold)));
        }
        for spec in self.band_specs()?.into_iter().flatten() {
            design_bandpass(&spec, self.filter_order).map_err(|e| cfg(format!("band '{}': {e}", spec.name)))?;
        }
        match &self.input {
            InputSource::Simulation(s) => s.validate()?,
            InputSource::Csv(c) => {
                if !c.path.is_file() {
                    return Err(cfg(format!("input file {} does not exist", c.path.display())));
                }
                if let Some(m) = &c.metadata {
                    if !m.is_file() {
                        return Err(cfg(format!("metadata file {} does not exist", m.display())));
                    }
                }
            }
        }
        let map = self.region_map()?;
        match (&map, self.pairs.is_empty()) {
            (Some(_), true) => return Err(cfg("regions are defined but no pairs are listed".into())),
            (None, false) => return Err(cfg("pairs are listed but no regions are defined".into())),
            _ => {}
        }
        if let Some(map) = &map {
            for (a, b) in &self.pairs {
                for r in [a, b] {
                    if !map.regions.contains_key(r) {
                        return Err(cfg(format!("pair ({a}, {b}) names unknown region '{r}'")));
                    }
                }
                if a == b {
                    return Err(cfg(format!("pair ({a}, {b}) repeats a region")));
                }
            }
        }
        Ok(())
    }
}

/// One row of the run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub band: String,
    pub pair: String,
    pub n_blocks: usize,
    pub n_excluded: usize,
    #[serde(rename = "C")]
    pub c: Option<usize>,
    pub m: Option<f64>,
    #[serde(rename = "FSI")]
    pub fsi: Option<f64>,
    #[serde(rename = "RI")]
    pub rand_index: Option<f64>,
    pub accuracy: Option<f64>,
    pub fuzzy_pct: Option<f64>,
    pub status: String,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub rows: Vec<SummaryRow>,
    pub errors: Vec<Error>,
}

#[derive(Serialize)]
struct ClusterConnectivity {
    cluster: usize,
    size: usize,
    u_abs: BTreeMap<String, f64>,
    v_abs: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct ConnectivitySummary<'a> {
    band: &'a str,
    pair: &'a str,
    x_channels: &'a [String],
    y_channels: &'a [String],
    clusters: Vec<ClusterConnectivity>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn pair_name(pair: Option<&(String, String)>) -> String {
    pair.map_or_else(|| "X-Y".to_string(), |(a, b)| format!("{a}-{b}"))
}

struct Job<'a> {
    band: Option<&'a BandSpec>,
    band_name: &'a str,
    pair: Option<&'a (String, String)>,
}

struct SimTruthRef<'a> {
    kinds: &'a [TruthKind],
}

fn write_connectivity(
    path: &Path,
    job: &Job<'_>,
    dataset: &MtsDataset,
    partition: &FuzzyPartition,
) -> Result<()> {
    let names = dataset.channel_names_or_default();
    let p = dataset.p();
    let mut sizes = vec![0usize; partition.n_clusters()];
    for row in &partition.memberships {
        let c = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
            .0;
        sizes[c] += 1;
    }
    let clusters = partition
        .centers
        .iter()
        .enumerate()
        .map(|(c, center)| ClusterConnectivity {
            cluster: c + 1,
            size: sizes[c],
            u_abs: names[..p].iter().cloned().zip(center[..p].iter().copied()).collect(),
            v_abs: names[p..].iter().cloned().zip(center[p..].iter().copied()).collect(),
        })
        .collect();
    let pair = pair_name(job.pair);
    let doc = ConnectivitySummary {
        band: job.band_name,
        pair: &pair,
        x_channels: &names[..p],
        y_channels: &names[p..],
        clusters,
    };
    serde_json::to_writer_pretty(create(path)?, &doc)?;
    Ok(())
}

fn run_job(
    cfg: &PipelineConfig,
    job: &Job<'_>,
    dataset: &MtsDataset,
    truth: Option<&SimTruthRef<'_>>,
    dir: &Path,
) -> Result<SummaryRow> {
    fs::create_dir_all(dir)?;
    let filtered;
    let data = match job.band {
        Some(spec) => {
            let design = design_bandpass(spec, cfg.filter_order)?;
            filtered = filter_dataset(dataset, &design)?;
            &filtered
        }
        None => dataset,
    };
    let opts = ExtractOptions {
        max_lag: cfg.max_lag,
        estimator: cfg.dependence,
        skip_degenerate: cfg.skip_degenerate,
    };
    let features: FeatureSet = extract_features(data, &opts)?;
    write_features_csv(&features, job.band_name, create(&dir.join("features.csv"))?)?;
    if !features.excluded.is_empty() {
        serde_json::to_writer_pretty(create(&dir.join("excluded.json"))?, &features.excluded)?;
    }
    let vectors = features.vectors();
    let grid = grid_search(&vectors, &cfg.c_grid, &cfg.m_grid, cfg.seed)?;
    write_grid_json(&grid.report, create(&dir.join("fsi_grid.json"))?)?;
    write_memberships_csv(&grid.partition, &features.block_ids, create(&dir.join("memberships.csv"))?)?;
    write_centers_json(&grid.partition, create(&dir.join("centers.json"))?)?;

    let labels: Option<Vec<String>> = {
        let l = data.labels();
        l.iter().all(Option::is_some).then(|| l.iter().map(|v| v.expect("checked").to_string()).collect())
    };
    let report = evaluate(
        &grid.partition.memberships,
        &features.block_ids,
        cfg.rule(),
        cfg.threshold,
        truth.map(|t| t.kinds),
        labels.as_deref(),
    )?;
    write_evaluation_json(&report, create(&dir.join("evaluation.json"))?)?;
    write_connectivity(&dir.join("connectivity_summary.json"), job, data, &grid.partition)?;

    Ok(SummaryRow {
        band: job.band_name.to_string(),
        pair: pair_name(job.pair),
        n_blocks: features.len(),
        n_excluded: features.excluded.len(),
        c: Some(grid.report.selected.c),
        m: Some(grid.report.selected.m),
        fsi: Some(grid.silhouettes.fsi),
        rand_index: report.rand_index,
        accuracy: report.accuracy,
        fuzzy_pct: Some(100.0 * report.fuzzy_fraction),
        status: "ok".into(),
    })
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["band", "pair", "n_blocks", "n_excluded", "C", "m", "FSI", "RI", "accuracy", "fuzzy_pct", "status"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows {
        w.write_record([
            r.band.clone(),
            r.pair.clone(),
            r.n_blocks.to_string(),
            r.n_excluded.to_string(),
            r.c.map_or_else(String::new, |c| c.to_string()),
            opt(r.m),
            opt(r.fsi),
            opt(r.rand_index),
            opt(r.accuracy),
            opt(r.fuzzy_pct),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run every (band, pair) job. A failing job is recorded in the summary and
/// the remaining jobs still run; the errors are returned alongside.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let bands = cfg.band_specs()?;
    let map = cfg.region_map()?;
    fs::create_dir_all(&cfg.output_dir)?;
    serde_json::to_writer_pretty(create(&cfg.output_dir.join("config.json"))?, cfg)?;

    let (base, sim_kinds): (Option<MtsDataset>, Option<Vec<TruthKind>>) = match &cfg.input {
        InputSource::Simulation(s) => {
            let sim = gen_dataset(s)?;
            crate::simgen::write_truth_json(&sim.truth(s), create(&cfg.output_dir.join("truth.json"))?)?;
            (Some(sim.dataset), Some(sim.kinds))
        }
        InputSource::Csv(c) if map.is_none() => (Some(c.load(None)?), None),
        InputSource::Csv(_) => (None, None),
    };
    let truth = sim_kinds.as_deref().map(|kinds| SimTruthRef { kinds });

    let pairs: Vec<Option<&(String, String)>> = if map.is_some() {
        cfg.pairs.iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for pair in pairs {
        let pair_label = pair_name(pair);
        let loaded = match (pair, &map, &cfg.input, &base) {
            (None, _, _, Some(ds)) => Ok(ds.clone()),
            (Some((a, b)), Some(m), InputSource::Csv(c), _) => c.load(Some((m, (a, b)))),
            (Some((a, b)), Some(m), InputSource::Simulation(_), Some(ds)) => crate::mts::select_regions(ds, m, (a, b)),
            _ => Err(Error::Config("inconsistent region configuration".into())),
        };
        let dataset = match loaded {
            Ok(d) => d,
            Err(e) => {
                log::error!("pair {pair_label}: {e}");
                for name in &cfg.bands {
                    rows.push(failed_row(name, &pair_label, &e));
                }
                errors.push(e);
                continue;
            }
        };
        for (name, spec) in cfg.bands.iter().zip(&bands) {
            let job = Job {
                band: spec.as_ref(),
                band_name: name,
                pair,
            };
            let dir = cfg.output_dir.join(name).join(&pair_label);
            log::info!("running band {name}, pair {pair_label}");
            match run_job(cfg, &job, &dataset, truth.as_ref(), &dir) {
                Ok(row) => rows.push(row),
                Err(e) => {
                    let e = Error::Context {
                        context: format!("band {name}, pair {pair_label}"),
                        source: Box::new(e),
                    };
                    log::error!("{e}");
                    rows.push(failed_row(name, &pair_label, &e));
                    errors.push(e);
                }
            }
        }
    }
    write_summary(&cfg.output_dir.join("summary.csv"), &rows)?;
    Ok(PipelineOutcome { rows, errors })
}

fn failed_row(band: &str, pair: &str, e: &Error) -> SummaryRow {
    SummaryRow {
        band: band.to_string(),
        pair: pair.to_string(),
        n_blocks: 0,
        n_excluded: 0,
        c: None,
        m: None,
        fsi: None,
        rand_index: None,
        accuracy: None,
        fuzzy_pct: None,
        status: format!("error: {e}"),
    }
}

/// Settings of a replicated simulation study.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceOptions {
    pub example: u8,
    /// Fraction of the full 300-block size.
    pub scale: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub m_grid: Vec<f64>,
    pub estimators: Vec<DependenceEstimator>,
    pub max_lag: usize,
    pub threshold: f64,
    /// Optional band filter; the simulation is analysed unfiltered otherwise.
    pub band: Option<BandSpec>,
    pub filter_order: usize,
}

impl ReproduceOptions {
    pub fn new(example: u8, scale: f64, n_reps: usize, seed: u64) -> Self {
        Self {
            example,
            scale,
            n_reps,
            seed,
            m_grid: DEFAULT_M_GRID.to_vec(),
            estimators: vec![DependenceEstimator::Kendall, DependenceEstimator::Pearson],
            max_lag: 5,
            threshold: DEFAULT_THRESHOLD,
            band: None,
            filter_order: DEFAULT_ORDER,
        }
    }

    pub fn sim_config(&self, rep: usize) -> Result<SimConfig> {
        Ok(SimConfig {
            n_blocks: (300.0 * self.scale).round() as usize,
            seed: derive_seed(self.seed, &[self.example as u64, rep as u64]),
            ..SimConfig::example(self.example)?
        })
    }
}

/// Scores of one replicate for one estimator and one `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepScore {
    pub accuracy: f64,
    pub rand_index_pure: f64,
    pub rand_index_three_way: f64,
    pub switching_flag_rate: f64,
}

/// Per-replicate results, indexed `[estimator][m][rep]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceResult {
    pub options: ReproduceOptions,
    pub scores: Vec<Vec<Vec<RepScore>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub estimator: String,
    pub m: f64,
    pub n_reps: usize,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub mean_ri: f64,
    pub sd_ri: f64,
    pub mean_ri_three_way: f64,
    pub sd_ri_three_way: f64,
    pub mean_switching_flag_rate: f64,
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let vals: Vec<f64> = v.filter(|x| x.is_finite()).collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = if vals.len() > 1 {
        (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl ReproduceResult {
    pub fn curves(&self) -> Vec<CurvePoint> {
        let mut out = Vec::new();
        for (e, est) in self.options.estimators.iter().enumerate() {
            for (k, &m) in self.options.m_grid.iter().enumerate() {
                let reps = &self.scores[e][k];
                let (ma, sa) = mean_sd(reps.iter().map(|r| r.accuracy));
                let (mr, sr) = mean_sd(reps.iter().map(|r| r.rand_index_pure));
                let (m3, s3) = mean_sd(reps.iter().map(|r| r.rand_index_three_way));
                let (mf, _) = mean_sd(reps.iter().map(|r| r.switching_flag_rate));
                out.push(CurvePoint {
                    estimator: est.name().to_string(),
                    m,
                    n_reps: reps.len(),
                    mean_accuracy: ma,
                    sd_accuracy: sa,
                    mean_ri: mr,
                    sd_ri: sr,
                    mean_ri_three_way: m3,
                    sd_ri_three_way: s3,
                    mean_switching_flag_rate: mf,
                });
            }
        }
        out
    }

    pub fn mean_accuracy(&self, estimator: DependenceEstimator, m_index: usize) -> f64 {
        let e = self
            .options
            .estimators
            .iter()
            .position(|&x| x == estimator)
            .expect("estimator was run");
        mean_sd(self.scores[e][m_index].iter().map(|r| r.accuracy)).0
    }
}

/// Fit `C = 2` at every `m` for every replicate and estimator. Replicates
/// run in parallel; results are collected in replicate order.
pub fn reproduce_sim(opts: &ReproduceOptions) -> Result<ReproduceResult> {
    if !(opts.scale > 0.0 && opts.scale <= 1.0) {
        return Err(Error::Config(format!("scale {} must lie in (0, 1]", opts.scale)));
    }
    if opts.n_reps == 0 || opts.m_grid.is_empty() || opts.estimators.is_empty() {
        return Err(Error::Config("reps, m grid and estimators must be non-empty".into()));
    }
    let design = opts.band.as_ref().map(|b| design_bandpass(b, opts.filter_order)).transpose()?;
    let per_rep: Vec<Vec<Vec<RepScore>>> = (0..opts.n_reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<RepScore>>> {
            let cfg = opts.sim_config(rep)?;
            let sim = gen_dataset(&cfg)?;
            let data = match &design {
                Some(d) => filter_dataset(&sim.dataset, d)?,
                None => sim.dataset.clone(),
            };
            let fit_seed = derive_seed(cfg.seed, &[2]);
            opts.estimators
                .iter()
                .map(|&estimator| {
                    let fs = extract_features(
                        &data,
                        &ExtractOptions {
                            max_lag: opts.max_lag,
                            estimator,
                            skip_degenerate: false,
                        },
                    )?;
                    let vectors = fs.vectors();
                    opts.m_grid
                        .iter()
                        .map(|&m| {
                            let part = fcm_fit(&vectors, &FcmParams::new(2, m, fit_seed))?;
                            let s = simulation_accuracy(&part.memberships, &sim.kinds, opts.threshold)?;
                            Ok(RepScore {
                                accuracy: s.accuracy,
                                rand_index_pure: s.rand_index_pure,
                                rand_index_three_way: s.rand_index_three_way,
                                switching_flag_rate: s.switching_flag_rate,
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let scores = (0..opts.estimators.len())
        .map(|e| {
            (0..opts.m_grid.len())
                .map(|k| per_rep.iter().map(|r| r[e][k]).collect())
                .collect()
        })
        .collect();
    Ok(ReproduceResult {
        options: opts.clone(),
        scores,
    })
}

pub fn write_curves_csv<W: Write>(curves: &[CurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in curves {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
