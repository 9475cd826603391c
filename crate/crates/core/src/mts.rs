//! Multivariate time-series blocks, datasets, region maps and CSV ingestion.
//!
//! A block holds `p + q` channels of `T` samples each. The first `p` channels
//! form the X group and the remaining `q` the Y group. Storage is
//! channel-major so that per-channel filtering and lagged rank statistics
//! work on contiguous slices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::BandSpec;

/// One locally-stationary block.
#[derive(Debug, Clone, PartialEq)]
pub struct MtsBlock {
    channels: Vec<Vec<f64>>,
    p: usize,
    q: usize,
    channel_names: Option<Vec<String>>,
    sample_rate_hz: f64,
    label: Option<i64>,
}

impl MtsBlock {
    /// Build a block from channel-major data (`channels[j][t]`).
    pub fn new(channels: Vec<Vec<f64>>, p: usize, q: usize, sample_rate_hz: f64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::invalid(format!("need p >= 1 and q >= 1, got p={p}, q={q}")));
        }
        if channels.len() != p + q {
            return Err(Error::invalid(format!(
                "expected {} channels (p={p}, q={q}), got {}",
                p + q,
                channels.len()
            )));
        }
        let t = channels[0].len();
        if t < 2 {
            return Err(Error::invalid(format!("block length must be >= 2, got {t}")));
        }
        if let Some(j) = channels.iter().position(|c| c.len() != t) {
            return Err(Error::invalid(format!(
                "channel {j} has {} samples, expected {t}",
                channels[j].len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        for (j, ch) in channels.iter().enumerate() {
            if let Some(t) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite value at channel {j}, sample {t}")));
            }
        }
        Ok(Self {
            channels,
            p,
            q,
            channel_names: None,
            sample_rate_hz,
            label: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p + self.q {
            return Err(Error::invalid(format!(
                "{} channel names for {} channels",
                names.len(),
                self.p + self.q
            )));
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn with_label(mut self, label: Option<i64>) -> Self {
        self.label = label;
        self
    }

    /// Same metadata, new samples. Used by filters and noise injectors,
    /// which preserve shape.
    pub(crate) fn with_channels(&self, channels: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(channels.len(), self.channels.len());
        Self {
            channels,
            ..self.clone()
        }
    }

    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_channels(&self) -> usize {
        self.p + self.q
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        &self.channels[j]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }
}

/// An ordered collection of blocks sharing channel layout and sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MtsDataset {
    blocks: Vec<MtsBlock>,
    band: Option<BandSpec>,
}

impl MtsDataset {
    /// Validates shared `p`, `q`, sample rate and channel names. With
    /// `strict`, all blocks must also have equal length.
    pub fn new(blocks: Vec<MtsBlock>, strict: bool) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::invalid("dataset has no blocks"));
        };
        for (b, blk) in blocks.iter().enumerate().skip(1) {
            if blk.p != first.p || blk.q != first.q {
                return Err(Error::invalid(format!(
                    "block {b} has (p, q) = ({}, {}), expected ({}, {})",
                    blk.p, blk.q, first.p, first.q
                )));
            }
            if blk.sample_rate_hz != first.sample_rate_hz {
                return Err(Error::invalid(format!("block {b} has a different sample rate")));
            }
            if blk.channel_names != first.channel_names {
                return Err(Error::invalid(format!("block {b} has different channel names")));
            }
            if strict && blk.len() != first.len() {
                return Err(Error::invalid(format!(
                    "block {b} has length {}, expected {} (strict mode)",
                    blk.len(),
                    first.len()
                )));
            }
        }
        Ok(Self { blocks, band: None })
    }

    pub(crate) fn with_band(mut self, band: Option<BandSpec>) -> Self {
        self.band = band;
        self
    }

    pub fn blocks(&self) -> &[MtsBlock] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<MtsBlock> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn band(&self) -> Option<&BandSpec> {
        self.band.as_ref()
    }

    pub fn p(&self) -> usize {
        self.blocks[0].p
    }

    pub fn q(&self) -> usize {
        self.blocks[0].q
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.blocks[0].sample_rate_hz
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.blocks[0].channel_names()
    }

    /// Channel names, or `ch1..chN` when none were supplied.
    pub fn channel_names_or_default(&self) -> Vec<String> {
        match self.channel_names() {
            Some(n) => n.to_vec(),
            None => (1..=self.p() + self.q()).map(|i| format!("ch{i}")).collect(),
        }
    }

    pub fn labels(&self) -> Vec<Option<i64>> {
        self.blocks.iter().map(|b| b.label).collect()
    }

    /// Total sample count and channel count, i.e. the shape of the stacked
    /// `BT x (p+q)` matrix.
    pub fn total_shape(&self) -> (usize, usize) {
        (self.blocks.iter().map(MtsBlock::len).sum(), self.p() + self.q())
    }
}

/// Named channel groups plus the pairs to analyze.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub regions: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
}

impl RegionMap {
    pub fn new(regions: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let map = Self {
            regions,
            pairs: Vec::new(),
        };
        map.check_disjoint()?;
        Ok(map)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (name, chans) in &self.regions {
            for c in chans {
                if let Some(prev) = owner.insert(c.as_str(), name.as_str()) {
                    if prev != name {
                        return Err(Error::invalid(format!(
                            "channel '{c}' belongs to both '{prev}' and '{name}'"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Region-name pair to X/Y channel index lists into `names`.
    pub fn resolve_pair(&self, names: &[String], pair: (&str, &str)) -> Result<(Vec<usize>, Vec<usize>)> {
        let (a, b) = pair;
        if a == b {
            return Err(Error::invalid(format!("region pair ({a}, {b}): regions must differ")));
        }
        self.check_disjoint()?;
        let resolve = |region: &str| -> Result<Vec<usize>> {
            let chans = self
                .regions
                .get(region)
                .ok_or_else(|| Error::invalid(format!("unknown region '{region}'")))?;
            if chans.is_empty() {
                return Err(Error::invalid(format!("region '{region}' is empty")));
            }
            chans
                .iter()
                .map(|c| {
                    names
                        .iter()
                        .position(|n| n == c)
                        .ok_or_else(|| Error::invalid(format!("channel '{c}' of region '{region}' not in dataset")))
                })
                .collect()
        };
        let xs = resolve(a)?;
        let ys = resolve(b)?;
        let set: HashSet<usize> = xs.iter().copied().collect();
        if ys.iter().any(|j| set.contains(j)) {
            return Err(Error::invalid(format!("regions '{a}' and '{b}' overlap")));
        }
        Ok((xs, ys))
    }
}

/// Regroup every block so X = region `pair.0` and Y = region `pair.1`.
///
/// Channels outside both regions are dropped. Block order, labels and
/// sample rate are preserved.
pub fn select_regions(dataset: &MtsDataset, map: &RegionMap, pair: (&str, &str)) -> Result<MtsDataset> {
    let names = dataset
        .channel_names()
        .ok_or_else(|| Error::invalid("select_regions needs channel names"))?
        .to_vec();
    let (xs, ys) = map.resolve_pair(&names, pair)?;
    let order: Vec<usize> = xs.iter().chain(ys.iter()).copied().collect();
    let new_names: Vec<String> = order.iter().map(|&j| names[j].clone()).collect();
    let blocks = dataset
        .blocks()
        .iter()
        .map(|blk| {
            let chans = order.iter().map(|&j| blk.channels[j].clone()).collect();
            MtsBlock::new(chans, xs.len(), ys.len(), blk.sample_rate_hz)
                .and_then(|b| b.with_names(new_names.clone()))
                .map(|b| b.with_label(blk.label))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MtsDataset::new(blocks, false)?.with_band(dataset.band.clone()))
}

/// How rows of a CSV file are grouped into blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvLayout {
    /// Consecutive runs of `T` rows form a block; the remainder is dropped.
    BlockLength(usize),
    /// A non-signal column whose value changes at block boundaries.
    BoundaryColumn(String),
}

/// How channels are split into the X and Y groups.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelGroups {
    /// First `p` signal columns are X, next `q` are Y; extra columns are an error.
    Counts { p: usize, q: usize },
    /// Channels named by a region pair.
    Regions { map: RegionMap, pair: (String, String) },
}

/// Sidecar metadata accompanying a CSV recording.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<BTreeMap<String, Vec<String>>>,
}

impl DatasetMetadata {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// CSV ingestion options.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub layout: CsvLayout,
    pub groups: ChannelGroups,
    pub sample_rate_hz: f64,
    /// Optional integer label column, read from the first row of each block.
    pub label_column: Option<String>,
    /// Per-block labels from sidecar metadata; overrides `label_column`.
    pub labels: Option<Vec<i64>>,
    /// Require equal block lengths.
    pub strict: bool,
}

/// What ingestion did besides producing the dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped_trailing_rows: usize,
}

/// Load a dataset from a file. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<(MtsDataset, IngestReport)> {
    let f = std::fs::File::open(path.as_ref())?;
    read_csv(f, opts)
}

/// Parse a UTF-8, comma-delimited CSV with one header row naming channels.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<(MtsDataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let boundary_col = match &opts.layout {
        CsvLayout::BoundaryColumn(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("boundary column '{name}' not in header")))?,
        ),
        CsvLayout::BlockLength(t) => {
            if *t < 2 {
                return Err(Error::invalid(format!("block length must be >= 2, got {t}")));
            }
            None
        }
    };
    let label_col = match &opts.label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("label column '{name}' not in header")))?,
        ),
        None => None,
    };
    let signal_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != boundary_col && Some(c) != label_col)
        .collect();

    // Channel selection and order.
    let (picked, p, q): (Vec<usize>, usize, usize) = match &opts.groups {
        ChannelGroups::Counts { p, q } => {
            if signal_cols.len() != p + q {
                return Err(Error::invalid(format!(
                    "{} signal columns but p + q = {}",
                    signal_cols.len(),
                    p + q
                )));
            }
            (signal_cols.clone(), *p, *q)
        }
        ChannelGroups::Regions { map, pair } => {
            let names: Vec<String> = signal_cols.iter().map(|&c| header[c].clone()).collect();
            let (xs, ys) = map.resolve_pair(&names, (pair.0.as_str(), pair.1.as_str()))?;
            let cols = xs.iter().chain(ys.iter()).map(|&i| signal_cols[i]).collect();
            (cols, xs.len(), ys.len())
        }
    };
    let names: Vec<String> = picked.iter().map(|&c| header[c].clone()).collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); picked.len()];
    let mut boundaries: Vec<String> = Vec::new();
    let mut row_labels: Vec<Option<i64>> = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Csv {
                row,
                column: String::new(),
                message: format!("ragged row: {} fields, header has {}", rec.len(), header.len()),
            });
        }
        for (k, &c) in picked.iter().enumerate() {
            let cell = rec[c].trim();
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row,
                column: header[c].clone(),
                message: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row,
                    column: header[c].clone(),
                    message: format!("non-finite value '{cell}' rejected"),
                });
            }
            columns[k].push(v);
        }
        if let Some(bc) = boundary_col {
            boundaries.push(rec[bc].trim().to_string());
        }
        if let Some(lc) = label_col {
            let cell = rec[lc].trim();
            let lab = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<i64>().map_err(|_| Error::Csv {
                    row,
                    column: header[lc].clone(),
                    message: format!("non-integer label '{cell}'"),
                })?)
            };
            row_labels.push(lab);
        }
        rows += 1;
    }

    // Block row ranges.
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut dropped = 0usize;
    match &opts.layout {
        CsvLayout::BlockLength(t) => {
            let n = rows / t;
            dropped = rows - n * t;
            ranges.extend((0..n).map(|b| (b * t, (b + 1) * t)));
            if dropped > 0 {
                log::warn!("dropping {dropped} trailing rows that do not fill a block of {t}");
            }
        }
        CsvLayout::BoundaryColumn(_) => {
            let mut start = 0;
            for r in 1..=rows {
                if r == rows || boundaries[r] != boundaries[start] {
                    ranges.push((start, r));
                    start = r;
                }
            }
        }
    }
    if ranges.is_empty() {
        return Err(Error::invalid(format!("no complete block in {rows} rows")));
    }
    if let Some(labels) = &opts.labels {
        if labels.len() != ranges.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} blocks",
                labels.len(),
                ranges.len()
            )));
        }
    }

    let blocks = ranges
        .iter()
        .enumerate()
        .map(|(b, &(s, e))| {
            let chans = columns.iter().map(|c| c[s..e].to_vec()).collect();
            let label = match &opts.labels {
                Some(l) => Some(l[b]),
                None => row_labels.get(s).copied().flatten(),
            };
            MtsBlock::new(chans, p, q, opts.sample_rate_hz)
                .and_then(|blk| blk.with_names(names.clone()))
                .map(|blk| blk.with_label(label))
                .map_err(|e| e.in_block(b))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((
        MtsDataset::new(blocks, opts.strict)?,
        IngestReport {
            rows_read: rows,
            dropped_trailing_rows: dropped,
        },
    ))
}

/// Write the dataset in the ingestion dialect: one header row of channel
/// names, then one row per sample with blocks stacked in order.
///
/// Values use Rust's shortest round-trip decimal formatting, so reading the
/// file back reproduces every finite value bit for bit. With
/// `block_column`, a leading `block` column carries the block index.
pub fn write_csv<W: Write>(dataset: &MtsDataset, writer: W, block_column: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header = Vec::new();
    if block_column {
        header.push("block".to_string());
    }
    header.extend(dataset.channel_names_or_default());
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for (b, blk) in dataset.blocks().iter().enumerate() {
        for t in 0..blk.len() {
            rec.clear();
            if block_column {
                rec.push(b.to_string());
            }
            rec.extend(blk.channels.iter().map(|c| format!("{}", c[t])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
