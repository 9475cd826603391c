//! Lagged rank-dependence matrices built from Kendall's tau.
//!
//! For a filtered block `Z` with `p + q` channels, the entry `(j, k)` of the
//! lag-`l` matrix is `sin(pi/2 * tau)` where `tau` is Kendall's tau-a between
//! `Z_j(t)` and `Z_k(t + l)` over the `T - l` aligned samples. Negative lags
//! are transposes of positive ones.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DMatrixView};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mts::MtsBlock;

/// Exact pair counts behind a tau-a estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallCounts {
    /// `C(n, 2)`.
    pub pairs: u64,
    /// Concordant minus discordant pairs; tied pairs contribute zero.
    pub concordance_excess: i64,
    /// One of the inputs is constant, so every pair is tied.
    pub degenerate: bool,
}

impl KendallCounts {
    pub fn tau(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.concordance_excess as f64 / self.pairs as f64
        }
    }
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    // Inputs are checked finite; -0.0 and 0.0 compare equal, i.e. tie.
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn tied_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * (run.saturating_sub(1)) / 2
}

/// Bottom-up merge sort of `v`, returning the number of strict inversions.
fn sort_count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    buf.clear();
    buf.resize(n, 0.0);
    let mut swaps = 0u64;
    let mut width = 1;
    let mut src_is_v = true;
    while width < n {
        {
            let (src, dst): (&[f64], &mut [f64]) = if src_is_v {
                (&*v, buf.as_mut_slice())
            } else {
                (buf.as_slice(), &mut *v)
            };
            let mut lo = 0;
            while lo < n {
                let mid = (lo + width).min(n);
                let hi = (lo + 2 * width).min(n);
                let (mut i, mut j, mut k) = (lo, mid, lo);
                while i < mid && j < hi {
                    if src[j] < src[i] {
                        swaps += (mid - i) as u64;
                        dst[k] = src[j];
                        j += 1;
                    } else {
                        dst[k] = src[i];
                        i += 1;
                    }
                    k += 1;
                }
                dst[k..k + (mid - i)].copy_from_slice(&src[i..mid]);
                k += mid - i;
                dst[k..k + (hi - j)].copy_from_slice(&src[j..hi]);
                lo = hi;
            }
        }
        src_is_v = !src_is_v;
        width *= 2;
    }
    if !src_is_v {
        v.copy_from_slice(buf);
    }
    swaps
}

fn check_series(x: &[f64], name: &str) -> Result<()> {
    if let Some(t) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} has a non-finite value at index {t}")));
    }
    Ok(())
}

/// A series pre-sorted once so tau against many partners costs one merge
/// sort each.
#[derive(Debug, Clone)]
pub struct SortedSeries {
    order: Vec<usize>,
    /// Start offsets of runs of equal values in `order`, plus `n` at the end.
    runs: Vec<usize>,
    tied_pairs: u64,
}

impl SortedSeries {
    pub fn new(x: &[f64]) -> Result<Self> {
        check_series(x, "x")?;
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| cmp_f64(x[a], x[b]));
        let mut runs = vec![0];
        for i in 1..order.len() {
            if cmp_f64(x[order[i]], x[order[i - 1]]) != Ordering::Equal {
                runs.push(i);
            }
        }
        runs.push(order.len());
        let tied_pairs = runs
            .windows(2)
            .map(|w| {
                let t = (w[1] - w[0]) as u64;
                t * (t - 1) / 2
            })
            .sum();
        Ok(Self {
            order,
            runs,
            tied_pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn is_constant(&self) -> bool {
        self.runs.len() <= 2
    }

    /// Tau-a counts against `y`, which must have the same length.
    pub fn counts(&self, y: &[f64], buf: &mut Vec<f64>) -> Result<KendallCounts> {
        let n = self.order.len();
        if y.len() != n {
            return Err(Error::invalid(format!("series lengths differ: {n} vs {}", y.len())));
        }
        if n < 2 {
            return Err(Error::invalid(format!("need n >= 2, got {n}")));
        }
        check_series(y, "y")?;
        let pairs = (n as u64) * (n as u64 - 1) / 2;

        // y in (x, y) lexicographic order.
        let mut ys: Vec<f64> = self.order.iter().map(|&i| y[i]).collect();
        let mut joint_ties = 0u64;
        for w in self.runs.windows(2) {
            let run = &mut ys[w[0]..w[1]];
            if run.len() > 1 {
                run.sort_by(|a, b| cmp_f64(*a, *b));
                joint_ties += tied_pairs(run.iter().copied());
            }
        }
        let swaps = sort_count_inversions(&mut ys, buf);
        let y_ties = tied_pairs(ys.iter().copied());
        let y_constant = y_ties == pairs;
        let degenerate = self.is_constant() || y_constant;

        let excess = pairs as i64 - self.tied_pairs as i64 - y_ties as i64 + joint_ties as i64 - 2 * swaps as i64;
        Ok(KendallCounts {
            pairs,
            concordance_excess: if degenerate { 0 } else { excess },
            degenerate,
        })
    }
}

/// Exact tau-a pair counts in `O(n log n)`.
pub fn kendall_counts(x: &[f64], y: &[f64]) -> Result<KendallCounts> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {}", x.len())));
    }
    SortedSeries::new(x)?.counts(y, &mut Vec::new())
}

/// Kendall's tau-a. A constant input yields 0; use [`kendall_counts`] to see
/// the degeneracy flag.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    kendall_counts(x, y).map(|c| c.tau())
}

/// `sin(pi/2 * tau)`, mapping tau to the correlation scale under elliptical
/// models.
pub fn sine_transform(tau: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [-1, 1], got {tau}")));
    }
    Ok((FRAC_PI_2 * tau).sin())
}

/// Which dependence estimator fills the lagged matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DependenceEstimator {
    #[default]
    Kendall,
    Pearson,
}

impl DependenceEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            DependenceEstimator::Kendall => "kendall",
            DependenceEstimator::Pearson => "pearson",
        }
    }
}

impl std::str::FromStr for DependenceEstimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kendall" => Ok(Self::Kendall),
            "pearson" => Ok(Self::Pearson),
            _ => Err(Error::Config(format!("unknown dependence estimator '{s}'"))),
        }
    }
}

/// Matrices `P(l)` for `l = -L..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDependenceSet {
    max_lag: usize,
    p: usize,
    q: usize,
    matrices: Vec<DMatrix<f64>>,
    /// Channels found constant; their off-diagonal entries are 0.
    constant_channels: Vec<usize>,
}

impl LaggedDependenceSet {
    /// Assemble from matrices for lags `0..=L`. Negative lags are filled by
    /// transposition.
    pub fn from_nonnegative(p: usize, q: usize, nonneg: Vec<DMatrix<f64>>, constant_channels: Vec<usize>) -> Result<Self> {
        let Some(max_lag) = nonneg.len().checked_sub(1) else {
            return Err(Error::invalid("need at least the lag-0 matrix"));
        };
        let n = p + q;
        if nonneg.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::invalid(format!("matrices must be {n}x{n}")));
        }
        let mut matrices: Vec<DMatrix<f64>> = nonneg[1..].iter().rev().map(|m| m.transpose()).collect();
        matrices.extend(nonneg);
        Ok(Self {
            max_lag,
            p,
            q,
            matrices,
            constant_channels,
        })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let l = self.max_lag as i64;
        -l..=l
    }

    /// The full `(p+q) x (p+q)` matrix at `lag`.
    pub fn at(&self, lag: i64) -> &DMatrix<f64> {
        assert!(lag.unsigned_abs() as usize <= self.max_lag, "lag {lag} out of range");
        &self.matrices[(lag + self.max_lag as i64) as usize]
    }

    pub fn xx(&self, lag: i64) -> DMatrixView<'_, f64> {
        self.at(lag).view((0, 0), (self.p, self.p))
    }

    pub fn xy(&self, lag: i64) -> DMatrixView<'_, f64> {
        self.at(lag).view((0, self.p), (self.p, self.q))
    }

    pub fn yx(&self, lag: i64) -> DMatrixView<'_, f64> {
        self.at(lag).view((self.p, 0), (self.q, self.p))
    }

    pub fn yy(&self, lag: i64) -> DMatrixView<'_, f64> {
        self.at(lag).view((self.p, self.p), (self.q, self.q))
    }

    pub fn constant_channels(&self) -> &[usize] {
        &self.constant_channels
    }

    pub fn is_degenerate(&self) -> bool {
        !self.constant_channels.is_empty()
    }
}

pub(crate) fn check_lag_len(block: &MtsBlock, max_lag: usize) -> Result<()> {
    let t = block.len();
    if t < max_lag + 8 {
        return Err(Error::invalid(format!(
            "block of length {t} too short for max lag {max_lag} (need T - L >= 8)"
        )));
    }
    Ok(())
}

pub(crate) fn constant_channels(block: &MtsBlock) -> Vec<usize> {
    block
        .channels()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|&v| v == c[0]))
        .map(|(j, _)| j)
        .collect()
}

/// Sine-transformed Kendall dependence matrices for lags `-L..=L`.
pub fn dependence_set(block: &MtsBlock, max_lag: usize) -> Result<LaggedDependenceSet> {
    check_lag_len(block, max_lag)?;
    let n = block.n_channels();
    let t = block.len();
    let constant = constant_channels(block);
    if !constant.is_empty() {
        log::warn!("constant channels {constant:?}: their dependence entries are set to 0");
    }
    let mut buf = Vec::new();
    let mut nonneg = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let sorted = SortedSeries::new(&block.channel(j)[..t - lag])?;
            for k in 0..n {
                if lag == 0 && k <= j {
                    continue;
                }
                let c = sorted.counts(&block.channel(k)[lag..], &mut buf)?;
                m[(j, k)] = if c.degenerate { 0.0 } else { sine_transform(c.tau())? };
            }
        }
        if lag == 0 {
            m.fill_lower_triangle_with_upper_triangle();
            m.fill_diagonal(1.0);
        }
        nonneg.push(m);
    }
    LaggedDependenceSet::from_nonnegative(block.p(), block.q(), nonneg, constant)
}

/// Dispatch on the estimator.
pub fn dependence_set_with(block: &MtsBlock, max_lag: usize, estimator: DependenceEstimator) -> Result<LaggedDependenceSet> {
    match estimator {
        DependenceEstimator::Kendall => dependence_set(block, max_lag),
        DependenceEstimator::Pearson => crate::pearson::pearson_dependence_set(block, max_lag),
    }
}
