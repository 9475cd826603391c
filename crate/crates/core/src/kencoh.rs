//! Block-wise canonical coherence over lags and the clustering feature
//! vector `d = (|u|, |v|)`.
//!
//! For each lag, the cross block `P_XY(l)` is whitened by the symmetric
//! inverse square roots of the lag-0 within-group blocks. The leading
//! singular pair of the whitened matrix gives the canonical directions, and
//! the lag with the largest squared singular value wins.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kendall::{dependence_set_with, DependenceEstimator, LaggedDependenceSet};
use crate::linalg::{inv_sqrt_spd, repair_psd};
use crate::mts::MtsDataset;

/// Ridge added to a constraint matrix whose whitening failed.
pub const WHITENING_RIDGE: f64 = 1e-6;

/// Squared canonical values closer than this are treated as tied.
const LAG_TIE_TOL: f64 = 1e-12;

/// Below this leading singular value the cross block is treated as null.
const NULL_SIGMA: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalFeature {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Squared canonical value at `best_lag`.
    pub g_value: f64,
    pub best_lag: i64,
    /// `(|u_1|, ..., |u_p|, |v_1|, ..., |v_q|)`.
    pub d: Vec<f64>,
    /// A channel of the block was constant.
    pub degenerate: bool,
    /// A whitening ridge was needed for at least one constraint matrix.
    pub ridge_applied: bool,
}

/// The constraint matrices the solver actually uses: `P_XX(0)` and
/// `P_YY(0)` after PSD repair, with a ridge when whitening needed one.
#[derive(Debug, Clone)]
pub struct Constraints {
    pub xx: DMatrix<f64>,
    pub yy: DMatrix<f64>,
    pub whiten_x: DMatrix<f64>,
    pub whiten_y: DMatrix<f64>,
    pub ridge_applied: bool,
}

fn whiten(m: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, bool)> {
    let m = repair_psd(&m)?;
    match inv_sqrt_spd(&m) {
        Ok(w) => Ok((m, w, false)),
        Err(_) => {
            let n = m.nrows();
            let ridged = m + DMatrix::<f64>::identity(n, n) * WHITENING_RIDGE;
            let w = inv_sqrt_spd(&ridged)
                .map_err(|e| Error::numeric(format!("whitening failed after ridge: {e}")))?;
            Ok((ridged, w, true))
        }
    }
}

pub fn constraints(dep: &LaggedDependenceSet) -> Result<Constraints> {
    let (xx, whiten_x, rx) = whiten(dep.xx(0).into_owned())?;
    let (yy, whiten_y, ry) = whiten(dep.yy(0).into_owned())?;
    Ok(Constraints {
        xx,
        yy,
        whiten_x,
        whiten_y,
        ridge_applied: rx || ry,
    })
}

/// Lags in tie-break priority: 0, 1, -1, 2, -2, ...
fn lag_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|l| [l, -l]))
}

fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Solve `max_{u, v, l} (u' P_XY(l) v)^2` subject to `u' P_XX(0) u = 1` and
/// `v' P_YY(0) v = 1`.
///
/// Ties between lags go to the smaller `|l|`, then to `l >= 0`. The joint
/// sign of `(u, v)` is fixed so the largest-magnitude entry of `u` is
/// positive. When every cross block is zero, the first whitened basis
/// vectors are returned with `g_value = 0`.
pub fn solve_canonical(dep: &LaggedDependenceSet) -> Result<CanonicalFeature> {
    let cons = constraints(dep)?;
    let (p, q) = (dep.p(), dep.q());

    let mut best: Option<(f64, i64, DVector<f64>, DVector<f64>)> = None;
    for lag in lag_order(dep.max_lag()) {
        let k = &cons.whiten_x * dep.xy(lag) * &cons.whiten_y;
        let svd = k.svd(true, true);
        let (idx, sigma) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        if !sigma.is_finite() {
            return Err(Error::numeric(format!("non-finite singular value at lag {lag}")));
        }
        let g = sigma * sigma;
        if best.as_ref().is_some_and(|b| g <= b.0 + LAG_TIE_TOL) {
            continue;
        }
        let (a, b) = if sigma <= NULL_SIGMA {
            (DVector::from_fn(p, |i, _| (i == 0) as u8 as f64), DVector::from_fn(q, |i, _| (i == 0) as u8 as f64))
        } else {
            let u = svd.u.as_ref().expect("requested U");
            let vt = svd.v_t.as_ref().expect("requested V^T");
            (u.column(idx).into_owned(), vt.row(idx).transpose())
        };
        best = Some((g, lag, a, b));
    }
    let (_, best_lag, a, b) = best.expect("lag 0 always evaluated");

    let mut u = &cons.whiten_x * a;
    let mut v = &cons.whiten_y * b;
    // Remove round-off from the whitening so the constraints hold tightly.
    u /= quad(&cons.xx, &u).sqrt();
    v /= quad(&cons.yy, &v).sqrt();

    let lead = u
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc })
        .0;
    if u[lead] < 0.0 {
        u.neg_mut();
        v.neg_mut();
    }
    let g_value = u.dot(&(dep.xy(best_lag) * &v)).powi(2);
    let d = u.iter().chain(v.iter()).map(|x| x.abs()).collect();
    Ok(CanonicalFeature {
        u: u.iter().copied().collect(),
        v: v.iter().copied().collect(),
        g_value,
        best_lag,
        d,
        degenerate: dep.is_degenerate(),
        ridge_applied: cons.ridge_applied,
    })
}

/// Feature extraction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub max_lag: usize,
    pub estimator: DependenceEstimator,
    /// Drop blocks that are degenerate or fail to solve instead of aborting.
    pub skip_degenerate: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            max_lag: 5,
            estimator: DependenceEstimator::Kendall,
            skip_degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub block: usize,
    pub reason: String,
}

/// Features for the retained blocks of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<CanonicalFeature>,
    /// Dataset index of each retained block, aligned with `features`.
    pub block_ids: Vec<usize>,
    pub excluded: Vec<Exclusion>,
}

impl FeatureSet {
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.features.iter().map(|f| f.d.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Solve every block; order follows the dataset.
pub fn extract_features(dataset: &MtsDataset, opts: &ExtractOptions) -> Result<FeatureSet> {
    let results: Vec<Result<CanonicalFeature>> = dataset
        .blocks()
        .par_iter()
        .map(|blk| dependence_set_with(blk, opts.max_lag, opts.estimator).and_then(|dep| solve_canonical(&dep)))
        .collect();

    let mut out = FeatureSet {
        features: Vec::with_capacity(results.len()),
        block_ids: Vec::with_capacity(results.len()),
        excluded: Vec::new(),
    };
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) if opts.skip_degenerate && f.degenerate => out.excluded.push(Exclusion {
                block: b,
                reason: "constant channel".into(),
            }),
            Ok(f) => {
                out.features.push(f);
                out.block_ids.push(b);
            }
            Err(e) if opts.skip_degenerate => out.excluded.push(Exclusion {
                block: b,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.in_block(b)),
        }
    }
    for ex in &out.excluded {
        log::warn!("excluded block {}: {}", ex.block, ex.reason);
    }
    Ok(out)
}

/// Feature CSV: `block_id, band, best_lag, g_value, d_1..d_{p+q}`.
pub fn write_features_csv<W: Write>(set: &FeatureSet, band: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let width = set.features.first().map_or(0, |f| f.d.len());
    let mut header = vec!["block_id".to_string(), "band".into(), "best_lag".into(), "g_value".into()];
    header.extend((1..=width).map(|i| format!("d_{i}")));
    w.write_record(&header)?;
    for (f, &b) in set.features.iter().zip(&set.block_ids) {
        let mut rec = vec![b.to_string(), band.to_string(), f.best_lag.to_string(), f.g_value.to_string()];
        rec.extend(f.d.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read back the `d` columns and block ids of a feature CSV.
pub fn read_features_csv<R: std::io::Read>(reader: R) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let d_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("d_"))
        .map(|(i, _)| i)
        .collect();
    let id_col = header
        .iter()
        .position(|h| h == "block_id")
        .ok_or_else(|| Error::invalid("feature CSV lacks a block_id column"))?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|_| Error::Csv {
                row: i + 1,
                column: header[c].to_string(),
                message: format!("non-numeric cell '{}'", &rec[c]),
            })
        };
        ids.push(parse(id_col)? as usize);
        rows.push(d_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
    }
    Ok((ids, rows))
}
