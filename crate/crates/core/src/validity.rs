//! Fuzzy Silhouette Index and the `(C, m)` grid search.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fcm::{check_features, fcm_fit, sq_dist, FcmParams, FuzzyPartition};

pub const DEFAULT_C_GRID: [usize; 5] = [2, 3, 4, 5, 6];
pub const DEFAULT_M_GRID: [f64; 6] = [1.2, 1.5, 1.8, 2.0, 2.2, 2.5];

/// FSI values closer than this are treated as tied in the grid search.
const FSI_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouettes {
    pub fsi: f64,
    /// `s_bc`, one row per object.
    pub s: Vec<Vec<f64>>,
    /// `(b, c)` pairs whose silhouette was set to 0 because a cluster had no
    /// weight once `b` was excluded.
    pub undefined: Vec<(usize, usize)>,
}

/// Fuzzy Silhouette Index of a partition over `features`.
///
/// Dissimilarities are unsquared Euclidean distances, averaged with weights
/// `e_jc^m` over `j != b`.
pub fn fsi(features: &[Vec<f64>], memberships: &[Vec<f64>], m: f64) -> Result<Silhouettes> {
    check_features(features)?;
    let nb = features.len();
    if nb < 3 {
        return Err(Error::invalid(format!("FSI needs at least 3 objects, got {nb}")));
    }
    if memberships.len() != nb {
        return Err(Error::invalid("membership rows do not match the number of objects"));
    }
    let nc = memberships[0].len();
    if nc < 2 || memberships.iter().any(|r| r.len() != nc) {
        return Err(Error::invalid("memberships need at least 2 clusters and a uniform width"));
    }

    let w: Vec<Vec<f64>> = memberships.iter().map(|r| r.iter().map(|e| e.powf(m)).collect()).collect();
    let rows: Vec<(Vec<f64>, Vec<(usize, usize)>, f64)> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut num = vec![0.0; nc];
            let mut den = vec![0.0; nc];
            for j in (0..nb).filter(|&j| j != b) {
                let dist = sq_dist(&features[b], &features[j]).sqrt();
                for c in 0..nc {
                    num[c] += w[j][c] * dist;
                    den[c] += w[j][c];
                }
            }
            let avg: Vec<Option<f64>> = (0..nc).map(|c| (den[c] > 0.0).then(|| num[c] / den[c])).collect();
            let mut s = vec![0.0; nc];
            let mut undefined = Vec::new();
            let mut contrib = 0.0;
            for c in 0..nc {
                let a = avg[c];
                let n = (0..nc).filter(|&k| k != c).filter_map(|k| avg[k]).reduce(f64::min);
                match (a, n) {
                    (Some(a), Some(n)) => {
                        let den = a.max(n);
                        s[c] = if den > 0.0 { (n - a) / den } else { 0.0 };
                    }
                    _ => undefined.push((b, c)),
                }
                contrib += w[b][c] * s[c];
            }
            (s, undefined, contrib)
        })
        .collect();

    let mut s = Vec::with_capacity(nb);
    let mut undefined = Vec::new();
    let mut total = 0.0;
    for (row, und, contrib) in rows {
        s.push(row);
        undefined.extend(und);
        total += contrib;
    }
    Ok(Silhouettes {
        fsi: total / nb as f64,
        s,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    #[serde(rename = "C")]
    pub c: usize,
    pub m: f64,
    #[serde(rename = "FSI")]
    pub fsi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Selection {
    #[serde(rename = "C")]
    pub c: usize,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub selected: Selection,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub report: GridReport,
    pub partition: FuzzyPartition,
    pub silhouettes: Silhouettes,
}

/// Fit every `(C, m)` pair and keep the one with the largest FSI. Ties go to
/// the smaller `C`, then the smaller `m`. Failed cells are recorded; the
/// search fails only if every cell does.
pub fn grid_search(features: &[Vec<f64>], c_grid: &[usize], m_grid: &[f64], seed: u64) -> Result<GridResult> {
    if c_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::invalid("grid search needs non-empty C and m ranges"));
    }
    let mut pairs: Vec<(usize, f64)> = c_grid.iter().flat_map(|&c| m_grid.iter().map(move |&m| (c, m))).collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.dedup();

    let fits: Vec<Result<(FuzzyPartition, Silhouettes)>> = pairs
        .par_iter()
        .map(|&(c, m)| {
            let part = fcm_fit(features, &FcmParams::new(c, m, seed))?;
            let sil = fsi(features, &part.memberships, m)?;
            Ok((part, sil))
        })
        .collect();

    let mut cells = Vec::with_capacity(pairs.len());
    let mut best: Option<(usize, f64, FuzzyPartition, Silhouettes)> = None;
    for (&(c, m), fit) in pairs.iter().zip(fits) {
        match fit {
            Ok((part, sil)) => {
                cells.push(GridCell {
                    c,
                    m,
                    fsi: Some(sil.fsi),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| sil.fsi > b.3.fsi + FSI_TIE_TOL) {
                    best = Some((c, m, part, sil));
                }
            }
            Err(e) => {
                log::warn!("grid cell C = {c}, m = {m} failed: {e}");
                cells.push(GridCell {
                    c,
                    m,
                    fsi: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (c, m, partition, silhouettes) = best.ok_or_else(|| {
        let first = cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        Error::invalid(format!("every grid cell failed; first error: {first}"))
    })?;
    Ok(GridResult {
        report: GridReport {
            cells,
            selected: Selection { c, m },
        },
        partition,
        silhouettes,
    })
}

pub fn write_grid_json<W: Write>(report: &GridReport, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)?;
    Ok(())
}
