//! Fuzzy C-means with k-means++ seeding and best-of-restarts selection.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcmParams {
    pub c: usize,
    pub m: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_restarts: usize,
}

impl FcmParams {
    pub fn new(c: usize, m: f64, seed: u64) -> Self {
        Self {
            c,
            m,
            seed,
            max_iter: 300,
            tol: 1e-6,
            n_restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyPartition {
    /// `B x C`, one row per object.
    pub memberships: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    pub m: f64,
    /// Objective after every membership update, starting with the initial one.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Seed of the restart that produced this partition.
    pub seed: u64,
    /// Largest `|sum_c e_bc - 1|` seen at any iteration.
    pub max_row_sum_error: f64,
}

impl FuzzyPartition {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_features(features: &[Vec<f64>]) -> Result<usize> {
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("no feature vectors"))?;
    if dim == 0 {
        return Err(Error::invalid("feature vectors are empty"));
    }
    for (b, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::invalid(format!("feature {b} has length {}, expected {dim}", f.len())));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature {b} has non-finite entries")));
        }
    }
    Ok(dim)
}

fn check_params(features: &[Vec<f64>], c: usize, m: f64) -> Result<usize> {
    let dim = check_features(features)?;
    if c < 2 {
        return Err(Error::invalid(format!("C must be at least 2, got {c}")));
    }
    if c >= features.len() {
        return Err(Error::invalid(format!("C = {c} must be below the number of objects {}", features.len())));
    }
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::invalid(format!("fuzzifier m must exceed 1, got {m}")));
    }
    Ok(dim)
}

/// Membership row for one object given its squared distances to the centers.
///
/// Coincident centers share the membership equally; otherwise the usual
/// update is evaluated as a softmax of `-ln(d2) / (m - 1)` so that extreme
/// distance ratios cannot overflow.
pub fn membership_row(d2: &[f64], m: f64, out: &mut [f64]) {
    let zeros = d2.iter().filter(|&&d| d == 0.0).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        for (o, &d) in out.iter_mut().zip(d2) {
            *o = if d == 0.0 { share } else { 0.0 };
        }
        return;
    }
    let k = 1.0 / (m - 1.0);
    let logs: Vec<f64> = d2.iter().map(|d| -k * d.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(&logs) {
        *o = (l - top).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn update_memberships(features: &[Vec<f64>], centers: &[Vec<f64>], m: f64, e: &mut [Vec<f64>]) {
    let mut d2 = vec![0.0; centers.len()];
    for (f, row) in features.iter().zip(e.iter_mut()) {
        for (d, v) in d2.iter_mut().zip(centers) {
            *d = sq_dist(f, v);
        }
        membership_row(&d2, m, row);
    }
}

fn update_centers(features: &[Vec<f64>], e: &[Vec<f64>], m: f64, centers: &mut [Vec<f64>]) {
    let dim = features[0].len();
    for (c, center) in centers.iter_mut().enumerate() {
        let mut acc = vec![0.0; dim];
        let mut wsum = 0.0;
        for (f, row) in features.iter().zip(e) {
            let w = row[c].powf(m);
            if w == 0.0 {
                continue;
            }
            wsum += w;
            for (a, x) in acc.iter_mut().zip(f) {
                *a += w * x;
            }
        }
        // A cluster with no weight keeps its previous center.
        if wsum > 0.0 {
            for (v, a) in center.iter_mut().zip(acc) {
                *v = a / wsum;
            }
        }
    }
}

/// `sum_b sum_c e_bc^m ||d_b - v_c||^2`.
pub fn objective(features: &[Vec<f64>], e: &[Vec<f64>], centers: &[Vec<f64>], m: f64) -> f64 {
    features
        .iter()
        .zip(e)
        .map(|(f, row)| {
            row.iter()
                .zip(centers)
                .map(|(&w, v)| if w == 0.0 { 0.0 } else { w.powf(m) * sq_dist(f, v) })
                .sum::<f64>()
        })
        .sum()
}

fn row_sum_error(e: &[Vec<f64>]) -> f64 {
    e.iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// k-means++ seeding: `c` distinct data points, each drawn with probability
/// proportional to its squared distance to the nearest chosen center.
pub fn kmeanspp_centers(features: &[Vec<f64>], c: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut rng = rng_from(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = features.iter().map(|f| sq_dist(f, &features[chosen[0]])).collect();
    while chosen.len() < c {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for (d, f) in nearest.iter_mut().zip(features) {
            *d = d.min(sq_dist(f, &features[pick]));
        }
    }
    chosen.into_iter().map(|i| features[i].clone()).collect()
}

/// Run the alternating updates from given initial centers. `observe` is
/// called with the iteration number and memberships after every update,
/// including the initial one (iteration 0).
pub fn fit_from_centers_observed<F>(
    features: &[Vec<f64>],
    init_centers: Vec<Vec<f64>>,
    params: &FcmParams,
    mut observe: F,
) -> Result<FuzzyPartition>
where
    F: FnMut(usize, &[Vec<f64>]),
{
    let dim = check_params(features, params.c, params.m)?;
    if init_centers.len() != params.c || init_centers.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("initial centers do not match C and the feature length"));
    }
    let m = params.m;
    let mut centers = init_centers;
    let mut e = vec![vec![0.0; params.c]; features.len()];
    update_memberships(features, &centers, m, &mut e);
    observe(0, &e);
    let mut trace = vec![objective(features, &e, &centers, m)];
    let mut max_err = row_sum_error(&e);
    let mut next = e.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        update_centers(features, &e, m, &mut centers);
        update_memberships(features, &centers, m, &mut next);
        observe(iterations, &next);
        max_err = max_err.max(row_sum_error(&next));
        trace.push(objective(features, &next, &centers, m));
        let delta = e
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        std::mem::swap(&mut e, &mut next);
        if delta < params.tol {
            converged = true;
            break;
        }
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("FCM objective became non-finite"));
    }
    Ok(FuzzyPartition {
        memberships: e,
        centers,
        m,
        objective_trace: trace,
        iterations,
        converged,
        seed: params.seed,
        max_row_sum_error: max_err,
    })
}

pub fn fit_from_centers(features: &[Vec<f64>], init_centers: Vec<Vec<f64>>, params: &FcmParams) -> Result<FuzzyPartition> {
    fit_from_centers_observed(features, init_centers, params, |_, _| {})
}

/// Seed of restart `r` for a given base seed, `C` and `m`.
pub fn restart_seed(seed: u64, c: usize, m: f64, restart: usize) -> u64 {
    derive_seed(seed, &[c as u64, m.to_bits(), restart as u64])
}

/// Best of `n_restarts` k-means++ initialised fits by final objective; ties
/// go to the earlier restart.
pub fn fcm_fit(features: &[Vec<f64>], params: &FcmParams) -> Result<FuzzyPartition> {
    check_params(features, params.c, params.m)?;
    let restarts = params.n_restarts.max(1);
    let fits: Vec<Result<FuzzyPartition>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let s = restart_seed(params.seed, params.c, params.m, r);
            let init = kmeanspp_centers(features, params.c, s);
            fit_from_centers(features, init, &FcmParams { seed: s, ..*params })
        })
        .collect();
    let mut best: Option<FuzzyPartition> = None;
    for fit in fits {
        let fit = fit?;
        if best.as_ref().is_none_or(|b| fit.objective() < b.objective()) {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one restart");
    if !best.converged {
        log::warn!(
            "FCM (C = {}, m = {}) stopped after {} iterations without converging",
            params.c,
            params.m,
            best.iterations
        );
    }
    Ok(best)
}

/// Membership CSV: `block_id, e_1..e_C`.
pub fn write_memberships_csv<W: Write>(partition: &FuzzyPartition, block_ids: &[usize], writer: W) -> Result<()> {
    if block_ids.len() != partition.memberships.len() {
        return Err(Error::invalid("block id count does not match the partition"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["block_id".to_string()];
    header.extend((1..=partition.n_clusters()).map(|c| format!("e_{c}")));
    w.write_record(&header)?;
    for (row, id) in partition.memberships.iter().zip(block_ids) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a membership CSV back as block ids and rows.
pub fn read_memberships_csv<R: std::io::Read>(reader: R) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.get(0) != Some("block_id") || header.len() < 3 {
        return Err(Error::invalid("membership CSV needs block_id and at least two e_ columns"));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| -> Result<&str> {
            rec.get(c).map(str::trim).ok_or_else(|| Error::Csv {
                row: i + 1,
                column: header[c].to_string(),
                message: "missing cell".into(),
            })
        };
        let bad = |c: usize, v: &str| Error::Csv {
            row: i + 1,
            column: header[c].to_string(),
            message: format!("non-numeric cell '{v}'"),
        };
        let id = cell(0)?;
        ids.push(id.parse::<usize>().map_err(|_| bad(0, id))?);
        let row = (1..header.len())
            .map(|c| {
                let v = cell(c)?;
                v.parse::<f64>().map_err(|_| bad(c, v))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((ids, rows))
}

#[derive(Serialize)]
struct CentersJson<'a> {
    m: f64,
    centers: &'a [Vec<f64>],
    objective: f64,
    iterations: usize,
    converged: bool,
}

pub fn write_centers_json<W: Write>(partition: &FuzzyPartition, writer: W) -> Result<()> {
    let doc = CentersJson {
        m: partition.m,
        centers: &partition.centers,
        objective: partition.objective(),
        iterations: partition.iterations,
        converged: partition.converged,
    };
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_memberships() {
        let mut out = [0.0; 2];
        // Distances 1 and 2 from the two centers.
        membership_row(&[1.0, 4.0], 2.0, &mut out);
        assert!((out[0] - 0.8).abs() < 1e-15 && (out[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn coincident_centers_split_membership() {
        let mut out = [0.0; 3];
        membership_row(&[0.0, 2.0, 0.0], 1.5, &mut out);
        assert_eq!(out, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn extreme_ratios_do_not_overflow() {
        let mut out = [0.0; 2];
        membership_row(&[1e-300, 1e300], 1.01, &mut out);
        assert_eq!(out, [1.0, 0.0]);
    }

    #[test]
    fn points_on_centers_are_crisp() {
        let feats = vec![vec![0.0], vec![3.0], vec![1.0]];
        let fit = fit_from_centers(
            &feats,
            vec![vec![0.0], vec![3.0]],
            &FcmParams {
                max_iter: 0,
                ..FcmParams::new(2, 2.0, 0)
            },
        )
        .unwrap();
        assert_eq!(fit.memberships[0], vec![1.0, 0.0]);
        assert_eq!(fit.memberships[1], vec![0.0, 1.0]);
        assert!((fit.memberships[2][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let feats = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(fcm_fit(&feats, &FcmParams::new(3, 2.0, 0)).is_err());
        assert!(fcm_fit(&feats, &FcmParams::new(2, 1.0, 0)).is_err());
        assert!(fcm_fit(&[vec![0.0], vec![f64::NAN], vec![1.0]], &FcmParams::new(2, 2.0, 0)).is_err());
    }

    #[test]
    fn kmeanspp_picks_distinct_points_even_with_duplicates() {
        let feats = vec![vec![1.0]; 5];
        let c = kmeanspp_centers(&feats, 3, 7);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn memberships_csv_layout() {
        let feats = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]];
        let fit = fcm_fit(&feats, &FcmParams::new(2, 2.0, 3)).unwrap();
        let mut buf = Vec::new();
        write_memberships_csv(&fit, &[0, 1, 4, 5], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block_id,e_1,e_2\n0,"));
        assert_eq!(text.lines().count(), 5);
        let (ids, rows) = read_memberships_csv(text.as_bytes()).unwrap();
        assert_eq!(ids, vec![0, 1, 4, 5]);
        assert_eq!(rows, fit.memberships);
    }
}
