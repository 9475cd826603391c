//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use fuzzcoh::kendall::LaggedDependenceSet;
use fuzzcoh::MtsBlock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Concordant minus discordant pairs by direct enumeration.
pub fn brute_kendall_excess(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = x[i].partial_cmp(&x[j]).unwrap() as i64;
            let b = y[i].partial_cmp(&y[j]).unwrap() as i64;
            s += a * b;
        }
    }
    s
}

/// Fraction of agreeing pairs by direct enumeration.
pub fn brute_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Series of length `n` drawn from a small integer grid so ties are common.
pub fn tied_series<R: Rng>(rng: &mut R, n: usize, levels: i32) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0..levels) as f64).collect()
}

pub fn gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random block with cross-lagged structure between two 2-channel groups.
pub fn random_block(seed: u64, len: usize, p: usize, q: usize) -> MtsBlock {
    let mut r = rng(seed);
    let n = p + q;
    let base: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut r, len + 8)).collect();
    let channels = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let shift = r.random_range(0..5usize);
            let noise = gaussian(&mut r, len);
            (0..len)
                .map(|t| w.iter().zip(&base).map(|(a, b)| a * b[t + shift]).sum::<f64>() + 0.5 * noise[t])
                .collect()
        })
        .collect();
    MtsBlock::new(channels, p, q, 128.0).unwrap()
}

/// Best `(u' P_XY(l) v)^2` over a grid of unit-constraint directions for
/// `p = q = 2`, using the given constraint matrices.
pub fn grid_canonical_2x2(dep: &LaggedDependenceSet, xx: &nalgebra::DMatrix<f64>, yy: &nalgebra::DMatrix<f64>, steps: usize) -> f64 {
    let dirs = |m: &nalgebra::DMatrix<f64>| -> Vec<[f64; 2]> {
        (0..steps)
            .map(|i| {
                let th = std::f64::consts::PI * i as f64 / steps as f64;
                let (a, b) = (th.cos(), th.sin());
                let qf = a * a * m[(0, 0)] + 2.0 * a * b * m[(0, 1)] + b * b * m[(1, 1)];
                [a / qf.sqrt(), b / qf.sqrt()]
            })
            .collect()
    };
    let us = dirs(xx);
    let vs = dirs(yy);
    let mut best = 0.0f64;
    for lag in dep.lags() {
        let k = dep.xy(lag);
        for u in &us {
            let ku = [u[0] * k[(0, 0)] + u[1] * k[(1, 0)], u[0] * k[(0, 1)] + u[1] * k[(1, 1)]];
            for v in &vs {
                let val = ku[0] * v[0] + ku[1] * v[1];
                best = best.max(val * val);
            }
        }
    }
    best
}

/// Peak frequency in Hz of the one-sided periodogram after a Daniell
/// moving average over `2 * half_width + 1` bins (`half_width = 0` is the
/// raw periodogram).
pub fn periodogram_peak_hz(x: &[f64], fs: f64, half_width: usize) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm_sqr()).collect();
    let smooth = |k: usize| -> f64 {
        let lo = k.saturating_sub(half_width).max(1);
        let hi = (k + half_width).min(power.len() - 1);
        power[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
    };
    let k = (1..power.len()).map(|k| (k, smooth(k))).fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a }).0;
    k as f64 * fs / n as f64
}
