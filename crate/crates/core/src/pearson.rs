//! Non-robust ablation: lagged Pearson correlations in place of the
//! sine-transformed Kendall entries. Everything downstream is shared.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kendall::{check_lag_len, constant_channels, LaggedDependenceSet};
use crate::mts::MtsBlock;

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Lagged Pearson correlation matrices with the same layout and contract as
/// [`crate::kendall::dependence_set`].
pub fn pearson_dependence_set(block: &MtsBlock, max_lag: usize) -> Result<LaggedDependenceSet> {
    check_lag_len(block, max_lag)?;
    let n = block.n_channels();
    let t = block.len();
    let constant = constant_channels(block);
    let mut nonneg = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let x = &block.channel(j)[..t - lag];
            for k in 0..n {
                if lag == 0 && k <= j {
                    continue;
                }
                m[(j, k)] = pearson(x, &block.channel(k)[lag..]).unwrap_or(0.0);
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
