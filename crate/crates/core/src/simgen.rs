//! Simulated datasets: AR(2) latent oscillations mixed into two channel
//! groups by cluster-specific matrices, with a switching indicator for
//! blocks that draw on both regimes.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::TruthKind;
use crate::mts::{MtsBlock, MtsDataset};
use crate::seed::{derive_seed, rng_from};

pub const BURN_IN: usize = 500;

/// How the damping constant `M` enters the AR(2) coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ar2Damping {
    /// Complex roots of modulus `1/M`: `phi1 = 2 cos(2 pi w) / M`,
    /// `phi2 = -1 / M^2`. The spectrum peaks at the target frequency.
    #[default]
    RootModulus,
    /// `phi1 = 2 exp(-M) cos(2 pi w)`, `phi2 = -exp(-2M)`.
    Exponential,
}

impl Ar2Damping {
    /// `(phi1, phi2)` for a normalised frequency `w` in cycles per sample.
    pub fn coefficients(self, w: f64, m: f64) -> (f64, f64) {
        let c = (2.0 * std::f64::consts::PI * w).cos();
        match self {
            Ar2Damping::RootModulus => (2.0 * c / m, -1.0 / (m * m)),
            Ar2Damping::Exponential => (2.0 * (-m).exp() * c, -(-2.0 * m).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Normal,
    StudentT3,
    /// Student t with one degree of freedom (Cauchy).
    StudentT1,
}

impl NoiseFamily {
    pub fn sample<R: Rng>(self, rng: &mut R, n: usize) -> Vec<f64> {
        match self {
            NoiseFamily::Normal => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            NoiseFamily::StudentT3 => {
                let d = StudentT::new(3.0).expect("valid degrees of freedom");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            NoiseFamily::StudentT1 => {
                let d = Cauchy::new(0.0, 1.0).expect("valid scale");
                (0..n).map(|_| d.sample(rng)).collect()
            }
        }
    }
}

/// Mixing matrices, `(p + q) x R` row-major, one row per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub a0: Vec<Vec<f64>>,
    pub a1: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_blocks: usize,
    pub block_len: usize,
    pub sample_rate_hz: f64,
    pub damping: f64,
    pub damping_kind: Ar2Damping,
    pub target_freqs_hz: Vec<f64>,
    pub p: usize,
    pub q: usize,
    /// Explicit mixing matrices; generated from `mixing_seed` when absent.
    pub mixing: Option<Mixing>,
    pub mixing_seed: u64,
    pub noise_family: NoiseFamily,
    pub noise_scale: f64,
    /// Fractions of pure-0, pure-1 and switching blocks.
    pub proportions: [f64; 3],
    /// Stationary probability of regime 0 in switching blocks.
    pub fuzzy_switch_prob: f64,
    /// Symmetric switching rate of the regime indicator, per sample.
    pub switch_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_blocks: 300,
            block_len: 384,
            sample_rate_hz: 128.0,
            damping: 1.05,
            damping_kind: Ar2Damping::RootModulus,
            target_freqs_hz: vec![2.0, 6.0, 10.0, 20.0, 40.0],
            p: 4,
            q: 4,
            mixing: None,
            mixing_seed: 2024,
            noise_family: NoiseFamily::Normal,
            noise_scale: 1.0,
            proportions: [0.4, 0.4, 0.2],
            fuzzy_switch_prob: 0.5,
            switch_rate: 0.5,
            seed: 1,
        }
    }
}

impl SimConfig {
    /// Examples 1 to 3 differ only in the noise family: Gaussian, t3, Cauchy.
    pub fn example(k: u8) -> Result<Self> {
        let noise_family = match k {
            1 => NoiseFamily::Normal,
            2 => NoiseFamily::StudentT3,
            3 => NoiseFamily::StudentT1,
            _ => return Err(Error::Config(format!("unknown simulation example {k}; expected 1, 2 or 3"))),
        };
        Ok(Self {
            noise_family,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_blocks == 0 || self.block_len < 3 {
            return bad("n_blocks must be positive and block_len at least 3".into());
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz must be positive".into());
        }
        if self.p == 0 || self.q == 0 {
            return bad("p and q must be positive".into());
        }
        if self.target_freqs_hz.is_empty() {
            return bad("target_freqs_hz is empty".into());
        }
        for &f in &self.target_freqs_hz {
            if !(f > 0.0 && f < self.sample_rate_hz / 2.0) {
                return bad(format!("target frequency {f} Hz is outside (0, {})", self.sample_rate_hz / 2.0));
            }
        }
        let stationary = match self.damping_kind {
            Ar2Damping::RootModulus => self.damping > 1.0,
            Ar2Damping::Exponential => self.damping > 0.0,
        };
        if !stationary || !self.damping.is_finite() {
            return bad(format!("damping {} gives a non-stationary AR(2)", self.damping));
        }
        if self.proportions.iter().any(|&v| !(v >= 0.0)) || (self.proportions.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad(format!("proportions {:?} must be non-negative and sum to 1", self.proportions));
        }
        let pi0 = self.fuzzy_switch_prob;
        if !(pi0 > 0.0 && pi0 < 1.0) {
            return bad(format!("fuzzy_switch_prob {pi0} must lie in (0, 1)"));
        }
        let (a, b) = self.transition_probs();
        if !(self.switch_rate > 0.0) || a > 1.0 || b > 1.0 {
            return bad(format!("switch_rate {} is not a valid rate for fuzzy_switch_prob {pi0}", self.switch_rate));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be finite and non-negative".into());
        }
        if let Some(mix) = &self.mixing {
            check_mixing(mix, self.p + self.q, self.target_freqs_hz.len())?;
        }
        Ok(())
    }

    /// `(P[0 -> 1], P[1 -> 0])` of the regime indicator.
    pub fn transition_probs(&self) -> (f64, f64) {
        let pi0 = self.fuzzy_switch_prob;
        (2.0 * self.switch_rate * (1.0 - pi0), 2.0 * self.switch_rate * pi0)
    }

    pub fn mixing_matrices(&self) -> Result<Mixing> {
        match &self.mixing {
            Some(m) => {
                check_mixing(m, self.p + self.q, self.target_freqs_hz.len())?;
                Ok(m.clone())
            }
            None => default_mixing(self.p, self.q, self.target_freqs_hz.len(), self.mixing_seed),
        }
    }
}

fn check_mixing(mix: &Mixing, rows: usize, cols: usize) -> Result<()> {
    for (name, a) in [("a0", &mix.a0), ("a1", &mix.a1)] {
        if a.len() != rows || a.iter().any(|r| r.len() != cols) {
            return Err(Error::Config(format!("mixing matrix {name} must be {rows} x {cols}")));
        }
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("mixing matrix {name} has non-finite entries")));
        }
    }
    Ok(())
}

/// Default mixing for the 4 + 4 channel, five-latent layout.
///
/// Regime 0 loads the 6 Hz latent on every channel with weights falling from
/// the first to the last channel of each group; the trailing channels also
/// carry a group-specific latent (2 Hz on X, 40 Hz on Y). Regime 1 mirrors
/// the channel order within each group. A weak background of 10 Hz on X and
/// 20 Hz on Y is shared by both regimes. Rows have unit norm.
pub fn default_mixing(p: usize, q: usize, n_latent: usize, seed: u64) -> Result<Mixing> {
    if p != 4 || q != 4 || n_latent != 5 {
        return Err(Error::Config(
            "default mixing is defined for p = q = 4 and five latents; supply explicit matrices".into(),
        ));
    }
    const SHARED: usize = 1;
    const LOADS: [f64; 4] = [1.0, 1.0, 0.7, 0.2];
    let own = [(0usize, 2usize), (4, 3)];
    let mut rng = rng_from(seed);
    let mut a0 = vec![vec![0.0; n_latent]; 8];
    for (g, &(group_latent, bg_latent)) in own.iter().enumerate() {
        for i in 0..4 {
            let row = &mut a0[4 * g + i];
            row[bg_latent] += 0.15 * rng.random_range(0.5..1.5);
            row[SHARED] += LOADS[i] * rng.random_range(0.75..1.25);
            if i >= 2 {
                row[group_latent] += rng.random_range(0.75..1.25);
            }
        }
    }
    for row in &mut a0 {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let a1 = [3, 2, 1, 0, 7, 6, 5, 4].iter().map(|&i| a0[i].clone()).collect();
    Ok(Mixing { a0, a1 })
}

/// Standardised AR(2) series with `BURN_IN` samples discarded.
pub fn gen_ar2<R: Rng>(rng: &mut R, len: usize, omega_hz: f64, sample_rate_hz: f64, damping: f64, kind: Ar2Damping) -> Vec<f64> {
    let (phi1, phi2) = kind.coefficients(omega_hz / sample_rate_hz, damping);
    assert!(phi2 > -1.0 && phi2 <= 0.0 && phi1.abs() < 1.0 - phi2, "non-stationary AR(2)");
    let total = len + BURN_IN;
    let mut o = vec![0.0; total];
    for t in 0..total {
        let e: f64 = rng.sample(StandardNormal);
        let a = if t >= 1 { o[t - 1] } else { 0.0 };
        let b = if t >= 2 { o[t - 2] } else { 0.0 };
        o[t] = phi1 * a + phi2 * b + e;
    }
    let mut o = o.split_off(BURN_IN);
    let n = o.len() as f64;
    let mean = o.iter().sum::<f64>() / n;
    let sd = (o.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    o.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    o
}

/// The latent series of a block, one per target frequency.
pub fn gen_latents(config: &SimConfig, block_seed: u64) -> Vec<Vec<f64>> {
    config
        .target_freqs_hz
        .iter()
        .enumerate()
        .map(|(r, &f)| {
            let mut rng = rng_from(derive_seed(block_seed, &[0, r as u64]));
            gen_ar2(&mut rng, config.block_len, f, config.sample_rate_hz, config.damping, config.damping_kind)
        })
        .collect()
}

/// Regime indicator of a switching block, drawn from a two-state Markov
/// chain started in its stationary law.
pub fn gen_indicator(config: &SimConfig, block_seed: u64) -> Vec<u8> {
    let (a, b) = config.transition_probs();
    let mut rng = rng_from(derive_seed(block_seed, &[1]));
    let mut s = u8::from(rng.random::<f64>() >= config.fuzzy_switch_prob);
    (0..config.block_len)
        .map(|_| {
            let cur = s;
            let u: f64 = rng.random();
            if (s == 0 && u < a) || (s == 1 && u < b) {
                s = 1 - s;
            }
            cur
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBlock {
    pub block: MtsBlock,
    pub kind: TruthKind,
    /// `D(t)`: 0 selects `A0`, 1 selects `A1`.
    pub indicator: Vec<u8>,
}

pub fn channel_names(p: usize, q: usize) -> Vec<String> {
    (1..=p).map(|i| format!("X{i}")).chain((1..=q).map(|i| format!("Y{i}"))).collect()
}

fn kind_label(kind: TruthKind) -> i64 {
    match kind {
        TruthKind::Pure0 => 0,
        TruthKind::Pure1 => 1,
        TruthKind::Switching => 2,
    }
}

/// One block: `Z(t) = A(t) O(t) + noise_scale * W(t)` with
/// `A(t) = A1 D(t) + A0 (1 - D(t))`.
pub fn gen_block(config: &SimConfig, mixing: &Mixing, kind: TruthKind, block_seed: u64) -> Result<SimBlock> {
    let n_ch = config.p + config.q;
    check_mixing(mixing, n_ch, config.target_freqs_hz.len())?;
    let t_len = config.block_len;
    let latents = gen_latents(config, block_seed);
    let indicator = match kind {
        TruthKind::Pure0 => vec![0; t_len],
        TruthKind::Pure1 => vec![1; t_len],
        TruthKind::Switching => gen_indicator(config, block_seed),
    };
    let mut noise_rng = rng_from(derive_seed(block_seed, &[2]));
    let channels: Vec<Vec<f64>> = (0..n_ch)
        .map(|j| {
            let w = config.noise_family.sample(&mut noise_rng, t_len);
            (0..t_len)
                .map(|t| {
                    let a = if indicator[t] == 1 { &mixing.a1[j] } else { &mixing.a0[j] };
                    let signal: f64 = a.iter().zip(&latents).map(|(c, o)| c * o[t]).sum();
                    signal + config.noise_scale * w[t]
                })
                .collect()
        })
        .collect();
    let block = MtsBlock::new(channels, config.p, config.q, config.sample_rate_hz)?
        .with_names(channel_names(config.p, config.q))?
        .with_label(Some(kind_label(kind)));
    Ok(SimBlock { block, kind, indicator })
}

/// Block counts per kind by largest-remainder apportionment; ties go to the
/// earlier kind.
pub fn apportion(n: usize, proportions: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>().min(n);
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if proportions[k] > 0.0 {
            counts[k] += 1;
            left -= 1;
        }
    }
    counts
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub dataset: MtsDataset,
    pub kinds: Vec<TruthKind>,
    pub indicators: Vec<Vec<u8>>,
    pub mixing: Mixing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTruth {
    pub kinds: Vec<TruthKind>,
    pub proportions: [f64; 3],
    pub config: SimConfig,
}

pub fn block_seed(seed: u64, b: usize) -> u64 {
    derive_seed(seed, &[1, b as u64])
}

/// Generate a full dataset. Kinds follow the configured proportions in a
/// seeded random order; each block has its own derived seed, so parallel
/// generation reproduces the sequential result.
pub fn gen_dataset(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let mixing = config.mixing_matrices()?;
    let counts = apportion(config.n_blocks, &config.proportions);
    let mut kinds: Vec<TruthKind> = [TruthKind::Pure0, TruthKind::Pure1, TruthKind::Switching]
        .iter()
        .zip(counts)
        .flat_map(|(&k, n)| std::iter::repeat_n(k, n))
        .collect();
    kinds.shuffle(&mut rng_from(derive_seed(config.seed, &[0])));
    let blocks: Vec<SimBlock> = kinds
        .par_iter()
        .enumerate()
        .map(|(b, &k)| gen_block(config, &mixing, k, block_seed(config.seed, b)))
        .collect::<Result<_>>()?;
    let mut indicators = Vec::with_capacity(blocks.len());
    let mut mts = Vec::with_capacity(blocks.len());
    for sb in blocks {
        indicators.push(sb.indicator);
        mts.push(sb.block);
    }
    Ok(SimDataset {
        dataset: MtsDataset::new(mts, true)?,
        kinds,
        indicators,
        mixing,
    })
}

impl SimDataset {
    pub fn truth(&self, config: &SimConfig) -> SimTruth {
        SimTruth {
            kinds: self.kinds.clone(),
            proportions: config.proportions,
            config: SimConfig {
                mixing: Some(self.mixing.clone()),
                ..config.clone()
            },
        }
    }
}

pub fn write_truth_json<W: Write>(truth: &SimTruth, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, truth)?;
    Ok(())
}

/// Add `scale * W` to the given channels of every block, with `W` drawn
/// independently per block and channel. Other channels are left untouched.
pub fn contaminate(dataset: &MtsDataset, channels: &[usize], scale: f64, family: NoiseFamily, seed: u64) -> Result<MtsDataset> {
    if channels.is_empty() {
        return Err(Error::invalid("no channels selected for contamination"));
    }
    let n_ch = dataset.blocks().first().map_or(0, MtsBlock::n_channels);
    if let Some(&bad) = channels.iter().find(|&&j| j >= n_ch) {
        return Err(Error::invalid(format!("channel {bad} does not exist (dataset has {n_ch})")));
    }
    if scale == 0.0 {
        return Ok(dataset.clone());
    }
    let blocks: Vec<MtsBlock> = dataset
        .blocks()
        .iter()
        .enumerate()
        .map(|(b, blk)| {
            let mut ch = blk.channels().to_vec();
            for &j in channels {
                let mut rng = rng_from(derive_seed(seed, &[b as u64, j as u64]));
                let w = family.sample(&mut rng, blk.len());
                ch[j].iter_mut().zip(w).for_each(|(z, w)| *z += scale * w);
            }
            blk.with_channels(ch)
        })
        .collect();
    Ok(MtsDataset::new(blocks, true)?.with_band(dataset.band().cloned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportionment_examples() {
        assert_eq!(apportion(60, &[0.4, 0.4, 0.2]), [24, 24, 12]);
        assert_eq!(apportion(10, &[1.0, 0.0, 0.0]), [10, 0, 0]);
        assert_eq!(apportion(7, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]), [3, 2, 2]);
    }

    #[test]
    fn default_shape() {
        let cfg = SimConfig {
            n_blocks: 3,
            ..SimConfig::default()
        };
        let d = gen_dataset(&cfg).unwrap();
        assert_eq!(d.dataset.total_shape(), (3 * 384, 8));
        assert_eq!(SimConfig::default().n_blocks * SimConfig::default().block_len, 115_200);
    }

    #[test]
    fn pure_block_is_exact_mixture_plus_noise() {
        let cfg = SimConfig {
            noise_scale: 0.0,
            ..SimConfig::default()
        };
        let mix = cfg.mixing_matrices().unwrap();
        let sb = gen_block(&cfg, &mix, TruthKind::Pure0, 99).unwrap();
        let lat = gen_latents(&cfg, 99);
        for j in 0..8 {
            for t in [0, 100, 383] {
                let expect: f64 = (0..5).map(|r| mix.a0[j][r] * lat[r][t]).sum();
                assert!((sb.block.channel(j)[t] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_mixing_rows_are_unit_and_mirrored() {
        let m = default_mixing(4, 4, 5, 3).unwrap();
        for row in m.a0.iter().chain(&m.a1) {
            assert!((row.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.a1[0], m.a0[3]);
        assert_eq!(m.a1[4], m.a0[7]);
        assert!(default_mixing(3, 4, 5, 3).is_err());
    }

    #[test]
    fn switching_occupancy() {
        let cfg = SimConfig::default();
        for s in 0..20 {
            let d = gen_indicator(&cfg, s);
            let frac = d.iter().filter(|&&v| v == 0).count() as f64 / d.len() as f64;
            assert!(frac > 0.3 && frac < 0.7, "{frac}");
        }
    }

    #[test]
    fn white_noise_limit() {
        let mut rng = rng_from(5);
        let x = gen_ar2(&mut rng, 4096, 10.0, 128.0, 10.0, Ar2Damping::Exponential);
        let r1: f64 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / x.len() as f64;
        assert!(r1.abs() <= 0.05, "{r1}");
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::default();
        c.proportions = [0.5, 0.5, 0.1];
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.target_freqs_hz = vec![64.0];
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.damping = 0.9;
        assert!(c.validate().is_err());
        assert!(SimConfig::example(4).is_err());
    }

    #[test]
    fn contamination_touches_only_selected_channels() {
        let cfg = SimConfig {
            n_blocks: 2,
            ..SimConfig::default()
        };
        let d = gen_dataset(&cfg).unwrap().dataset;
        let c = contaminate(&d, &[0, 2, 5], 0.1, NoiseFamily::StudentT1, 4).unwrap();
        for (a, b) in d.blocks().iter().zip(c.blocks()) {
            for j in 0..8 {
                let same = a.channel(j) == b.channel(j);
                assert_eq!(same, ![0, 2, 5].contains(&j));
            }
        }
        assert_eq!(contaminate(&d, &[1], 0.0, NoiseFamily::StudentT1, 4).unwrap().blocks(), d.blocks());
        assert!(contaminate(&d, &[], 0.1, NoiseFamily::StudentT1, 4).is_err());
        let again = contaminate(&d, &[0, 2, 5], 0.1, NoiseFamily::StudentT1, 4).unwrap();
        assert_eq!(again.blocks(), c.blocks());
    }
}
