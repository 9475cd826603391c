//! Butterworth band-pass design and zero-phase filtering.
//!
//! Designs are built from the analog Butterworth low-pass prototype, moved to
//! a band-pass with the usual `s -> (s^2 + w0^2) / (s * bw)` substitution and
//! discretized with the bilinear transform (edges prewarped). The result is a
//! cascade of biquads, one per conjugate pole pair, each carrying one zero at
//! DC and one at Nyquist.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mts::{MtsBlock, MtsDataset};

type C64 = Complex<f64>;

/// A named frequency band `[low_hz, high_hz)` at a given sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
    pub sample_rate_hz: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        let band = Self {
            name: name.into(),
            low_hz,
            high_hz,
            sample_rate_hz,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        let nyq = self.sample_rate_hz / 2.0;
        if !(self.low_hz.is_finite() && self.high_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("band '{}' has non-finite edges", self.name)));
        }
        if !(0.0 <= self.low_hz && self.low_hz < self.high_hz && self.high_hz < nyq) {
            return Err(Error::invalid(format!(
                "band '{}' needs 0 <= low < high < Nyquist ({nyq} Hz), got [{}, {})",
                self.name, self.low_hz, self.high_hz
            )));
        }
        Ok(())
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }
}

/// The conventional EEG bands, in ascending order.
pub const DEFAULT_BANDS: [(&str, f64, f64); 5] = [
    ("Delta", 0.5, 4.0),
    ("Theta", 4.0, 8.0),
    ("Alpha", 8.0, 12.0),
    ("Beta", 12.0, 30.0),
    ("Gamma", 30.0, 50.0),
];

/// Band edges by name. Serialized as `{"Beta": [12, 30], ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandTable(pub BTreeMap<String, [f64; 2]>);

impl Default for BandTable {
    fn default() -> Self {
        Self(
            DEFAULT_BANDS
                .iter()
                .map(|&(n, lo, hi)| (n.to_string(), [lo, hi]))
                .collect(),
        )
    }
}

impl BandTable {
    pub fn band(&self, name: &str, sample_rate_hz: f64) -> Result<BandSpec> {
        let [lo, hi] = self
            .0
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown band '{name}'")))?;
        BandSpec::new(name, *lo, *hi, sample_rate_hz)
    }

    /// Band names in ascending order of lower edge.
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<(&String, &[f64; 2])> = self.0.iter().collect();
        v.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(a.0.cmp(b.0)));
        v.into_iter().map(|(n, _)| n.clone()).collect()
    }
}

/// One second-order section in transposed direct form II.
/// `a0` is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: C64) -> C64 {
        let z2 = z_inv * z_inv;
        let num = C64::new(self.b[0], 0.0) + z_inv * self.b[1] + z2 * self.b[2];
        let den = C64::new(self.a[0], 0.0) + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }

    /// Pole radii of `1 + a1 z^-1 + a2 z^-2`.
    fn pole_radii(&self) -> [f64; 2] {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            let r = a2.sqrt();
            [r, r]
        } else {
            let s = disc.sqrt();
            [((-a1 + s) / 2.0).abs(), ((-a1 - s) / 2.0).abs()]
        }
    }
}

/// A stable band-pass (or low-pass, when the band starts at 0 Hz) cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    pub sections: Vec<Biquad>,
    pub band: BandSpec,
    pub order: usize,
}

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 12;
pub const DEFAULT_ORDER: usize = 4;

/// Largest pole radius accepted as numerically stable.
const MAX_POLE_RADIUS: f64 = 1.0 - 1e-9;

/// Design a Butterworth band-pass with prototype order `order`.
///
/// The digital filter has order `2 * order` (band-pass) and unit gain at the
/// band's geometric center. A band with `low_hz == 0` yields a low-pass of
/// order `order` instead.
pub fn design_bandpass(band: &BandSpec, order: usize) -> Result<FilterDesign> {
    band.validate()?;
    if !(MIN_ORDER..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid(format!(
            "filter order must be in [{MIN_ORDER}, {MAX_ORDER}], got {order}"
        )));
    }
    let fs = band.sample_rate_hz;
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (PI * f / fs).tan();

    // Analog low-pass prototype poles in the upper half plane (plus the real
    // pole for odd orders).
    let proto: Vec<C64> = (0..order)
        .map(|k| C64::from_polar(1.0, PI * (2 * k + order + 1) as f64 / (2 * order) as f64))
        .filter(|p| p.im >= -1e-12)
        .map(|p| if p.im.abs() < 1e-12 { C64::new(p.re, 0.0) } else { p })
        .collect();

    let bilinear = |s: C64| (C64::new(fs2, 0.0) + s) / (C64::new(fs2, 0.0) - s);
    let section_from_poles = |z1: C64, z2: C64, b: [f64; 3]| Biquad {
        b,
        a: [1.0, -(z1 + z2).re, (z1 * z2).re],
    };

    let mut sections = Vec::new();
    let center_hz;
    if band.low_hz == 0.0 {
        let wc = warp(band.high_hz);
        // Low-pass: each section has a double zero at Nyquist.
        for p in &proto {
            let s = p * wc;
            let z = bilinear(s);
            if p.im == 0.0 {
                // First-order pole embedded as a biquad with a2 = 0.
                sections.push(Biquad {
                    b: [1.0, 1.0, 0.0],
                    a: [1.0, -z.re, 0.0],
                });
            } else {
                sections.push(section_from_poles(z, z.conj(), [1.0, 2.0, 1.0]));
            }
        }
        center_hz = 0.0;
    } else {
        let w1 = warp(band.low_hz);
        let w2 = warp(band.high_hz);
        let bw = w2 - w1;
        let w0 = (w1 * w2).sqrt();
        for p in &proto {
            // Roots of s^2 - p*bw*s + w0^2.
            let half = p * (bw / 2.0);
            let disc = (half * half - C64::new(w0 * w0, 0.0)).sqrt();
            let (s1, s2) = (half + disc, half - disc);
            let (z1, z2) = (bilinear(s1), bilinear(s2));
            if p.im == 0.0 {
                sections.push(section_from_poles(z1, z2, [1.0, 0.0, -1.0]));
            } else {
                sections.push(section_from_poles(z1, z1.conj(), [1.0, 0.0, -1.0]));
                sections.push(section_from_poles(z2, z2.conj(), [1.0, 0.0, -1.0]));
            }
        }
        center_hz = fs / PI * (w0 / fs2).atan();
    }

    for sec in &sections {
        let r = sec.pole_radii();
        if !(r[0] < MAX_POLE_RADIUS && r[1] < MAX_POLE_RADIUS) || sec.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "unstable design for band '{}' at order {order}: edges too close to DC/Nyquist",
                band.name
            )));
        }
    }

    // Unit gain at the center frequency, spread evenly over sections.
    let z_inv = C64::from_polar(1.0, -2.0 * PI * center_hz / fs);
    for sec in &mut sections {
        let g = sec.response(z_inv).norm();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::numeric("degenerate section gain"));
        }
        for v in &mut sec.b {
            *v /= g;
        }
    }

    Ok(FilterDesign {
        sections,
        band: band.clone(),
        order,
    })
}

impl FilterDesign {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> C64 {
        let z_inv = C64::from_polar(1.0, -2.0 * PI * freq_hz / self.band.sample_rate_hz);
        self.sections
            .iter()
            .fold(C64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.pole_radii())
            .fold(0.0, f64::max)
    }

    /// Samples for the slowest pole's envelope to decay by a factor `e`.
    pub fn settling_len(&self) -> usize {
        let r = self.max_pole_radius();
        if r <= 0.0 {
            return 1;
        }
        (-1.0 / r.ln()).ceil().max(1.0) as usize
    }

    /// Reflective padding applied on each side of a series of length `n`:
    /// three settling lengths, capped at `n - 1`.
    pub fn pad_len(&self, n: usize) -> usize {
        (3 * self.settling_len()).min(n.saturating_sub(1))
    }

    /// Shortest block that [`filter_block`] accepts.
    pub fn min_block_len(&self) -> usize {
        self.settling_len() + 1
    }

    /// Causal filtering with the given per-section states.
    fn run(&self, x: &mut [f64], states: &mut [[f64; 2]]) {
        for (sec, st) in self.sections.iter().zip(states.iter_mut()) {
            let [b0, b1, b2] = sec.b;
            let [_, a1, a2] = sec.a;
            let (mut s1, mut s2) = (st[0], st[1]);
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + s1;
                s1 = b1 * xin - a1 * y + s2;
                s2 = b2 * xin - a2 * y;
                *v = y;
            }
            *st = [s1, s2];
        }
    }

    /// Steady-state section states for a unit step input.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|sec| {
                let [_, b1, b2] = sec.b;
                let [_, a1, a2] = sec.a;
                let gain = sec.b.iter().sum::<f64>() / sec.a.iter().sum::<f64>();
                let y = gain * level;
                let s2 = b2 * level - a2 * y;
                let s1 = b1 * level - a1 * y + s2;
                level = y;
                [s1, s2]
            })
            .collect()
    }

    /// Zero-phase (forward-backward) filtering of one series with odd
    /// reflective padding.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        if n < self.min_block_len() {
            return Err(Error::invalid(format!(
                "series of length {n} is shorter than the minimum {} for band '{}'",
                self.min_block_len(),
                self.band.name
            )));
        }
        let pad = self.pad_len(n);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.step_states();
        let scaled = |v: f64| zi.iter().map(|s| [s[0] * v, s[1] * v]).collect::<Vec<_>>();

        let mut st = scaled(ext[0]);
        self.run(&mut ext, &mut st);
        ext.reverse();
        let mut st = scaled(ext[0]);
        self.run(&mut ext, &mut st);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Filter every channel of a block forward-backward.
pub fn filter_block(block: &MtsBlock, design: &FilterDesign) -> Result<MtsBlock> {
    if block.sample_rate_hz() != design.band.sample_rate_hz {
        return Err(Error::invalid(format!(
            "block sampled at {} Hz, design at {} Hz",
            block.sample_rate_hz(),
            design.band.sample_rate_hz
        )));
    }
    let chans = block
        .channels()
        .iter()
        .map(|c| design.filtfilt(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(block.with_channels(chans))
}

/// Filter every block of a dataset; blocks are processed in parallel and
/// collected in order.
pub fn filter_dataset(dataset: &MtsDataset, design: &FilterDesign) -> Result<MtsDataset> {
    use rayon::prelude::*;
    let blocks = dataset
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(b, blk)| filter_block(blk, design).map_err(|e| e.in_block(b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MtsDataset::new(blocks, false)?.with_band(Some(design.band.clone())))
}
