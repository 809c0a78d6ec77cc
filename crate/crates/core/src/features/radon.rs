//! Discrete radon transform: line sums of the mean-removed intensity.
//!
//! Lines are binned on absolute image coordinates, so the profile of a large
//! region is exactly the bin-wise sum of the profiles of any tiling of it.

use std::f64::consts::PI;

use super::image::{GrayImage, Integral, Rect};

pub const RADON_ANGLES: usize = 12;
/// Two strongest line sums per angle.
pub const RADON_DIMS: usize = 2 * RADON_ANGLES;

#[derive(Debug, Clone, Default)]
pub(crate) struct Profile {
    lo: i64,
    sums: Vec<f64>,
    counts: Vec<f64>,
}

impl Profile {
    pub fn add(&mut self, other: &Profile) {
        if other.sums.is_empty() {
            return;
        }
        if self.sums.is_empty() {
            *self = other.clone();
            return;
        }
        let lo = self.lo.min(other.lo);
        let hi = (self.lo + self.sums.len() as i64).max(other.lo + other.sums.len() as i64);
        if lo < self.lo || hi > self.lo + self.sums.len() as i64 {
            let mut sums = vec![0.0; (hi - lo) as usize];
            let mut counts = vec![0.0; (hi - lo) as usize];
            let off = (self.lo - lo) as usize;
            sums[off..off + self.sums.len()].copy_from_slice(&self.sums);
            counts[off..off + self.counts.len()].copy_from_slice(&self.counts);
            self.lo = lo;
            self.sums = sums;
            self.counts = counts;
        }
        let off = (other.lo - self.lo) as usize;
        for (i, (s, c)) in other.sums.iter().zip(&other.counts).enumerate() {
            self.sums[off + i] += s;
            self.counts[off + i] += c;
        }
    }
}

pub(crate) type Profiles = [Profile; RADON_ANGLES];

pub(crate) struct RadonTables {
    cos: [f64; RADON_ANGLES],
    sin: [f64; RADON_ANGLES],
}

impl RadonTables {
    pub fn new() -> Self {
        let mut cos = [0.0; RADON_ANGLES];
        let mut sin = [0.0; RADON_ANGLES];
        for k in 0..RADON_ANGLES {
            let a = k as f64 * PI / RADON_ANGLES as f64;
            cos[k] = a.cos();
            sin[k] = a.sin();
        }
        Self { cos, sin }
    }

    pub fn profiles(&self, img: &GrayImage, r: Rect) -> Profiles {
        std::array::from_fn(|k| {
            let (c, s) = (self.cos[k], self.sin[k]);
            let corners = [
                (r.x as f64 + 0.5, r.y as f64 + 0.5),
                (r.x_end() as f64 - 0.5, r.y as f64 + 0.5),
                (r.x as f64 + 0.5, r.y_end() as f64 - 0.5),
                (r.x_end() as f64 - 0.5, r.y_end() as f64 - 0.5),
            ];
            let ts = corners.map(|(x, y)| (x * c + y * s).round() as i64);
            let lo = *ts.iter().min().unwrap() - 1;
            let hi = *ts.iter().max().unwrap() + 1;
            let n = (hi - lo + 1) as usize;
            let mut sums = vec![0.0; n];
            let mut counts = vec![0.0; n];
            // Shift so truncation equals rounding on non-negative values.
            let shift = 0.5 - lo as f64;
            let xs: Vec<f64> = (r.x..r.x_end()).map(|x| (x as f64 + 0.5) * c + shift).collect();
            for y in r.y..r.y_end() {
                let ys = (y as f64 + 0.5) * s;
                let row = &img.data[y * img.width + r.x..y * img.width + r.x_end()];
                for (xv, &px) in xs.iter().zip(row) {
                    let b = (xv + ys) as usize;
                    sums[b] += px;
                    counts[b] += 1.0;
                }
            }
            Profile { lo, sums, counts }
        })
    }
}

/// Bin-wise sum of several profile sets, allocating each angle once.
pub(crate) fn sum(parts: &[&Profiles]) -> Profiles {
    std::array::from_fn(|k| {
        let live = || parts.iter().map(|p| &p[k]).filter(|p| !p.sums.is_empty());
        let Some(lo) = live().map(|p| p.lo).min() else {
            return Profile::default();
        };
        let hi = live().map(|p| p.lo + p.sums.len() as i64).max().unwrap();
        let mut acc = Profile {
            lo,
            sums: vec![0.0; (hi - lo) as usize],
            counts: vec![0.0; (hi - lo) as usize],
        };
        for p in live() {
            acc.add(p);
        }
        acc
    })
}

/// Two largest mean-removed line sums per angle, scaled by the longest line.
pub(crate) fn describe(profiles: &Profiles, mean: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), RADON_DIMS);
    for (k, p) in profiles.iter().enumerate() {
        let longest = p.counts.iter().copied().fold(0.0, f64::max);
        let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (s, &c) in p.sums.iter().zip(&p.counts) {
            if c == 0.0 {
                continue;
            }
            let v = (s - mean * c) / longest;
            if v > best {
                second = best;
                best = v;
            } else if v > second {
                second = v;
            }
        }
        out[2 * k] = if best.is_finite() { best } else { 0.0 };
        out[2 * k + 1] = if second.is_finite() { second } else { 0.0 };
    }
}

/// Radon descriptor of a whole image.
pub fn radon(img: &GrayImage) -> Vec<f64> {
    let tables = RadonTables::new();
    let r = img.full();
    let profiles = tables.profiles(img, r);
    let mean = Integral::new(img.width, img.height, &img.data).mean(r);
    let mut out = vec![0.0; RADON_DIMS];
    describe(&profiles, mean, &mut out);
    out
}
