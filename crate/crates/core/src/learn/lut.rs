//! Over/under-prediction correction table.
//!
//! Predictions are rounded to the nearest whole metre. Within each bin the
//! mean over-prediction and mean under-prediction are recorded; the near
//! correction of bin `d` is `d` minus the mean over-prediction and the far
//! correction is `d` plus the mean under-prediction.

use serde::{Deserialize, Serialize};

use crate::D_MAX;

/// A side of a bin with fewer samples than this falls back to identity.
pub const MIN_BIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutBin {
    pub depth: u32,
    pub d_near: f64,
    pub d_far: f64,
    /// Over-predictions (prediction above truth) seen in this bin.
    pub n_near: usize,
    /// Under-predictions seen in this bin.
    pub n_far: usize,
}

impl LutBin {
    fn identity(depth: u32) -> Self {
        let d = depth as f64;
        Self {
            depth,
            d_near: d,
            d_far: d,
            n_near: 0,
            n_far: 0,
        }
    }

    pub fn is_populated(&self) -> bool {
        self.n_near >= MIN_BIN_SAMPLES || self.n_far >= MIN_BIN_SAMPLES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLUT {
    /// Bins for depths `1..=D_MAX`, in order.
    pub bins: Vec<LutBin>,
}

fn max_bin() -> u32 {
    D_MAX as u32
}

fn bin_of(depth: f64) -> u32 {
    (depth.round().max(1.0) as u32).min(max_bin())
}

impl ErrorLUT {
    pub fn identity() -> Self {
        Self {
            bins: (1..=max_bin()).map(LutBin::identity).collect(),
        }
    }

    pub fn bin(&self, depth: u32) -> &LutBin {
        &self.bins[(depth.clamp(1, max_bin()) - 1) as usize]
    }

    /// Near and far corrections of one predicted depth. The offsets of its
    /// bin are applied to the raw value, so `near ≤ depth ≤ far`.
    pub fn apply(&self, depth: f64) -> (f64, f64) {
        let b = self.bin(bin_of(depth));
        let d = b.depth as f64;
        let near = depth - (d - b.d_near);
        let far = depth + (b.d_far - d);
        (near.clamp(0.5, D_MAX), far.clamp(0.5, D_MAX))
    }
}

/// Build the table from paired predictions and true depths.
pub fn build_lut(pred: &[f64], truth: &[f64]) -> ErrorLUT {
    assert_eq!(pred.len(), truth.len(), "prediction/truth length");
    let nb = max_bin() as usize;
    let mut over = vec![(0.0, 0usize); nb];
    let mut under = vec![(0.0, 0usize); nb];
    for (&p, &t) in pred.iter().zip(truth) {
        if !p.is_finite() || !t.is_finite() {
            continue;
        }
        let i = (bin_of(p) - 1) as usize;
        if p > t {
            over[i].0 += p - t;
            over[i].1 += 1;
        } else if t > p {
            under[i].0 += t - p;
            under[i].1 += 1;
        }
    }
    let bins = (0..nb)
        .map(|i| {
            let mut b = LutBin::identity(i as u32 + 1);
            let d = b.depth as f64;
            b.n_near = over[i].1;
            b.n_far = under[i].1;
            if b.n_near >= MIN_BIN_SAMPLES {
                b.d_near = d - over[i].0 / b.n_near as f64;
            }
            if b.n_far >= MIN_BIN_SAMPLES {
                b.d_far = d + under[i].0 / b.n_far as f64;
            }
            b
        })
        .collect();
    ErrorLUT { bins }
}

/// Near and far variants of a whole grid of predicted depths.
pub fn apply_lut(lut: &ErrorLUT, depths: &[f64]) -> (Vec<f64>, Vec<f64>) {
    depths.iter().map(|&d| lut.apply(d)).unzip()
}
