//! Histogram of oriented gradients over a 2×2 cell layout.

use std::f64::consts::PI;

use super::image::{GrayImage, Rect};
use super::EPS;

pub const HOG_BINS: usize = 9;
/// 2×2 cells × 9 bins.
pub const HOG_DIMS: usize = 4 * HOG_BINS;

/// Per-pixel soft bin assignment of unsigned gradient orientation.
///
/// Bin centres sit at `k · 20°`; each pixel's magnitude is split linearly
/// between the two nearest centres.
pub(crate) struct OrientationMap {
    width: usize,
    bin: Vec<u8>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
}

impl OrientationMap {
    pub fn new(width: usize, gx: &[f64], gy: &[f64]) -> Self {
        let n = gx.len();
        let mut bin = vec![0u8; n];
        let mut w_lo = vec![0.0; n];
        let mut w_hi = vec![0.0; n];
        let bin_width = PI / HOG_BINS as f64;
        for i in 0..n {
            let mag = gx[i].hypot(gy[i]);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy[i].atan2(gx[i]);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            bin[i] = (lo as usize % HOG_BINS) as u8;
            w_lo[i] = (1.0 - frac) * mag;
            w_hi[i] = frac * mag;
        }
        Self {
            width,
            bin,
            w_lo,
            w_hi,
        }
    }

    pub fn region(&self, r: Rect, out: &mut [f64]) {
        debug_assert_eq!(out.len(), HOG_DIMS);
        out.iter_mut().for_each(|v| *v = 0.0);
        let cw = r.w.div_ceil(2);
        let ch = r.h.div_ceil(2);
        for y in r.y..r.y_end() {
            let cy = ((y - r.y) / ch).min(1);
            for x in r.x..r.x_end() {
                let cx = ((x - r.x) / cw).min(1);
                let i = y * self.width + x;
                let base = (cy * 2 + cx) * HOG_BINS;
                let b = self.bin[i] as usize;
                out[base + b] += self.w_lo[i];
                out[base + (b + 1) % HOG_BINS] += self.w_hi[i];
            }
        }
        for cell in out.chunks_mut(HOG_BINS) {
            let norm = (cell.iter().map(|v| v * v).sum::<f64>() + EPS).sqrt();
            cell.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// HOG descriptor of a whole image treated as one region.
pub fn hog(img: &GrayImage) -> Vec<f64> {
    let (gx, gy) = img.gradients();
    let map = OrientationMap::new(img.width, &gx, &gy);
    let mut out = vec![0.0; HOG_DIMS];
    map.region(img.full(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak_bin(desc: &[f64]) -> usize {
        let mut hist = [0.0; HOG_BINS];
        for cell in desc.chunks(HOG_BINS) {
            for (h, v) in hist.iter_mut().zip(cell) {
                *h += v;
            }
        }
        (0..HOG_BINS)
            .max_by(|&a, &b| hist[a].partial_cmp(&hist[b]).unwrap())
            .unwrap()
    }

    /// Smooth edge whose intensity gradient points along `angle`.
    fn oriented_edge(angle: f64) -> GrayImage {
        let (s, c) = angle.sin_cos();
        GrayImage::from_fn(32, 32, |x, y| {
            let t = (x as f64 - 15.5) * c + (y as f64 - 15.5) * s;
            1.0 / (1.0 + (-t / 2.0).exp())
        })
    }

    #[test]
    fn vertical_step_edge_fills_horizontal_gradient_bin() {
        let img = GrayImage::from_fn(16, 16, |x, _| if x < 8 { 0.2 } else { 0.8 });
        let d = hog(&img);
        assert_eq!(peak_bin(&d), 0);
        for cell in d.chunks(HOG_BINS) {
            let total: f64 = cell.iter().sum();
            assert!(cell[0] / total > 0.99);
        }
    }

    #[test]
    fn flat_region_is_zero() {
        let img = GrayImage::from_fn(16, 16, |_, _| 0.4);
        assert!(hog(&img).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotating_edge_by_one_bin_width_moves_peak() {
        let base = peak_bin(&hog(&oriented_edge(0.0)));
        let turned = peak_bin(&hog(&oriented_edge(20f64.to_radians())));
        assert_eq!(base, 0);
        assert_eq!(turned, 1);
        let turned2 = peak_bin(&hog(&oriented_edge(40f64.to_radians())));
        assert_eq!(turned2, 2);
    }

    #[test]
    fn cells_are_unit_norm_when_textured() {
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 5 + y * 11) % 7) as f64 / 7.0);
        for cell in hog(&img).chunks(HOG_BINS) {
            let n: f64 = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }
}
