//! Structure tensor texture statistics.

use super::image::{convolve_1d, GrayImage, Integral, Rect};
use super::EPS;

pub const STRUCTURE_DIMS: usize = 3;

/// Binomial approximation of a σ = 1 Gaussian.
const SMOOTH: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

pub(crate) struct StructureMaps {
    major: Integral,
    minor: Integral,
    coherence: Integral,
}

impl StructureMaps {
    pub fn new(width: usize, height: usize, gx: &[f64], gy: &[f64]) -> Self {
        let smooth = |v: Vec<f64>| {
            let h = convolve_1d(&v, width, height, &SMOOTH, true);
            convolve_1d(&h, width, height, &SMOOTH, false)
        };
        let jxx = smooth(gx.iter().map(|g| g * g).collect());
        let jxy = smooth(gx.iter().zip(gy).map(|(a, b)| a * b).collect());
        let jyy = smooth(gy.iter().map(|g| g * g).collect());

        let n = width * height;
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        let mut coh = vec![0.0; n];
        for i in 0..n {
            let half_trace = 0.5 * (jxx[i] + jyy[i]);
            let root = (0.25 * (jxx[i] - jyy[i]).powi(2) + jxy[i] * jxy[i]).sqrt();
            let a = half_trace + root;
            let b = (half_trace - root).max(0.0);
            l1[i] = a;
            l2[i] = b;
            coh[i] = (a - b) / (a + b + EPS);
        }
        Self {
            major: Integral::new(width, height, &l1),
            minor: Integral::new(width, height, &l2),
            coherence: Integral::new(width, height, &coh),
        }
    }

    /// `[mean λ1, mean λ2, mean coherence]` over the region.
    pub fn region(&self, r: Rect, out: &mut [f64]) {
        out[0] = self.major.mean(r);
        out[1] = self.minor.mean(r);
        out[2] = self.coherence.mean(r);
    }
}

pub fn structure_tensor(img: &GrayImage) -> [f64; STRUCTURE_DIMS] {
    let (gx, gy) = img.gradients();
    let maps = StructureMaps::new(img.width, img.height, &gx, &gy);
    let mut out = [0.0; STRUCTURE_DIMS];
    maps.region(img.full(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_image_is_zero() {
        let img = GrayImage::from_fn(12, 12, |_, _| 0.7);
        assert_eq!(structure_tensor(&img), [0.0; 3]);
    }

    #[test]
    fn stripes_are_coherent_and_noise_is_not() {
        let stripes = GrayImage::from_fn(24, 24, |x, _| (x as f64 * 0.8).sin());
        let s = structure_tensor(&stripes);
        assert!(s[0] > 0.0 && s[1] < 1e-12 && s[2] > 0.9, "{s:?}");

        let noise = GrayImage::from_fn(24, 24, |x, y| crate::sim_world::unit_hash(1, x as u64, y as u64));
        let n = structure_tensor(&noise);
        assert!(n[2] < s[2] && n[1] > 0.0);
    }
}
