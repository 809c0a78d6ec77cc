//! Laws' texture energy from the nine 3×3 masks.

use super::image::{convolve_1d, GrayImage, Integral, Rect};

pub const LAWS_DIMS: usize = 9;

const L3: [f64; 3] = [1.0, 2.0, 1.0];
const E3: [f64; 3] = [-1.0, 0.0, 1.0];
const S3: [f64; 3] = [-1.0, 2.0, -1.0];
const BASIS: [[f64; 3]; 3] = [L3, E3, S3];

/// Half-width of the local-mean window removed before filtering.
const MEAN_RADIUS: usize = 2;

pub(crate) struct LawsMaps {
    energy: Vec<Integral>,
}

impl LawsMaps {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width, img.height);
        let ii = Integral::new(w, h, &img.data);
        let mut centred = vec![0.0; w * h];
        for y in 0..h {
            let y0 = y.saturating_sub(MEAN_RADIUS);
            let y1 = (y + MEAN_RADIUS + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(MEAN_RADIUS);
                let x1 = (x + MEAN_RADIUS + 1).min(w);
                let m = ii.mean(Rect::new(x0, y0, x1 - x0, y1 - y0));
                centred[y * w + x] = img.data[y * w + x] - m;
            }
        }
        let horizontal: Vec<Vec<f64>> = BASIS
            .iter()
            .map(|k| convolve_1d(&centred, w, h, k, true))
            .collect();
        let mut energy = Vec::with_capacity(LAWS_DIMS);
        // Mask (i, j) = outer(BASIS[i] vertical, BASIS[j] horizontal).
        for vertical in &BASIS {
            for hz in &horizontal {
                let resp = convolve_1d(hz, w, h, vertical, false);
                let abs: Vec<f64> = resp.iter().map(|v| v.abs()).collect();
                energy.push(Integral::new(w, h, &abs));
            }
        }
        Self { energy }
    }

    pub fn region(&self, r: Rect, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.energy) {
            *o = e.mean(r);
        }
    }
}

pub fn laws_masks(img: &GrayImage) -> [f64; LAWS_DIMS] {
    let maps = LawsMaps::new(img);
    let mut out = [0.0; LAWS_DIMS];
    maps.region(img.full(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_image_has_no_energy() {
        let img = GrayImage::from_fn(10, 10, |_, _| 0.9);
        assert!(laws_masks(&img).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn vertical_stripes_excite_horizontal_edge_masks() {
        // Columns alternate, so horizontal derivatives dominate vertical ones.
        let img = GrayImage::from_fn(16, 16, |x, _| (x % 4) as f64 * 0.25);
        let e = laws_masks(&img);
        // L3ᵀE3 (vertical smoothing × horizontal edge) vs E3ᵀL3.
        assert!(e[1] > 10.0 * e[3].max(1e-12), "{e:?}");
    }
}
