//! Grayscale image buffers, rectangles and summed-area tables.

use crate::sim_world::Frame;

/// Pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn x_end(&self) -> usize {
        self.x + self.w
    }

    pub fn y_end(&self) -> usize {
        self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "buffer size mismatch");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn from_frame(frame: &Frame) -> Self {
        Self::new(frame.width, frame.height, frame.pixels.clone())
    }

    pub fn full(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped to the image.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Central-difference gradients; one-sided at the border.
    pub fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.width, self.height);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
                if x1 > x0 {
                    gx[y * w + x] = (self.at(x1, y) - self.at(x0, y)) / (x1 - x0) as f64;
                }
                if y1 > y0 {
                    gy[y * w + x] = (self.at(x, y1) - self.at(x, y0)) / (y1 - y0) as f64;
                }
            }
        }
        (gx, gy)
    }
}

/// Summed-area table for O(1) rectangle sums.
#[derive(Debug, Clone)]
pub struct Integral {
    stride: usize,
    sums: Vec<f64>,
}

impl Integral {
    pub fn new(width: usize, height: usize, values: &[f64]) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values[y * width + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    pub fn sum(&self, r: Rect) -> f64 {
        let s = self.stride;
        let (x0, y0, x1, y1) = (r.x, r.y, r.x_end(), r.y_end());
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0] + self.sums[y0 * s + x0]
    }

    pub fn mean(&self, r: Rect) -> f64 {
        if r.area() == 0 {
            return 0.0;
        }
        self.sum(r) / r.area() as f64
    }
}

/// Separable 1D convolution along rows (`horizontal`) or columns, clamped borders.
pub(crate) fn convolve_1d(src: &[f64], w: usize, h: usize, kernel: &[f64], horizontal: bool) -> Vec<f64> {
    let half = kernel.len() / 2;
    let mut out = vec![0.0; w * h];
    if horizontal {
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (x, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                if x >= half && x + half < w {
                    let win = &row[x - half..x - half + kernel.len()];
                    for (k, v) in kernel.iter().zip(win) {
                        acc += k * v;
                    }
                } else {
                    for (k, &kv) in kernel.iter().enumerate() {
                        let sx = (x as isize + k as isize - half as isize).clamp(0, w as isize - 1);
                        acc += kv * row[sx as usize];
                    }
                }
                *d = acc;
            }
        }
    } else {
        for (k, &kv) in kernel.iter().enumerate() {
            for y in 0..h {
                let sy = (y as isize + k as isize - half as isize).clamp(0, h as isize - 1) as usize;
                let srow = &src[sy * w..(sy + 1) * w];
                let dst = &mut out[y * w..(y + 1) * w];
                for (d, v) in dst.iter_mut().zip(srow) {
                    *d += kv * v;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_matches_brute_force() {
        let img = GrayImage::from_fn(13, 9, |x, y| ((x * 7 + y * 3) % 5) as f64 * 0.1);
        let ii = Integral::new(img.width, img.height, &img.data);
        for r in [Rect::new(0, 0, 13, 9), Rect::new(2, 3, 4, 5), Rect::new(12, 8, 1, 1)] {
            let mut brute = 0.0;
            for y in r.y..r.y_end() {
                for x in r.x..r.x_end() {
                    brute += img.at(x, y);
                }
            }
            assert!((ii.sum(r) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_ramp() {
        let img = GrayImage::from_fn(8, 4, |x, _| x as f64 * 0.1);
        let (gx, gy) = img.gradients();
        assert!(gx.iter().all(|g| (g - 0.1).abs() < 1e-12));
        assert!(gy.iter().all(|&g| g == 0.0));
    }
}
