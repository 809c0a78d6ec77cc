//! Forward-camera optical flow statistics.
//!
//! In simulation the flow field is the exact image motion of every pixel's
//! world point between the previous and the current camera pose, plus
//! per-pixel noise.

use super::image::{Integral, Rect};
use crate::sim_world::Frame;

pub const FLOW_DIMS: usize = 3;

/// Default per-component pixel noise on the simulated flow field.
pub const FLOW_NOISE_PX: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    /// Horizontal image motion, prev → current, in pixels.
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            du: vec![0.0; width * height],
            dv: vec![0.0; width * height],
        }
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.du.iter().zip(&self.dv).map(|(u, v)| u.hypot(*v)).collect()
    }
}

/// Approximately unit-variance noise: four 16-bit uniforms from one hash.
fn gauss_hash(seed: u64, a: u64, b: u64) -> f64 {
    let h = crate::sim_world::hash_u64(seed, a, b);
    let s: f64 = (0..4).map(|k| ((h >> (16 * k)) & 0xFFFF) as f64 / 65536.0).sum();
    (s - 2.0) * 3f64.sqrt()
}

/// Image motion of the current frame's scene points as seen from `prev`.
pub fn front_flow_field(frame: &Frame, prev: &Frame, noise_px: f64) -> FlowField {
    let cam = &frame.camera;
    let (w, h) = (frame.width, frame.height);
    let f = cam.focal_px();
    let (cx, cy) = (cam.cx(), cam.cy());
    let seed = frame.timestamp.to_bits() ^ 0xF10F;
    // Relative pose of the current camera in the previous camera's frame.
    let rel = prev.camera_pose;
    let cur = frame.camera_pose;
    let (s0, c0) = rel.yaw.sin_cos();
    let dx = cur.x - rel.x;
    let dy = cur.y - rel.y;
    let tx = c0 * dx + s0 * dy;
    let ty = -s0 * dx + c0 * dy;
    let (sr, cr) = (cur.yaw - rel.yaw).sin_cos();

    let mut field = FlowField::zeros(w, h);
    for u in 0..w {
        let a = (cx - (u as f64 + 0.5)) / f;
        let q = (1.0 + a * a).sqrt();
        for v in 0..h {
            let i = v * w + u;
            let slope = (cy - (v as f64 + 0.5)) / f;
            let forward = frame.true_depth[i] / q;
            let lateral = forward * a;
            let lx = tx + cr * forward - sr * lateral;
            let ly = ty + sr * forward + cr * lateral;
            let (pu, pv) = if lx > 1e-3 {
                (cx - f * ly / lx, cy - f * forward * slope / lx)
            } else {
                (u as f64 + 0.5, v as f64 + 0.5)
            };
            let mut du = u as f64 + 0.5 - pu;
            let mut dv = v as f64 + 0.5 - pv;
            if noise_px > 0.0 {
                du += noise_px * gauss_hash(seed, u as u64, v as u64);
                dv += noise_px * gauss_hash(seed ^ 0xABCD, u as u64, v as u64);
            }
            field.du[i] = du;
            field.dv[i] = dv;
        }
    }
    field
}

pub(crate) struct FlowMaps {
    width: usize,
    mag: Vec<f64>,
    integral: Integral,
}

impl FlowMaps {
    pub fn new(field: &FlowField) -> Self {
        let mag = field.magnitude();
        let integral = Integral::new(field.width, field.height, &mag);
        Self {
            width: field.width,
            mag,
            integral,
        }
    }

    pub fn region(&self, r: Rect, out: &mut [f64]) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in r.y..r.y_end() {
            for &m in &self.mag[y * self.width + r.x..y * self.width + r.x_end()] {
                lo = lo.min(m);
                hi = hi.max(m);
            }
        }
        out[0] = self.integral.mean(r);
        out[1] = lo;
        out[2] = hi;
    }
}

/// `[mean, min, max]` flow magnitude over `region`.
pub fn flow_stats(field: &FlowField, region: Rect) -> [f64; FLOW_DIMS] {
    let mut out = [0.0; FLOW_DIMS];
    FlowMaps::new(field).region(region, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Bounds, Pose2};
    use crate::sim_world::{render, CameraModel, ForestScenario};

    fn open_frames(prev: Pose2, cur: Pose2) -> (Frame, Frame) {
        let s = ForestScenario::empty(Bounds::new(-50.0, -50.0, 50.0, 50.0));
        let cam = CameraModel::default();
        (render(&s, &cur, &cam, 1.0), render(&s, &prev, &cam, 0.9))
    }

    #[test]
    fn zero_motion_zero_flow() {
        let p = Pose2::new(0.0, 0.0, 0.3);
        let (f, prev) = open_frames(p, p);
        let field = front_flow_field(&f, &prev, 0.0);
        let s = flow_stats(&field, Rect::new(0, 0, 320, 240));
        assert!(s.iter().all(|v| v.abs() < 1e-9), "{s:?}");
    }

    #[test]
    fn forward_motion_grows_toward_periphery() {
        let (f, prev) = open_frames(Pose2::new(0.0, 0.0, 0.0), Pose2::new(0.5, 0.0, 0.0));
        let field = front_flow_field(&f, &prev, 0.0);
        let center = flow_stats(&field, Rect::new(144, 112, 32, 16))[0];
        let mid = flow_stats(&field, Rect::new(64, 112, 32, 16))[0];
        let edge = flow_stats(&field, Rect::new(0, 112, 32, 16))[0];
        assert!(center < mid && mid < edge, "{center} {mid} {edge}");
        let corner = flow_stats(&field, Rect::new(0, 0, 32, 32))[0];
        assert!(corner > edge);
    }

    #[test]
    fn single_pixel_region() {
        let (f, prev) = open_frames(Pose2::new(0.0, 0.0, 0.0), Pose2::new(0.2, 0.1, 0.05));
        let field = front_flow_field(&f, &prev, FLOW_NOISE_PX);
        let s = flow_stats(&field, Rect::new(40, 30, 1, 1));
        assert!((s[0] - s[1]).abs() < 1e-9);
        assert_eq!(s[1], s[2]);
    }
}
