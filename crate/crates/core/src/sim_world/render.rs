use serde::{Deserialize, Serialize};

use super::noise::{unit_hash, value_noise};
use super::scenario::{ForestScenario, Tree};
use crate::geom::{Pose2, Vec2};
use crate::D_MAX;

/// Distance over which contrast fades halfway-ish to the haze level.
const HAZE_LENGTH: f64 = 30.0;
const HAZE_LEVEL: f64 = 0.72;
const SENSOR_NOISE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mount {
    Forward,
    Downward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub horizontal_fov: f64,
    pub mount: Mount,
    /// Fixed flight altitude of the optical centre in metres.
    pub altitude: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::forward(320, 240)
    }
}

impl CameraModel {
    /// Forward camera with the default 75° horizontal field of view at 1.5 m.
    pub fn forward(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            horizontal_fov: 75f64.to_radians(),
            mount: Mount::Forward,
            altitude: 1.5,
        }
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.horizontal_fov).tan()
    }

    pub fn cx(&self) -> f64 {
        0.5 * self.width as f64
    }

    pub fn cy(&self) -> f64 {
        0.5 * self.height as f64
    }

    /// Body-frame bearing (left positive) of the ray through horizontal pixel
    /// coordinate `u` (continuous, pixel centres at `i + 0.5`).
    pub fn bearing_of(&self, u: f64) -> f64 {
        ((self.cx() - u) / self.focal_px()).atan()
    }

    /// Inverse of [`bearing_of`](Self::bearing_of).
    pub fn column_of(&self, bearing: f64) -> f64 {
        self.cx() - bearing.tan() * self.focal_px()
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0
            && self.height > 0
            && self.horizontal_fov > 0.0
            && self.horizontal_fov < std::f64::consts::PI
    }
}

/// A rendered grayscale frame with its ground-truth depth.
///
/// Depth is the horizontal range to the first tree along each pixel's
/// column ray, so every row of a column shares one depth. Open space reads
/// [`D_MAX`].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in [0, 1].
    pub pixels: Vec<f64>,
    /// Row-major depths in (0, D_MAX].
    pub true_depth: Vec<f64>,
    pub camera_pose: Pose2,
    pub camera: CameraModel,
    pub timestamp: f64,
}

impl Frame {
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> f64 {
        self.true_depth[y * self.width + x]
    }
}

struct Hit {
    range: f64,
    tree: usize,
}

/// Nearest intersection of a ray with the tree disks, if closer than `D_MAX`.
fn cast(trees: &[Tree], origin: Vec2, dir: Vec2) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, t) in trees.iter().enumerate() {
        let oc = origin - t.center();
        let b = oc.dot(dir);
        let c = oc.dot(oc) - t.radius * t.radius;
        if c > 0.0 && b > 0.0 {
            continue; // outside and pointing away
        }
        let disc = b * b - c;
        if disc < 0.0 {
            continue;
        }
        let range = if c <= 0.0 {
            // origin inside the trunk
            1e-3
        } else {
            -b - disc.sqrt()
        };
        if range < D_MAX && best.as_ref().map_or(true, |h| range < h.range) {
            best = Some(Hit { range, tree: i });
        }
    }
    best
}

fn tree_seed(scenario: &ForestScenario, idx: usize) -> u64 {
    super::noise::hash_u64(scenario.seed, idx as u64, 0x7EE5)
}

/// Bark: strong vertical ridges with slower vertical modulation.
fn bark(seed: u64, arc: f64, z: f64) -> f64 {
    let ridges = value_noise(seed, arc / 0.07, z / 0.9);
    let blotch = value_noise(seed ^ 0x55, arc / 0.35, z / 0.35);
    0.65 * ridges + 0.35 * blotch
}

/// Render a frame from `pose`. Poses outside the scenario bounds see no trees.
pub fn render(scenario: &ForestScenario, pose: &Pose2, camera: &CameraModel, timestamp: f64) -> Frame {
    let (w, h) = (camera.width, camera.height);
    let f = camera.focal_px();
    let (cx, cy) = (camera.cx(), camera.cy());
    let origin = pose.position();
    let inside = scenario.bounds.contains(origin);
    let frame_key = timestamp.to_bits() ^ pose.x.to_bits().rotate_left(17) ^ pose.y.to_bits().rotate_left(33);
    let gain = 0.92 + 0.16 * unit_hash(scenario.seed, frame_key, 1);

    let mut pixels = vec![0.0; w * h];
    let mut true_depth = vec![D_MAX; w * h];

    for u in 0..w {
        let a = (cx - (u as f64 + 0.5)) / f;
        let q = (1.0 + a * a).sqrt();
        let angle = pose.yaw + a.atan();
        let dir = Vec2::unit(angle);
        let hit = if inside {
            cast(&scenario.trees, origin, dir)
        } else {
            None
        };

        let mut tree_info = None;
        if let Some(hit) = &hit {
            for v in 0..h {
                true_depth[v * w + u] = hit.range;
            }
            let t = &scenario.trees[hit.tree];
            let p = origin + dir * hit.range;
            let n = (p - t.center()).normalized();
            let theta = n.y.atan2(n.x);
            let facing = (-n.dot(dir)).clamp(0.0, 1.0);
            let seed = tree_seed(scenario, hit.tree);
            let base = 0.18 + 0.25 * unit_hash(seed, 1, 2);
            tree_info = Some((hit.range, theta * t.radius, facing, seed, base));
        }

        for v in 0..h {
            let slope = (cy - (v as f64 + 0.5)) / f;
            let ground_range = if slope < 0.0 {
                camera.altitude / -slope * q
            } else {
                f64::INFINITY
            };

            let (obj, range) = match tree_info {
                Some((range, arc, facing, seed, base)) if range <= ground_range => {
                    let z = camera.altitude + range / q * slope;
                    let shade = 0.55 + 0.45 * facing;
                    (base * shade * (0.55 + 0.9 * bark(seed, arc, z)), range)
                }
                _ if slope < 0.0 => {
                    let g = origin + dir * ground_range;
                    let tex = 0.6 * value_noise(scenario.seed ^ 0x6A0, g.x / 0.25, g.y / 0.25)
                        + 0.4 * value_noise(scenario.seed ^ 0x6A1, g.x / 1.5, g.y / 1.5);
                    (0.32 + 0.22 * tex, ground_range)
                }
                _ => (0.78 + 0.18 * (2.0 * slope).min(1.0), f64::INFINITY),
            };

            let fade = (-range / HAZE_LENGTH).exp();
            let mut value = obj * fade + HAZE_LEVEL * (1.0 - fade);
            value *= gain;
            let n = unit_hash(frame_key, u as u64, v as u64) - 0.5;
            value += SENSOR_NOISE * n;
            pixels[v * w + u] = value.clamp(0.0, 1.0);
        }
    }

    Frame {
        width: w,
        height: h,
        pixels,
        true_depth,
        camera_pose: *pose,
        camera: *camera,
        timestamp,
    }
}
