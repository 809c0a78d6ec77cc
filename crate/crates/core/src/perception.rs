//! Runtime depth pipeline: frame → budgeted features → per-patch depth →
//! interpretations → obstacle points.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::features::{extract_patch_features, PatchGrid};
use crate::geom::{Pose2, Vec2};
use crate::learn::{DepthModel, ErrorLUT, ModelVariant};
use crate::sim_world::{CameraModel, Frame};
use crate::{Error, Result, D_MAX};

/// Closest depth the pipeline will report.
pub const MIN_DEPTH: f64 = 0.5;
/// Fraction of `D_MAX` at and beyond which a patch counts as open space.
pub const OPEN_SPACE_FRACTION: f64 = 0.95;

/// Per-patch depth over a patch grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub grid: PatchGrid,
    /// Row-major metres.
    pub depth: Vec<f64>,
    pub timestamp: f64,
    pub camera_pose: Pose2,
}

impl DepthGrid {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.depth[row * self.grid.cols + col]
    }

    fn with_depth(&self, depth: Vec<f64>) -> Self {
        Self {
            grid: self.grid,
            depth,
            timestamp: self.timestamp,
            camera_pose: self.camera_pose,
        }
    }
}

/// Write `row,col,predicted,true` for two grids of the same shape.
pub fn write_depth_comparison<W: Write>(pred: &DepthGrid, truth: &DepthGrid, out: W) -> Result<()> {
    if pred.grid != truth.grid {
        return Err(Error::InvalidArgument("depth grids differ in shape".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "predicted", "true"])?;
    for (i, (p, t)) in pred.depth.iter().zip(&truth.depth).enumerate() {
        let (r, c) = (i / pred.grid.cols, i % pred.grid.cols);
        w.write_record([r.to_string(), c.to_string(), p.to_string(), t.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    Near,
    Point,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpretationMode {
    Single,
    Multiple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpretationSet {
    pub mode: InterpretationMode,
    pub grids: Vec<(Interpretation, DepthGrid)>,
}

/// Depth per patch from the model variant that fits `budget_ms`.
pub fn predict_depth(frame: &Frame, prev: Option<&Frame>, model: &DepthModel, budget_ms: f64) -> Result<DepthGrid> {
    let grid = PatchGrid::for_frame(frame.width, frame.height, model.patch_size)?;
    predict_with_variant(frame, prev, &grid, model.variant_for_budget(budget_ms))
}

pub fn predict_with_variant(frame: &Frame, prev: Option<&Frame>, grid: &PatchGrid, variant: &ModelVariant) -> Result<DepthGrid> {
    if variant.regressor.dim() != variant.layout.dim() {
        return Err(Error::LayoutMismatch(format!(
            "regressor expects {} features, layout has {}",
            variant.regressor.dim(),
            variant.layout.dim()
        )));
    }
    let feats = extract_patch_features(frame, prev, grid, &variant.layout)?;
    let depth = (0..feats.n_patches())
        .map(|p| clamp_depth(variant.regressor.predict_row(feats.row(p))))
        .collect();
    Ok(DepthGrid {
        grid: *grid,
        depth,
        timestamp: frame.timestamp,
        camera_pose: frame.camera_pose,
    })
}

/// Clamp into `[MIN_DEPTH, D_MAX]`; non-finite values read as open space.
pub fn clamp_depth(d: f64) -> f64 {
    if d.is_nan() {
        D_MAX
    } else {
        d.clamp(MIN_DEPTH, D_MAX)
    }
}

/// Minimum true depth within each patch.
pub fn true_patch_depths(frame: &Frame, grid: &PatchGrid) -> Vec<f64> {
    let p = grid.patch_size;
    let mut out = Vec::with_capacity(grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let mut m = D_MAX;
            for y in r * p..(r + 1) * p {
                let row = &frame.true_depth[y * frame.width + c * p..y * frame.width + (c + 1) * p];
                m = row.iter().copied().fold(m, f64::min);
            }
            out.push(m);
        }
    }
    out
}

/// Ground-truth patch depths, optionally scaled by log-normal noise of
/// log-standard-deviation `noise_sigma`. The noise stream is keyed on
/// `seed` and the frame timestamp.
pub fn oracle_predict(frame: &Frame, grid: &PatchGrid, noise_sigma: f64, seed: u64) -> Result<DepthGrid> {
    let g = PatchGrid::for_frame(frame.width, frame.height, grid.patch_size)?;
    if g.rows < grid.rows || g.cols < grid.cols {
        return Err(Error::GridMismatch {
            patch_size: grid.patch_size,
            width: frame.width,
            height: frame.height,
        });
    }
    let mut depth = true_patch_depths(frame, grid);
    if noise_sigma > 0.0 {
        let dist = LogNormal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ frame.timestamp.to_bits().rotate_left(29));
        for d in &mut depth {
            *d = clamp_depth(*d * dist.sample(&mut rng));
        }
    }
    Ok(DepthGrid {
        grid: *grid,
        depth,
        timestamp: frame.timestamp,
        camera_pose: frame.camera_pose,
    })
}

/// One grid, or near/point/far grids from the correction table.
pub fn expand_interpretations(grid: DepthGrid, lut: &ErrorLUT, mode: InterpretationMode) -> InterpretationSet {
    let grids = match mode {
        InterpretationMode::Single => vec![(Interpretation::Point, grid)],
        InterpretationMode::Multiple => {
            let (near, far) = crate::learn::apply_lut(lut, &grid.depth);
            vec![
                (Interpretation::Near, grid.with_depth(near)),
                (Interpretation::Far, grid.with_depth(far)),
                (Interpretation::Point, grid),
            ]
        }
    };
    let mut set = InterpretationSet { mode, grids };
    set.grids.sort_by_key(|(tag, _)| *tag);
    set
}

/// An obstacle point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePoint {
    pub position: Vec2,
    /// Height relative to the optical centre; keeps the row recoverable.
    pub z: f64,
    /// Relative solid angle of the source patch (1 at the image centre).
    pub weight: f64,
}

/// Solid angle of a pixel at offset `(x, y)` from the principal point,
/// relative to the central pixel.
pub fn solid_angle_weight(f: f64, x: f64, y: f64) -> f64 {
    let r2 = f * f + x * x + y * y;
    f * f * f / (r2 * r2.sqrt())
}

/// World points for every `stride`-th patch (in both directions) whose depth
/// is below the open-space threshold, seen from `pose`.
pub fn project_to_points(grid: &DepthGrid, camera: &CameraModel, pose: &Pose2, stride: usize) -> Vec<ObstaclePoint> {
    let stride = stride.max(1);
    let f = camera.focal_px();
    let (cx, cy) = (camera.cx(), camera.cy());
    let limit = OPEN_SPACE_FRACTION * D_MAX;
    let mut out = Vec::new();
    for r in (0..grid.grid.rows).step_by(stride) {
        for c in (0..grid.grid.cols).step_by(stride) {
            let d = grid.at(r, c);
            if !(d < limit) {
                continue;
            }
            let (u, v) = grid.grid.patch_center(r, c);
            let (x, y) = (u - cx, v - cy);
            // Depth is horizontal range along the column's ray.
            let a = -x / f;
            let forward = d / (1.0 + a * a).sqrt();
            let body = Vec2::new(forward, forward * a);
            out.push(ObstaclePoint {
                position: pose.transform_point(body),
                z: -forward * y / f,
                weight: solid_angle_weight(f, x, y),
            });
        }
    }
    out
}

/// Patch `(row, col)` whose centre ray passes through `point` seen from
/// `pose`, if in front of the camera.
pub fn back_project(point: &ObstaclePoint, camera: &CameraModel, pose: &Pose2, grid: &PatchGrid) -> Option<(usize, usize)> {
    let body = pose.inverse_transform_point(point.position);
    if body.x <= 0.0 {
        return None;
    }
    let f = camera.focal_px();
    let u = camera.cx() - f * body.y / body.x;
    let v = camera.cy() - f * point.z / body.x;
    if u < 0.0 || v < 0.0 {
        return None;
    }
    let (col, row) = ((u / grid.patch_size as f64) as usize, (v / grid.patch_size as f64) as usize);
    (row < grid.rows && col < grid.cols).then_some((row, col))
}
