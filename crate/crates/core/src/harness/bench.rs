//! Wall-clock cost of one full planning cycle.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::PREV_FRAME_DT;
use crate::costmap::{CloudConfig, ScoredCloud};
use crate::features::PatchGrid;
use crate::geom::{Bounds, Pose2, Vec2};
use crate::learn::DepthModel;
use crate::perception::{expand_interpretations, predict_with_variant, project_to_points, InterpretationMode, ObstaclePoint};
use crate::planner::{plan, PlannerConfig};
use crate::sim_world::{generate_scenario, render, CameraModel};
use crate::traj_lib::TrajectoryLibrary;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub trajectories: usize,
    pub points_per_cloud: usize,
    /// Feature extraction and depth regression, per cycle.
    pub perception_ms: Vec<f64>,
    /// Interpretations, projection, cloud update and scoring, per cycle.
    pub planning_ms: Vec<f64>,
}

impl BenchReport {
    pub fn cycle_ms(&self) -> Vec<f64> {
        self.perception_ms.iter().zip(&self.planning_ms).map(|(a, b)| a + b).collect()
    }

    pub fn mean_cycle_ms(&self) -> f64 {
        let c = self.cycle_ms();
        c.iter().sum::<f64>() / c.len().max(1) as f64
    }

    pub fn max_cycle_ms(&self) -> f64 {
        self.cycle_ms().into_iter().fold(0.0, f64::max)
    }
}

/// Time `cycles` perception + planning cycles with the full model in
/// multiple-interpretation mode. Each interpretation's cloud is kept at
/// `points_per_cloud` points by topping it up with clutter before each cycle.
pub fn bench_cycles(
    model: &DepthModel,
    library: &TrajectoryLibrary,
    camera: &CameraModel,
    cycles: usize,
    points_per_cloud: usize,
    seed: u64,
) -> Result<BenchReport> {
    let scenario = generate_scenario(1.0 / 36.0, Bounds::new(0.0, -15.0, 60.0, 15.0), seed)?;
    let grid = PatchGrid::for_frame(camera.width, camera.height, model.patch_size)?;
    let variant = model.full();
    let cloud_cfg = CloudConfig {
        capacity: points_per_cloud,
        ..CloudConfig::default()
    };
    let planner_cfg = PlannerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clouds: Vec<ScoredCloud> = Vec::new();
    let mut report = BenchReport {
        width: camera.width,
        height: camera.height,
        trajectories: library.selected.len(),
        points_per_cloud,
        perception_ms: Vec::with_capacity(cycles),
        planning_ms: Vec::with_capacity(cycles),
    };
    let start = scenario.start_pose();
    for i in 0..cycles {
        let now = i as f64 * 0.2;
        let pose = Pose2::new(start.x + 0.2 * (i % 100) as f64, start.y, start.yaw);
        let prev_pose = Pose2::new(pose.x - 2.0 * PREV_FRAME_DT, pose.y, pose.yaw);
        let frame = render(&scenario, &pose, camera, now);
        let prev = render(&scenario, &prev_pose, camera, now - PREV_FRAME_DT);

        for c in &mut clouds {
            let missing = points_per_cloud.saturating_sub(c.len());
            let filler: Vec<ObstaclePoint> = (0..missing)
                .map(|_| ObstaclePoint {
                    position: pose.transform_point(Vec2::new(rng.gen_range(0.5..20.0), rng.gen_range(-10.0..10.0))),
                    z: 0.0,
                    weight: 1.0,
                })
                .collect();
            let tag = c.points().first().map(|p| p.tag);
            if let Some(tag) = tag {
                c.insert(&filler, tag, now);
            }
        }

        let t0 = Instant::now();
        let depth = predict_with_variant(&frame, Some(&prev), &grid, variant)?;
        let t1 = Instant::now();
        let set = expand_interpretations(depth, &variant.lut, InterpretationMode::Multiple);
        for (k, (tag, g)) in set.grids.iter().enumerate() {
            let pts = project_to_points(g, camera, &pose, 1);
            if clouds.len() <= k {
                clouds.push(ScoredCloud::new(cloud_cfg)?);
            }
            clouds[k].insert(&pts, *tag, now);
            clouds[k].prune(now);
        }
        let refs: Vec<&ScoredCloud> = clouds.iter().collect();
        let result = plan(library, &refs, &pose, &planner_cfg, now)?;
        let t2 = Instant::now();
        std::hint::black_box(result.chosen);
        report.perception_ms.push((t1 - t0).as_secs_f64() * 1e3);
        report.planning_ms.push((t2 - t1).as_secs_f64() * 1e3);
    }
    Ok(report)
}
