//! Synthetic training corpus: random fly-through frames with true patch
//! depths.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{extract_patch_features, FeatureLayout, GroupCosts, PatchGrid};
use crate::geom::{Bounds, Pose2, Vec2};
use crate::learn::{select_budgeted_groups, train_depth_model, Dataset, DepthModel, TrainOptions};
use crate::perception::true_patch_depths;
use crate::sim_world::{generate_scenario, render, CameraModel, ForestScenario};
use crate::{Error, Result};

/// Interval between the current and the previous frame used for flow.
pub const PREV_FRAME_DT: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_scenarios: usize,
    pub frames_per_scenario: usize,
    /// Patches sampled per frame; 0 keeps every patch.
    pub patches_per_frame: usize,
    /// Densities are drawn log-uniformly from this range (trees per m²).
    pub density_min: f64,
    pub density_max: f64,
    pub length: f64,
    pub width: f64,
    pub camera: CameraModel,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 40,
            frames_per_scenario: 100,
            patches_per_frame: 40,
            density_min: 1.0 / 144.0,
            density_max: 1.0 / 36.0,
            length: 40.0,
            width: 30.0,
            camera: CameraModel::forward(160, 120),
            patch_size: 8,
            seed: 1,
        }
    }
}

/// Features and depths split 90/10 by frame.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Dataset,
    pub holdout: Dataset,
    pub frames: usize,
}

fn clear_of_trees(s: &ForestScenario, p: Vec2, clearance: f64) -> bool {
    s.trees.iter().all(|t| p.dist(t.center()) > t.radius + clearance)
}

/// Random pose inside the forest, roughly facing the goal, away from trunks.
fn sample_pose(s: &ForestScenario, rng: &mut ChaCha8Rng) -> Pose2 {
    let b = &s.bounds;
    let heading = s.goal_direction.y.atan2(s.goal_direction.x);
    loop {
        let p = Vec2::new(rng.gen_range(b.min_x + 1.0..b.max_x - 1.0), rng.gen_range(b.min_y + 1.0..b.max_y - 1.0));
        if clear_of_trees(s, p, 0.6) {
            return Pose2::new(p.x, p.y, heading + rng.gen_range(-0.8..0.8));
        }
    }
}

/// Pose `PREV_FRAME_DT` earlier for a vehicle moving at `speed` and turning
/// at `yaw_rate`.
pub fn previous_pose(pose: &Pose2, speed: f64, yaw_rate: f64) -> Pose2 {
    let yaw = pose.yaw - yaw_rate * PREV_FRAME_DT;
    let mid = 0.5 * (yaw + pose.yaw);
    let back = Vec2::unit(mid) * (speed * PREV_FRAME_DT);
    Pose2::new(pose.x - back.x, pose.y - back.y, yaw)
}

pub fn build_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    if cfg.n_scenarios == 0 || cfg.frames_per_scenario == 0 {
        return Err(Error::EmptyData("corpus"));
    }
    if !(cfg.density_min > 0.0 && cfg.density_max >= cfg.density_min) {
        return Err(Error::InvalidArgument("corpus density range".into()));
    }
    let grid = PatchGrid::for_frame(cfg.camera.width, cfg.camera.height, cfg.patch_size)?;
    let layout = FeatureLayout::all(&GroupCosts::nominal());
    let dim = layout.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    let (mut rows_h, mut y_h) = (Vec::new(), Vec::new());
    let bounds = Bounds::new(0.0, -0.5 * cfg.width, cfg.length, 0.5 * cfg.width);
    let mut frame_no = 0usize;
    for _ in 0..cfg.n_scenarios {
        let density = (rng.gen_range(cfg.density_min.ln()..=cfg.density_max.ln())).exp();
        let scenario = generate_scenario(density, bounds, rng.gen())?;
        for _ in 0..cfg.frames_per_scenario {
            let pose = sample_pose(&scenario, &mut rng);
            let prev_pose = previous_pose(&pose, rng.gen_range(1.0..3.0), rng.gen_range(-0.5..0.5));
            let t = frame_no as f64;
            let frame = render(&scenario, &pose, &cfg.camera, t);
            let prev = render(&scenario, &prev_pose, &cfg.camera, t - PREV_FRAME_DT);
            let feats = extract_patch_features(&frame, Some(&prev), &grid, &layout)?;
            let depth = true_patch_depths(&frame, &grid);
            let picks: Vec<usize> = if cfg.patches_per_frame == 0 || cfg.patches_per_frame >= grid.len() {
                (0..grid.len()).collect()
            } else {
                let mut v = sample(&mut rng, grid.len(), cfg.patches_per_frame).into_vec();
                v.sort_unstable();
                v
            };
            let (r, d) = if frame_no % 10 == 9 { (&mut rows_h, &mut y_h) } else { (&mut rows, &mut y) };
            for p in picks {
                r.extend_from_slice(feats.row(p));
                d.push(depth[p]);
            }
            frame_no += 1;
        }
    }
    debug_assert!(rows.len() == y.len() * dim);
    let train = Dataset::from_rows(layout.clone(), &rows, y)?;
    let holdout = if y_h.is_empty() {
        // Fewer than ten frames: reuse the training rows rather than fail.
        train.clone()
    } else {
        Dataset::from_rows(layout, &rows_h, y_h)?
    };
    Ok(Corpus {
        train,
        holdout,
        frames: frame_no,
    })
}

/// Budgeted selection followed by one trained variant per plan prefix.
pub fn train_pipeline(corpus: &Corpus, patch_size: usize, costs: &GroupCosts, budget_ms: f64, opts: &TrainOptions) -> Result<DepthModel> {
    let relabelled = Dataset::new(
        FeatureLayout::all(costs),
        corpus.train.x.clone(),
        corpus.train.y.clone(),
    )?;
    let plan = select_budgeted_groups(&relabelled, costs, budget_ms, opts.lambda)?;
    let holdout = Dataset::new(FeatureLayout::all(costs), corpus.holdout.x.clone(), corpus.holdout.y.clone())?;
    train_depth_model(&relabelled, &holdout, patch_size, Some(&plan), opts)
}
