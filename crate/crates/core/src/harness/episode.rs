//! One closed-loop flight: render, perceive, plan, track and move in
//! lockstep simulated time.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::PREV_FRAME_DT;
use super::{PoseSource, PredictionMode, RunConfig};
use crate::control::{pursuit_step, ControlCommand, ControlPose};
use crate::costmap::ScoredCloud;
use crate::features::{FeatureGroup, PatchGrid};
use crate::geom::{Pose2, Vec2};
use crate::learn::{DepthModel, ErrorLUT};
use crate::perception::{
    expand_interpretations, oracle_predict, predict_with_variant, project_to_points, Interpretation,
    InterpretationMode, ObstaclePoint,
};
use crate::planner::{plan, PlannerConfig, TrajectoryScore};
use crate::pose_flow::{
    estimate_velocity, simulate_flow, unrotate, BodyMotion, GateConfig, ImuReading, PoseIntegrator,
};
use crate::sim_world::{colliding_tree, hash_u64, render, ForestScenario, VehicleState, LARGE_TREE_RADIUS};
use crate::traj_lib::TrajectoryLibrary;
use crate::{Error, Result, D_MAX};

/// A tree counts as encountered when its centre comes this close to the
/// flown path.
pub const ENCOUNTER_RADIUS: f64 = 3.0;
/// A collision with a tree not inside the camera frustum for this long is
/// attributed to the narrow field of view.
pub const FOV_MEMORY: f64 = 2.0;
/// Trees thinner than this stand in for foliage.
const FOLIAGE_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    Collision,
    MaxDistance,
    /// Simulated-time limit hit, e.g. while holding on an invalid pose.
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureType {
    LargeTree,
    ThinTree,
    /// Trees under 0.1 m radius; no foliage exists in the simulator.
    FoliageProxy,
    NarrowFov,
}

impl FailureType {
    pub fn name(self) -> &'static str {
        match self {
            FailureType::LargeTree => "large_tree",
            FailureType::ThinTree => "thin_tree",
            FailureType::FoliageProxy => "foliage_proxy",
            FailureType::NarrowFov => "narrow_fov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TreeCounts {
    /// Radius at or above 0.25 m.
    pub large: usize,
    pub small: usize,
}

impl TreeCounts {
    pub fn total(&self) -> usize {
        self.large + self.small
    }

    fn add(&mut self, large: bool) {
        if large {
            self.large += 1;
        } else {
            self.small += 1;
        }
    }
}

/// Episode summary. Contains no wall-clock quantities so identical inputs
/// give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: PredictionMode,
    pub density: f64,
    pub outcome: Outcome,
    pub distance_flown: f64,
    pub sim_time: f64,
    pub trees_encountered: TreeCounts,
    pub trees_avoided: TreeCounts,
    pub failure_type: Option<FailureType>,
    pub collided_tree: Option<usize>,
    pub cycles: usize,
    /// Odometry position error at the end of the episode.
    pub final_pose_error: f64,
    pub log_path: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// One planning cycle, as written to the JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub t: f64,
    pub true_pose: Pose2,
    pub est_pose: Pose2,
    pub pose_valid: bool,
    pub chosen: usize,
    pub top: Vec<TrajectoryScore>,
    pub points: usize,
    pub variant_cost_ms: f64,
    pub perception_ms: f64,
    pub planning_ms: f64,
}

/// Report plus everything needed for post-hoc analysis.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub report: RunReport,
    pub cycles: Vec<CycleRecord>,
    /// True poses at the control rate.
    pub path: Vec<Pose2>,
}

/// Generate the scenario for `cfg.seed` and fly it.
pub fn run_episode(cfg: &RunConfig, model: Option<&DepthModel>, library: &TrajectoryLibrary) -> Result<RunReport> {
    let scenario = cfg.scenario.generate(cfg.seed)?;
    Ok(run_episode_in(cfg, &scenario, model, library)?.report)
}

struct Perceiver<'a> {
    cfg: &'a RunConfig,
    model: Option<&'a DepthModel>,
    grid: PatchGrid,
    mode: InterpretationMode,
    clouds: Vec<(Interpretation, ScoredCloud)>,
    pending: Vec<(Interpretation, Vec<ObstaclePoint>)>,
}

impl<'a> Perceiver<'a> {
    fn new(cfg: &'a RunConfig, model: Option<&'a DepthModel>) -> Result<Self> {
        let patch = match (cfg.mode, model) {
            (PredictionMode::Oracle, Some(m)) => m.patch_size,
            (PredictionMode::Oracle, None) => crate::features::DEFAULT_PATCH_SIZE.min(cfg.camera.width.min(cfg.camera.height)),
            (_, Some(m)) => m.patch_size,
            (mode, None) => {
                return Err(Error::InvalidArgument(format!("{} prediction needs a trained model", mode.name())));
            }
        };
        let grid = PatchGrid::for_frame(cfg.camera.width, cfg.camera.height, patch)?;
        let mode = match cfg.mode {
            PredictionMode::Multiple => InterpretationMode::Multiple,
            _ => InterpretationMode::Single,
        };
        Ok(Self {
            cfg,
            model,
            grid,
            mode,
            clouds: Vec::new(),
            pending: Vec::new(),
        })
    }

    fn variant_cost(&self) -> f64 {
        match (self.cfg.mode, self.model) {
            (PredictionMode::Oracle, _) | (_, None) => 0.0,
            (_, Some(m)) => m.variant_for_budget(self.cfg.budget_ms).cost(),
        }
    }

    fn needs_prev(&self) -> bool {
        match (self.cfg.mode, self.model) {
            (PredictionMode::Oracle, _) | (_, None) => false,
            (_, Some(m)) => m.variant_for_budget(self.cfg.budget_ms).layout.contains(FeatureGroup::FlowStats),
        }
    }

    /// Perceive from the true pose, place points with the estimated pose and
    /// fold them (or the previous cycle's, when delayed) into the clouds.
    fn cycle(
        &mut self,
        scenario: &ForestScenario,
        true_pose: &Pose2,
        prev_pose: Option<&Pose2>,
        est_pose: &Pose2,
        now: f64,
    ) -> Result<()> {
        let frame = render(scenario, true_pose, &self.cfg.camera, now);
        let depth = match (self.cfg.mode, self.model) {
            (PredictionMode::Oracle, _) => oracle_predict(&frame, &self.grid, self.cfg.oracle_noise, self.cfg.seed)?,
            (_, Some(m)) => {
                let prev = prev_pose.map(|p| render(scenario, p, &self.cfg.camera, now - PREV_FRAME_DT));
                predict_with_variant(&frame, prev.as_ref(), &self.grid, m.variant_for_budget(self.cfg.budget_ms))?
            }
            (_, None) => unreachable!("checked at construction"),
        };
        let identity;
        let lut = match (self.cfg.mode, self.model) {
            (PredictionMode::Multiple, Some(m)) => &m.variant_for_budget(self.cfg.budget_ms).lut,
            _ => {
                identity = ErrorLUT::identity();
                &identity
            }
        };
        let set = expand_interpretations(depth, lut, self.mode);
        let fresh: Vec<(Interpretation, Vec<ObstaclePoint>)> = set
            .grids
            .iter()
            .map(|(tag, g)| (*tag, project_to_points(g, &self.cfg.camera, est_pose, self.cfg.point_stride)))
            .collect();
        let ready = if self.cfg.perception_delay {
            std::mem::replace(&mut self.pending, fresh)
        } else {
            fresh
        };
        for (tag, pts) in ready {
            let idx = match self.clouds.iter().position(|(t, _)| *t == tag) {
                Some(i) => i,
                None => {
                    self.clouds.push((tag, ScoredCloud::new(self.cfg.cloud)?));
                    self.clouds.len() - 1
                }
            };
            self.clouds[idx].1.insert(&pts, tag, now);
        }
        for (_, c) in &mut self.clouds {
            c.prune(now);
        }
        Ok(())
    }
}

/// Is any part of `tree` inside the horizontal field of view from `pose`
/// and within sensing range?
fn in_frustum(pose: &Pose2, center: Vec2, radius: f64, half_fov: f64) -> bool {
    let rel = pose.inverse_transform_point(center);
    let dist = rel.norm();
    if dist <= radius {
        return true;
    }
    if dist - radius > D_MAX {
        return false;
    }
    let half_width = (radius / dist).asin();
    rel.y.atan2(rel.x).abs() - half_width <= half_fov
}

fn classify(radius: f64, last_seen: Option<f64>, now: f64) -> FailureType {
    match last_seen {
        Some(t) if now - t <= FOV_MEMORY => {
            if radius >= LARGE_TREE_RADIUS {
                FailureType::LargeTree
            } else if radius < FOLIAGE_RADIUS {
                FailureType::FoliageProxy
            } else {
                FailureType::ThinTree
            }
        }
        _ => FailureType::NarrowFov,
    }
}

/// Fly `scenario` with `cfg`. The planner and controller only ever see the
/// estimated pose; rendering and collisions use the true one.
pub fn run_episode_in(
    cfg: &RunConfig,
    scenario: &ForestScenario,
    model: Option<&DepthModel>,
    library: &TrajectoryLibrary,
) -> Result<EpisodeTrace> {
    cfg.validate()?;
    let rates = cfg.rates;
    let dt = 1.0 / rates.base as f64;
    let (imu_every, flow_every, ctrl_every, perc_every) = (
        rates.every(rates.imu),
        rates.every(rates.flow),
        rates.every(rates.control),
        rates.every(rates.perception),
    );
    let prev_lag = (PREV_FRAME_DT * rates.base as f64).round() as usize;

    let planner_cfg = PlannerConfig {
        goal_direction: scenario.goal_direction,
        ..cfg.planner
    };
    let pursuit = crate::control::PursuitConfig {
        v_cruise: cfg.speed,
        control_rate: rates.control as f64,
        ..cfg.pursuit
    };
    let imu = crate::pose_flow::ImuModel {
        rate: rates.imu as f64,
        ..cfg.imu
    };
    let down = crate::pose_flow::DownCamera {
        rate: rates.flow as f64,
        ..cfg.flow_camera
    };
    let gate = GateConfig::for_noise(&cfg.flow_noise);

    let start = scenario.start_pose();
    let goal = scenario.goal_direction.normalized();
    let mut state = VehicleState::at(start);
    let mut odo = PoseIntegrator::new(start);
    let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(cfg.seed, 0x5053_4f50, 1));
    let mut perceiver = Perceiver::new(cfg, model)?;
    let needs_prev = perceiver.needs_prev();
    let variant_cost = perceiver.variant_cost();

    let mut history: VecDeque<Pose2> = VecDeque::with_capacity(prev_lag + 1);
    let mut last_imu = ImuReading {
        timestamp: 0.0,
        omega: [0.0; 3],
    };
    let mut path: Vec<Pose2> = Vec::new();
    let mut prev_error: Option<f64> = None;
    let mut cmd = ControlCommand::hold();
    let mut cycles = Vec::new();
    let mut flown = Vec::new();

    let n_trees = scenario.trees.len();
    let mut min_dist = vec![f64::INFINITY; n_trees];
    let mut last_seen: Vec<Option<f64>> = vec![None; n_trees];
    let half_fov = 0.5 * cfg.camera.horizontal_fov;

    let mut log = match &cfg.log_path {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };

    let limit_ticks = (cfg.time_limit() * rates.base as f64).ceil() as u64;
    let mut distance = 0.0;
    let mut outcome = Outcome::Timeout;
    let mut collided = None;
    let mut tick: u64 = 0;
    while tick < limit_ticks {
        let now = tick as f64 * dt;
        let truth = state.pose();
        history.push_back(truth);
        if history.len() > prev_lag + 1 {
            history.pop_front();
        }
        let est = match cfg.pose_source {
            PoseSource::Perfect => ControlPose::perfect(truth),
            PoseSource::Flow => {
                let e = odo.estimate();
                ControlPose {
                    pose: e.pose(),
                    invalid_for: e.invalid_for,
                }
            }
        };

        if tick % perc_every == 0 {
            for (i, t) in scenario.trees.iter().enumerate() {
                if in_frustum(&truth, t.center(), t.radius, half_fov) {
                    last_seen[i] = Some(now);
                }
            }
            let t0 = Instant::now();
            let prev = needs_prev.then(|| *history.front().expect("history holds the current pose"));
            perceiver.cycle(scenario, &truth, prev.as_ref(), &est.pose, now)?;
            let t1 = Instant::now();
            let clouds: Vec<&ScoredCloud> = perceiver.clouds.iter().map(|(_, c)| c).collect();
            let result = plan(library, &clouds, &est.pose, &planner_cfg, now)?;
            let t2 = Instant::now();
            path = result.path.clone();
            prev_error = None;
            let record = CycleRecord {
                t: now,
                true_pose: truth,
                est_pose: est.pose,
                pose_valid: est.invalid_for == 0.0,
                chosen: result.chosen,
                top: result.top(5),
                points: clouds.iter().map(|c| c.len()).sum(),
                variant_cost_ms: variant_cost,
                perception_ms: (t1 - t0).as_secs_f64() * 1e3,
                planning_ms: (t2 - t1).as_secs_f64() * 1e3,
            };
            if let Some(w) = log.as_mut() {
                serde_json::to_writer(&mut *w, &record)?;
                w.write_all(b"\n").map_err(|e| Error::io(cfg.log_path.as_ref().unwrap(), e))?;
            }
            cycles.push(record);
        }

        if tick % ctrl_every == 0 {
            cmd = pursuit_step(&path, &est, &pursuit, prev_error)?;
            prev_error = Some(cmd.heading_error);
            flown.push(truth);
            for (i, t) in scenario.trees.iter().enumerate() {
                min_dist[i] = min_dist[i].min(truth.position().dist(t.center()));
            }
        }

        // Sensors see the motion commanded for the coming interval.
        let omega = [0.0, 0.0, cmd.yaw_rate];
        if tick % imu_every == 0 {
            last_imu = imu.read(omega, now, &mut rng);
            odo.imu_update(&last_imu, imu_every as f64 * dt);
        }
        if tick % flow_every == 0 {
            let motion = BodyMotion {
                velocity: Vec2::new(cmd.forward_speed.clamp(0.0, crate::sim_world::V_MAX), 0.0),
                omega,
            };
            let altitude = cfg.camera.altitude;
            let sample = simulate_flow(&motion, altitude, &down, &cfg.flow_noise, now, &mut rng);
            let sonar = altitude + cfg.flow_noise.sonar_sigma * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng);
            let (v, ok) = estimate_velocity(&unrotate(&sample, &last_imu, &down), sonar, &down, &gate, odo.estimate().velocity);
            odo.flow_update(v, ok, flow_every as f64 * dt);
        }

        state = crate::sim_world::step_vehicle(&state, cmd.forward_speed, cmd.yaw_rate, dt);
        distance += state.speed * dt;
        tick += 1;

        if let Some(i) = colliding_tree(scenario, &state, cfg.vehicle_radius) {
            outcome = Outcome::Collision;
            collided = Some(i);
            break;
        }
        if (state.position - start.position()).dot(goal) >= cfg.goal_distance {
            outcome = Outcome::GoalReached;
            break;
        }
        if distance >= cfg.max_distance {
            outcome = Outcome::MaxDistance;
            break;
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush().map_err(|e| Error::io(cfg.log_path.as_ref().unwrap(), e))?;
    }

    let end = state.pose();
    let mut encountered = TreeCounts::default();
    let mut avoided = TreeCounts::default();
    for (i, t) in scenario.trees.iter().enumerate() {
        let d = min_dist[i].min(end.position().dist(t.center()));
        if d <= ENCOUNTER_RADIUS || collided == Some(i) {
            encountered.add(t.is_large());
            if collided != Some(i) {
                avoided.add(t.is_large());
            }
        }
    }
    let sim_time = tick as f64 * dt;
    let failure_type = collided.map(|i| classify(scenario.trees[i].radius, last_seen[i], sim_time));
    let final_pose_error = match cfg.pose_source {
        PoseSource::Perfect => 0.0,
        PoseSource::Flow => odo.estimate().position.dist(end.position()),
    };
    let report = RunReport {
        seed: cfg.seed,
        mode: cfg.mode,
        density: scenario.density,
        outcome,
        distance_flown: distance,
        sim_time,
        trees_encountered: encountered,
        trees_avoided: avoided,
        failure_type,
        collided_tree: collided,
        cycles: cycles.len(),
        final_pose_error,
        log_path: cfg.log_path.as_ref().map(|p| p.display().to_string()),
    };
    flown.push(end);
    Ok(EpisodeTrace {
        report,
        cycles,
        path: flown,
    })
}
