//! Experiment orchestration: lockstep episodes, corpus generation and
//! paired-seed suites.

mod corpus;
mod bench;
mod episode;
mod scripted;
mod suite;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::PursuitConfig;
use crate::costmap::CloudConfig;
use crate::geom::Bounds;
use crate::planner::PlannerConfig;
use crate::pose_flow::{DownCamera, FlowNoise, ImuModel};
use crate::sim_world::{generate_scenario, CameraModel, ForestScenario};
use crate::traj_lib::LibraryConfig;
use crate::{Error, Result};

pub use corpus::{build_corpus, previous_pose, train_pipeline, Corpus, CorpusConfig, PREV_FRAME_DT};
pub use episode::{
    run_episode, run_episode_in, CycleRecord, EpisodeTrace, FailureType, Outcome, RunReport, TreeCounts,
    ENCOUNTER_RADIUS, FOV_MEMORY,
};
pub use bench::{bench_cycles, BenchReport};
pub use scripted::{dodge_redodge, dodge_redodge_config};
pub use suite::{evaluate_suite, sign_test, SignTest, SuiteResult, SuiteRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Ground-truth patch depths (optionally noised), one interpretation.
    Oracle,
    Single,
    Multiple,
}

impl PredictionMode {
    pub fn name(self) -> &'static str {
        match self {
            PredictionMode::Oracle => "oracle",
            PredictionMode::Single => "single",
            PredictionMode::Multiple => "multiple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Perfect,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Trees per m².
    pub density: f64,
    /// Extent along the goal direction (x).
    pub length: f64,
    pub width: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            density: 1.0 / 36.0,
            length: 60.0,
            width: 30.0,
        }
    }
}

impl ScenarioConfig {
    pub fn bounds(&self) -> Bounds {
        Bounds::new(0.0, -0.5 * self.width, self.length, 0.5 * self.width)
    }

    /// Empty forest when the density is zero.
    pub fn generate(&self, seed: u64) -> Result<ForestScenario> {
        if self.density == 0.0 {
            Ok(ForestScenario::empty(self.bounds()))
        } else {
            generate_scenario(self.density, self.bounds(), seed)
        }
    }
}

/// Module rates in Hz; each must divide the base tick rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub base: u32,
    pub perception: u32,
    pub control: u32,
    pub flow: u32,
    pub imu: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            base: 600,
            perception: 5,
            control: 50,
            flow: 100,
            imu: 200,
        }
    }
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("perception", self.perception), ("control", self.control), ("flow", self.flow), ("imu", self.imu)] {
            if r == 0 || self.base % r != 0 {
                return Err(Error::InvalidArgument(format!("{name} rate {r} Hz does not divide the {} Hz base tick", self.base)));
            }
        }
        Ok(())
    }

    /// Base ticks per period of `rate`.
    pub fn every(&self, rate: u32) -> u64 {
        (self.base / rate) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub mode: PredictionMode,
    /// Perception budget used to pick the model variant.
    pub budget_ms: f64,
    /// Cruise speed in m/s.
    pub speed: f64,
    pub seed: u64,
    pub rates: Rates,
    /// Path length after which the episode ends.
    pub max_distance: f64,
    /// Progress along the goal direction that counts as reaching the goal.
    pub goal_distance: f64,
    /// Simulated-time limit; 0 picks one from the distances and speed.
    pub max_time: f64,
    pub camera: CameraModel,
    /// Body radius used for collision checks.
    pub vehicle_radius: f64,
    pub pose_source: PoseSource,
    /// Log-normal noise on oracle depths.
    pub oracle_noise: f64,
    /// Project every n-th patch in each direction.
    pub point_stride: usize,
    /// Deliver each perception result one cycle late.
    pub perception_delay: bool,
    pub planner: PlannerConfig,
    pub cloud: CloudConfig,
    pub pursuit: PursuitConfig,
    pub library: LibraryConfig,
    pub flow_camera: DownCamera,
    pub flow_noise: FlowNoise,
    pub imu: ImuModel,
    /// Per-cycle JSON-lines log.
    pub log_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            mode: PredictionMode::Multiple,
            budget_ms: 100.0,
            speed: 2.0,
            seed: 0,
            rates: Rates::default(),
            max_distance: 60.0,
            goal_distance: 40.0,
            max_time: 0.0,
            camera: CameraModel::forward(160, 120),
            vehicle_radius: 0.25,
            pose_source: PoseSource::Flow,
            oracle_noise: 0.0,
            point_stride: 1,
            perception_delay: false,
            planner: PlannerConfig::default(),
            cloud: CloudConfig::default(),
            pursuit: PursuitConfig::default(),
            library: LibraryConfig::default(),
            flow_camera: DownCamera::default(),
            flow_noise: FlowNoise::default(),
            imu: ImuModel::default(),
            log_path: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.planner.validate()?;
        self.cloud.validate()?;
        self.pursuit.validate()?;
        if !self.camera.is_valid() {
            return Err(Error::InvalidArgument("invalid camera".into()));
        }
        let positive = [self.speed, self.max_distance, self.goal_distance, self.vehicle_radius];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_time < 0.0 || self.oracle_noise < 0.0 || self.budget_ms < 0.0 {
            return Err(Error::InvalidArgument("speed, distances and radius must be positive".into()));
        }
        if !(self.scenario.density >= 0.0) {
            return Err(Error::InvalidArgument("density must be non-negative".into()));
        }
        Ok(())
    }

    pub fn time_limit(&self) -> f64 {
        if self.max_time > 0.0 {
            self.max_time
        } else {
            3.0 * self.max_distance / self.speed + 10.0
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("run config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("run config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rates_divide_the_base_tick() {
        let r = Rates::default();
        r.validate().unwrap();
        assert_eq!((r.every(r.perception), r.every(r.control), r.every(r.flow), r.every(r.imu)), (120, 12, 6, 3));
        assert!(Rates { flow: 70, ..r }.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_partial_override() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial = RunConfig::from_toml("mode = \"single\"\nseed = 7\n[planner]\nw_dir = 0.5\n").unwrap();
        assert_eq!(partial.mode, PredictionMode::Single);
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.planner.w_dir, 0.5);
        assert_eq!(partial.planner.robot_radius, PlannerConfig::default().robot_radius);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(RunConfig::from_toml("speed = -1.0").is_err());
        assert!(RunConfig::from_toml("[rates]\ncontrol = 7").is_err());
        assert!(RunConfig::from_toml("mode = \"psychic\"").is_err());
    }
}
