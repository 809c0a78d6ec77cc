//! Receding-horizon trajectory scoring and selection.

use serde::{Deserialize, Serialize};

use crate::costmap::{CloudSnapshot, ScoredCloud};
use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::traj_lib::{Trajectory, TrajectoryLibrary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub w_dir: f64,
    /// Per metre of lateral offset.
    pub w_trans: f64,
    pub robot_radius: f64,
    pub replan_period: f64,
    pub goal_direction: Vec2,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            w_dir: 0.3,
            w_trans: 0.05,
            robot_radius: 0.35,
            replan_period: 0.2,
            goal_direction: Vec2::new(1.0, 0.0),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_dir >= 0.0 && self.w_trans >= 0.0 && self.robot_radius > 0.0 && self.replan_period > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid planner config {self:?}")));
        }
        if !(self.goal_direction.norm() > 0.0) {
            return Err(Error::InvalidArgument("goal direction must be non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub traj_id: usize,
    /// Mean over interpretations of the summed point scores along the path.
    pub collision: f64,
    pub direction_penalty: f64,
    pub translation_penalty: f64,
    pub total: f64,
}

fn goal_terms(world: &[Pose2], cfg: &PlannerConfig) -> (f64, f64) {
    let goal = cfg.goal_direction.normalized();
    let start = world[0].position();
    let end = world[world.len() - 1];
    let dir = wrap_angle(end.yaw - goal.y.atan2(goal.x)).abs();
    let trans = goal.cross(end.position() - start).abs();
    (dir, trans)
}

fn score_world(id: usize, world: &[Pose2], clouds: &[CloudSnapshot<'_>], cfg: &PlannerConfig) -> TrajectoryScore {
    let collision = if clouds.is_empty() {
        0.0
    } else {
        let sum: f64 = clouds
            .iter()
            .map(|c| world.iter().map(|s| c.score_at(s.position(), cfg.robot_radius)).sum::<f64>())
            .sum();
        sum / clouds.len() as f64
    };
    let (direction_penalty, translation_penalty) = goal_terms(world, cfg);
    TrajectoryScore {
        traj_id: id,
        collision,
        direction_penalty,
        translation_penalty,
        total: collision + cfg.w_dir * direction_penalty + cfg.w_trans * translation_penalty,
    }
}

/// Score one body-frame trajectory placed at `pose`.
pub fn score_trajectory(traj: &Trajectory, clouds: &[&ScoredCloud], pose: &Pose2, cfg: &PlannerConfig, now: f64) -> TrajectoryScore {
    let snaps: Vec<CloudSnapshot<'_>> = clouds.iter().map(|c| c.snapshot(now)).collect();
    score_world(traj.id, &traj.to_world(pose), &snaps, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub chosen: usize,
    /// World-frame samples of the chosen trajectory.
    pub path: Vec<Pose2>,
    /// Scores of every selected trajectory, in library order.
    pub scores: Vec<TrajectoryScore>,
}

impl PlanResult {
    pub fn chosen_score(&self) -> &TrajectoryScore {
        self.scores.iter().find(|s| s.traj_id == self.chosen).expect("chosen id scored")
    }

    /// Up to `n` best scores, best first.
    pub fn top(&self, n: usize) -> Vec<TrajectoryScore> {
        let mut s = self.scores.clone();
        s.sort_by(|a, b| a.total.total_cmp(&b.total).then(a.traj_id.cmp(&b.traj_id)));
        s.truncate(n);
        s
    }
}

/// Argmin of the total score over the library's selected trajectories; ties
/// go to the lower id.
pub fn plan(library: &TrajectoryLibrary, clouds: &[&ScoredCloud], pose: &Pose2, cfg: &PlannerConfig, now: f64) -> Result<PlanResult> {
    if library.selected.is_empty() {
        return Err(Error::InvalidArgument("trajectory library has no selected paths".into()));
    }
    let snaps: Vec<CloudSnapshot<'_>> = clouds.iter().map(|c| c.snapshot(now)).collect();
    let mut best: Option<(TrajectoryScore, Vec<Pose2>)> = None;
    let mut scores = Vec::with_capacity(library.selected.len());
    for t in library.selected() {
        let world = t.to_world(pose);
        let s = score_world(t.id, &world, &snaps, cfg);
        scores.push(s);
        let better = match &best {
            None => true,
            Some((b, _)) => s.total < b.total || (s.total == b.total && s.traj_id < b.traj_id),
        };
        if better {
            best = Some((s, world));
        }
    }
    let (b, path) = best.expect("non-empty library");
    Ok(PlanResult {
        chosen: b.traj_id,
        path,
        scores,
    })
}

/// One JSON-lines planning record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t: f64,
    pub chosen: usize,
    pub top: Vec<TrajectoryScore>,
}

impl PlanRecord {
    pub fn from_result(t: f64, r: &PlanResult) -> Self {
        Self {
            t,
            chosen: r.chosen,
            top: r.top(5),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;
    use crate::costmap::CloudConfig;
    use crate::perception::{Interpretation, ObstaclePoint};
    use crate::traj_lib::LibraryConfig;

    fn library() -> TrajectoryLibrary {
        TrajectoryLibrary::build(&LibraryConfig {
            levels: 25,
            k: 40,
            ..Default::default()
        })
        .unwrap()
    }

    fn cloud_with(points: &[(f64, f64)]) -> ScoredCloud {
        let mut c = ScoredCloud::new(CloudConfig::default()).unwrap();
        let pts: Vec<_> = points
            .iter()
            .map(|&(x, y)| ObstaclePoint {
                position: Vec2::new(x, y),
                z: 0.0,
                weight: 1.0,
            })
            .collect();
        c.insert(&pts, Interpretation::Point, 0.0);
        c
    }

    fn straight(lib: &TrajectoryLibrary) -> &Trajectory {
        lib.get(lib.selected[0]).unwrap()
    }

    #[test]
    fn straight_along_goal_scores_zero() {
        let lib = library();
        let empty = cloud_with(&[]);
        let s = score_trajectory(straight(&lib), &[&empty], &Pose2::identity(), &PlannerConfig::default(), 0.0);
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn goal_ninety_degrees_off() {
        let lib = library();
        let cfg = PlannerConfig {
            goal_direction: Vec2::new(0.0, 1.0),
            w_trans: 0.0,
            ..Default::default()
        };
        let s = score_trajectory(straight(&lib), &[], &Pose2::identity(), &cfg, 0.0);
        assert!((s.total - 0.3 * FRAC_PI_2).abs() < 1e-12);
        let cfg = PlannerConfig {
            goal_direction: Vec2::new(0.0, 1.0),
            ..Default::default()
        };
        let s = score_trajectory(straight(&lib), &[], &Pose2::identity(), &cfg, 0.0);
        assert!((s.translation_penalty - 5.0).abs() < 1e-12);
    }

    #[test]
    fn obstacle_on_straight_path_is_avoided() {
        let lib = library();
        let c = cloud_with(&[(3.0, 0.0)]);
        let cfg = PlannerConfig::default();
        let s = score_trajectory(straight(&lib), &[&c], &Pose2::identity(), &cfg, 0.0);
        assert!(s.collision >= 1.0);
        let r = plan(&lib, &[&c], &Pose2::identity(), &cfg, 0.0).unwrap();
        assert_eq!(r.chosen_score().collision, 0.0);
        assert_ne!(r.chosen, straight(&lib).id);
    }

    #[test]
    fn empty_world_follows_goal() {
        let lib = library();
        let r = plan(&lib, &[], &Pose2::identity(), &PlannerConfig::default(), 0.0).unwrap();
        assert_eq!(r.chosen, straight(&lib).id);
    }

    #[test]
    fn wall_on_left_sends_path_right() {
        let lib = library();
        let mut wall = Vec::new();
        for i in 0..30 {
            for j in 0..12 {
                wall.push((1.0 + i as f64 * 0.2, 0.05 + j as f64 * 0.3));
            }
        }
        let c = cloud_with(&wall);
        let r = plan(&lib, &[&c], &Pose2::identity(), &PlannerConfig::default(), 0.0).unwrap();
        assert!(r.path.last().unwrap().y < 0.0);
    }

    #[test]
    fn extra_point_never_lowers_a_score() {
        let lib = library();
        let cfg = PlannerConfig::default();
        let a = cloud_with(&[(2.0, 1.0)]);
        let b = cloud_with(&[(2.0, 1.0), (4.0, 0.1)]);
        for t in lib.selected() {
            let sa = score_trajectory(t, &[&a], &Pose2::identity(), &cfg, 0.0);
            let sb = score_trajectory(t, &[&b], &Pose2::identity(), &cfg, 0.0);
            assert!(sb.total >= sa.total);
        }
    }

    #[test]
    fn obstacle_dominates_without_goal_terms() {
        let lib = library();
        let cfg = PlannerConfig {
            w_dir: 0.0,
            w_trans: 0.0,
            ..Default::default()
        };
        let obstacle = Vec2::new(2.5, 0.0);
        let c = cloud_with(&[(obstacle.x, obstacle.y)]);
        let clearance = |path: &[Pose2]| path.iter().map(|p| p.position().dist(obstacle)).fold(f64::INFINITY, f64::min);
        let r = plan(&lib, &[&c], &Pose2::identity(), &cfg, 0.0).unwrap();
        let straight_path = straight(&lib).to_world(&Pose2::identity());
        assert!(clearance(&r.path) >= clearance(&straight_path));
    }

    #[test]
    fn interpretations_are_averaged() {
        let lib = library();
        let cfg = PlannerConfig::default();
        let hit = cloud_with(&[(3.0, 0.0)]);
        let empty = cloud_with(&[]);
        let one = score_trajectory(straight(&lib), &[&hit], &Pose2::identity(), &cfg, 0.0);
        let avg = score_trajectory(straight(&lib), &[&hit, &empty, &empty], &Pose2::identity(), &cfg, 0.0);
        assert!((avg.collision - one.collision / 3.0).abs() < 1e-12);
    }
}
