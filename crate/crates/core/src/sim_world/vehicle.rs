use serde::{Deserialize, Serialize};

use super::scenario::ForestScenario;
use crate::geom::{wrap_angle, Pose2, Vec2};

/// Hard speed limit of the simulated vehicle in m/s.
pub const V_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    /// Heading in (−π, π].
    pub yaw: f64,
    pub speed: f64,
    pub time: f64,
}

impl VehicleState {
    pub fn at(pose: Pose2) -> Self {
        Self {
            position: pose.position(),
            yaw: wrap_angle(pose.yaw),
            speed: 0.0,
            time: 0.0,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.position.x, self.position.y, self.yaw)
    }
}

/// Exact constant-curvature (unicycle) integration over `dt`.
///
/// # Panics
/// If `dt` is not positive and finite.
pub fn step_vehicle(state: &VehicleState, forward_speed: f64, yaw_rate: f64, dt: f64) -> VehicleState {
    assert!(dt > 0.0 && dt.is_finite(), "dt must be positive, got {dt}");
    let v = forward_speed.clamp(0.0, V_MAX);
    let yaw0 = state.yaw;
    let yaw1 = yaw0 + yaw_rate * dt;
    let delta = if yaw_rate.abs() < 1e-12 {
        Vec2::unit(yaw0) * (v * dt)
    } else {
        let r = v / yaw_rate;
        Vec2::new(r * (yaw1.sin() - yaw0.sin()), r * (yaw0.cos() - yaw1.cos()))
    };
    VehicleState {
        position: state.position + delta,
        yaw: wrap_angle(yaw1),
        speed: v,
        time: state.time + dt,
    }
}

/// Index of the first tree whose disk strictly intersects the robot disk.
pub fn colliding_tree(scenario: &ForestScenario, state: &VehicleState, robot_radius: f64) -> Option<usize> {
    scenario.trees.iter().position(|t| {
        let reach = t.radius + robot_radius;
        state.position.dist_sq(t.center()) < reach * reach
    })
}

/// True iff any tree disk strictly intersects the robot disk (tangency is safe).
pub fn check_collision(scenario: &ForestScenario, state: &VehicleState, robot_radius: f64) -> bool {
    colliding_tree(scenario, state, robot_radius).is_some()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;
    use crate::geom::Bounds;
    use crate::sim_world::Tree;

    fn origin() -> VehicleState {
        VehicleState::at(Pose2::identity())
    }

    #[test]
    fn straight_line() {
        let s = step_vehicle(&origin(), 1.0, 0.0, 1.0);
        assert!((s.position.x - 1.0).abs() < 1e-15);
        assert_eq!(s.position.y, 0.0);
        assert_eq!(s.time, 1.0);
    }

    #[test]
    fn quarter_circle() {
        let s = step_vehicle(&origin(), 1.0, FRAC_PI_2, 1.0);
        let r = 2.0 / PI;
        assert!((s.position.x - r).abs() < 1e-12);
        assert!((s.position.y - r).abs() < 1e-12);
        assert!((s.yaw - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn zero_speed_only_turns() {
        let s = step_vehicle(&origin(), 0.0, 0.5, 0.1);
        assert_eq!(s.position, Vec2::new(0.0, 0.0));
        assert!((s.yaw - 0.05).abs() < 1e-15);
    }

    #[test]
    fn speed_is_saturated() {
        let s = step_vehicle(&origin(), 50.0, 0.0, 0.1);
        assert_eq!(s.speed, V_MAX);
        let s = step_vehicle(&origin(), -1.0, 0.0, 0.1);
        assert_eq!(s.speed, 0.0);
    }

    proptest! {
        #[test]
        fn two_half_steps_equal_one_full(
            v in 0.0..3.0f64, w in -2.0..2.0f64, dt in 0.001..0.05f64,
            x in -5.0..5.0f64, yaw in -3.0..3.0f64,
        ) {
            let s0 = VehicleState::at(Pose2::new(x, 1.0, yaw));
            let a = step_vehicle(&step_vehicle(&s0, v, w, dt), v, w, dt);
            let b = step_vehicle(&s0, v, w, 2.0 * dt);
            prop_assert!(a.position.dist(b.position) < 1e-12);
            prop_assert!(wrap_angle(a.yaw - b.yaw).abs() < 1e-12);
        }
    }

    fn scene() -> ForestScenario {
        ForestScenario::with_trees(
            Bounds::new(-20.0, -20.0, 20.0, 20.0),
            vec![Tree { x: 1.0, y: 0.0, radius: 0.5 }],
        )
    }

    #[test]
    fn collision_cases() {
        let s = scene();
        let far = VehicleState::at(Pose2::new(-9.5, 0.0, 0.0));
        assert!(!check_collision(&s, &far, 0.35));
        let inside = VehicleState::at(Pose2::new(1.0, 0.0, 0.0));
        assert!(check_collision(&s, &inside, 0.35));
        // Tangent: centre distance exactly equals the radius sum.
        let tangent = VehicleState::at(Pose2::new(0.0, 0.0, 0.0));
        assert!(!check_collision(&s, &tangent, 0.5));
        assert!(check_collision(&s, &tangent, 0.5000001));
    }
}
