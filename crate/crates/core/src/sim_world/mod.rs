//! Synthetic forest, planar vehicle and pinhole rendering.

mod noise;
mod render;
mod scenario;
mod vehicle;

pub use noise::{hash_u64, unit_hash, value_noise};
pub use render::{render, CameraModel, Frame, Mount};
pub use scenario::{generate_scenario, ForestScenario, Tree, LARGE_TREE_RADIUS};
pub use vehicle::{check_collision, colliding_tree, step_vehicle, VehicleState, V_MAX};
