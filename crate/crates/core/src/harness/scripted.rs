//! Hand-placed scenarios.

use super::{PredictionMode, RunConfig};
use crate::geom::Bounds;
use crate::sim_world::{ForestScenario, Tree};

/// Dodge-and-re-dodge course inside a 6 m corridor. The first dodge carries
/// the vehicle past a trunk that then sits beside it, outside the camera
/// frustum, while the next trunk forces a turn back towards it.
pub fn dodge_redodge() -> ForestScenario {
    let mut trees = vec![
        Tree { x: 11.25, y: 0.91, radius: 0.48 },
        Tree { x: 12.30, y: -1.25, radius: 0.41 },
        Tree { x: 10.67, y: -1.97, radius: 0.22 },
        Tree { x: 12.68, y: -0.13, radius: 0.47 },
    ];
    // Corridor walls; the 0.2 m gaps are impassable.
    for i in 0..40 {
        for side in [-1.0, 1.0] {
            trees.push(Tree {
                x: 0.7 * i as f64,
                y: 3.0 * side,
                radius: 0.25,
            });
        }
    }
    ForestScenario::with_trees(Bounds::new(0.0, -10.0, 30.0, 10.0), trees)
}

/// Oracle-perception run through [`dodge_redodge`] with memory constant `tau`.
pub fn dodge_redodge_config(tau: f64, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        mode: PredictionMode::Oracle,
        seed,
        goal_distance: 12.0,
        max_distance: 20.0,
        ..Default::default()
    };
    cfg.cloud.tau = tau;
    cfg
}
