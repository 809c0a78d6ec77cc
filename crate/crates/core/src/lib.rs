//! Monocular receding-horizon flight through dense clutter.
//!
//! The crate is organised the way the onboard pipeline is:
//!
//! * [`sim_world`] renders a synthetic forest and moves a planar vehicle through it,
//! * [`features`] turns a grayscale frame into per-patch descriptors,
//! * [`learn`] fits the depth regressor, picks feature groups under a time budget
//!   and builds the near/far error table,
//! * [`perception`] runs the frame → depth → obstacle points pipeline,
//! * [`traj_lib`], [`costmap`], [`planner`] and [`control`] close the loop,
//! * [`pose_flow`] estimates relative pose from downward optical flow,
//! * [`harness`] orchestrates episodes and experiment suites.

pub mod control;
pub mod costmap;
pub mod error;
pub mod features;
pub mod geom;
pub mod harness;
pub mod learn;
pub mod perception;
pub mod planner;
pub mod pose_flow;
pub mod sim_world;
pub mod traj_lib;

pub use error::{Error, Result};
pub use geom::Pose2;

/// Depth cap in metres. Anything farther is treated as open space.
pub const D_MAX: f64 = 20.0;
