//! Pure pursuit with PD on heading error.

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Pose2};
use crate::sim_world::V_MAX;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PursuitConfig {
    /// Arc length from the closest sample to the waypoint, metres.
    pub lookahead: f64,
    /// PD gains in units of speed / lookahead.
    pub kp: f64,
    pub kd: f64,
    pub v_cruise: f64,
    pub control_rate: f64,
    pub yaw_rate_max: f64,
    /// Hold in place once the pose has been invalid this long.
    pub invalid_hold: f64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            lookahead: 1.0,
            kp: 2.0,
            kd: 0.03,
            v_cruise: 1.5,
            control_rate: 50.0,
            yaw_rate_max: 2.0,
            invalid_hold: 0.5,
        }
    }
}

impl PursuitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lookahead > 0.0
            && self.kp >= 0.0
            && self.kd >= 0.0
            && (0.0..=V_MAX).contains(&self.v_cruise)
            && self.control_rate > 0.0
            && self.yaw_rate_max > 0.0
            && self.invalid_hold >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid pursuit config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub forward_speed: f64,
    pub yaw_rate: f64,
    /// Heading error this tick; feed back as `prev_error` next tick.
    pub heading_error: f64,
    pub hold: bool,
}

impl ControlCommand {
    pub fn hold() -> Self {
        Self {
            forward_speed: 0.0,
            yaw_rate: 0.0,
            heading_error: 0.0,
            hold: true,
        }
    }
}

/// Pose seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPose {
    pub pose: Pose2,
    /// Seconds since the pose source last produced a valid estimate.
    pub invalid_for: f64,
}

impl ControlPose {
    pub fn perfect(pose: Pose2) -> Self {
        Self { pose, invalid_for: 0.0 }
    }
}

/// Index and distance of the sample nearest `pose`; the first on ties.
pub fn closest_sample(traj: &[Pose2], pose: &Pose2) -> (usize, f64) {
    let p = pose.position();
    let mut best = (0, f64::INFINITY);
    for (i, s) in traj.iter().enumerate() {
        let d = s.position().dist_sq(p);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

fn cumulative_arc(traj: &[Pose2]) -> Vec<f64> {
    let mut arc = Vec::with_capacity(traj.len());
    let mut s = 0.0;
    arc.push(0.0);
    for w in traj.windows(2) {
        s += w[0].position().dist(w[1].position());
        arc.push(s);
    }
    arc
}

/// One control tick. `prev_error` is `None` right after a trajectory switch
/// so the derivative term does not kick.
pub fn pursuit_step(traj: &[Pose2], state: &ControlPose, cfg: &PursuitConfig, prev_error: Option<f64>) -> Result<ControlCommand> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if state.invalid_for > cfg.invalid_hold {
        return Ok(ControlCommand::hold());
    }
    let arc = cumulative_arc(traj);
    let (i, _) = closest_sample(traj, &state.pose);
    let target = arc[i] + cfg.lookahead;
    let j = arc[i..].iter().position(|&s| s >= target).map_or(traj.len() - 1, |k| i + k);
    let to_wp = traj[j].position() - state.pose.position();
    let error = if to_wp.norm() < 1e-9 {
        0.0
    } else {
        wrap_angle(to_wp.y.atan2(to_wp.x) - state.pose.yaw)
    };
    let remaining = arc[arc.len() - 1] - arc[i];
    let speed = (cfg.v_cruise * (remaining / cfg.lookahead).min(1.0)).clamp(0.0, V_MAX);
    let d = prev_error.map_or(0.0, |p| wrap_angle(error - p) * cfg.control_rate);
    // Gains act on v/L, so kp = 2 is the linearised pure pursuit law.
    let scale = speed / cfg.lookahead;
    let yaw_rate = (scale * (cfg.kp * error + cfg.kd * d)).clamp(-cfg.yaw_rate_max, cfg.yaw_rate_max);
    Ok(ControlCommand {
        forward_speed: speed,
        yaw_rate,
        heading_error: error,
        hold: false,
    })
}

/// Unsigned distance from `p` to the polyline `traj`.
pub fn cross_track(traj: &[Pose2], p: &Pose2) -> f64 {
    let q = p.position();
    if traj.len() == 1 {
        return traj[0].position().dist(q);
    }
    traj.windows(2)
        .map(|w| {
            let a = w[0].position();
            let ab = w[1].position() - a;
            let len2 = ab.dot(ab);
            let t = if len2 > 0.0 { ((q - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (a + ab * t).dist(q)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Write a command trace as CSV with columns `t,speed,yaw_rate,heading_error,hold`.
pub fn write_command_trace<W: std::io::Write>(w: W, trace: &[(f64, ControlCommand)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "speed", "yaw_rate", "heading_error", "hold"])?;
    for (t, c) in trace {
        out.write_record(&[
            t.to_string(),
            c.forward_speed.to_string(),
            c.yaw_rate.to_string(),
            c.heading_error.to_string(),
            (c.hold as u8).to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Closed-loop result of following `traj` with perfect pose.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub max_cross_track: f64,
    pub peak_yaw_rate: f64,
    pub final_pose: Pose2,
    pub poses: Vec<Pose2>,
}

/// Follow `traj` from `start` until the speed tapers off or `max_time` runs
/// out.
pub fn track_closed_loop(traj: &[Pose2], start: Pose2, cfg: &PursuitConfig, max_time: f64) -> Result<TrackResult> {
    use crate::sim_world::{step_vehicle, VehicleState};
    cfg.validate()?;
    let dt = 1.0 / cfg.control_rate;
    let mut state = VehicleState::at(start);
    let mut prev = None;
    let mut out = TrackResult {
        max_cross_track: cross_track(traj, &start),
        peak_yaw_rate: 0.0,
        final_pose: start,
        poses: vec![start],
    };
    let steps = (max_time * cfg.control_rate).ceil() as usize;
    for _ in 0..steps {
        let cmd = pursuit_step(traj, &ControlPose::perfect(state.pose()), cfg, prev)?;
        if cmd.forward_speed < 1e-3 {
            break;
        }
        prev = Some(cmd.heading_error);
        out.peak_yaw_rate = out.peak_yaw_rate.max(cmd.yaw_rate.abs());
        state = step_vehicle(&state, cmd.forward_speed, cmd.yaw_rate, dt);
        out.max_cross_track = out.max_cross_track.max(cross_track(traj, &state.pose()));
        out.poses.push(state.pose());
    }
    out.final_pose = state.pose();
    Ok(out)
}
