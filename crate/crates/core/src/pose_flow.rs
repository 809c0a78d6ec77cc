//! Relative planar pose from downward-camera optical flow.
//!
//! The camera looks straight down from altitude `h`: camera x is body
//! forward, camera y is body right and camera z points at the ground. A
//! body velocity `(vx, vy)` (forward, left) and body rates `(p, q, r)` give
//! camera-frame translation `(vx, −vy, 0)` and rotation `(p, −q, −r)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DownCamera {
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
    /// Interest points per side of the square tracking grid.
    pub grid: usize,
    /// Spacing of grid points in pixels.
    pub spacing_px: f64,
    /// Flow frames per second.
    pub rate: f64,
}

impl Default for DownCamera {
    fn default() -> Self {
        Self {
            focal_px: 300.0,
            width: 320,
            height: 240,
            grid: 5,
            spacing_px: 20.0,
            rate: 100.0,
        }
    }
}

impl DownCamera {
    /// Grid point offsets from the principal point.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mid = (self.grid as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.grid * self.grid);
        for j in 0..self.grid {
            for i in 0..self.grid {
                out.push(((i as f64 - mid) * self.spacing_px, (j as f64 - mid) * self.spacing_px));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowNoise {
    /// Per-component pixel noise (px/frame).
    pub sigma_px: f64,
    /// Probability that a point's flow is replaced by an outlier.
    pub p_out: f64,
    /// Outliers are uniform in ±this many pixels per component.
    pub outlier_px: f64,
    /// Altimeter noise in metres.
    pub sonar_sigma: f64,
}

impl Default for FlowNoise {
    fn default() -> Self {
        Self {
            sigma_px: 0.2,
            p_out: 0.05,
            outlier_px: 8.0,
            sonar_sigma: 0.01,
        }
    }
}

impl FlowNoise {
    pub fn none() -> Self {
        Self {
            sigma_px: 0.0,
            p_out: 0.0,
            outlier_px: 0.0,
            sonar_sigma: 0.0,
        }
    }
}

/// True body motion at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyMotion {
    /// Forward and left velocity in m/s.
    pub velocity: Vec2,
    /// Roll, pitch and yaw rates in rad/s.
    pub omega: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub points: Vec<(f64, f64)>,
    /// Image displacement per frame at each point.
    pub flow: Vec<(f64, f64)>,
    pub timestamp: f64,
}

fn camera_rates(omega: [f64; 3]) -> [f64; 3] {
    [omega[0], -omega[1], -omega[2]]
}

/// Rotation-induced image velocity (px/s) at `(x, y)`.
fn rotational_field(f: f64, x: f64, y: f64, w: [f64; 3]) -> (f64, f64) {
    let u = x * y / f * w[0] - (f + x * x / f) * w[1] + y * w[2];
    let v = (f + y * y / f) * w[0] - x * y / f * w[1] - x * w[2];
    (u, v)
}

/// Analytic flow over a flat ground plane plus noise and outliers.
pub fn simulate_flow<R: Rng>(
    motion: &BodyMotion,
    altitude: f64,
    cam: &DownCamera,
    noise: &FlowNoise,
    timestamp: f64,
    rng: &mut R,
) -> FlowSample {
    let f = cam.focal_px;
    let t = [motion.velocity.x, -motion.velocity.y];
    let w = camera_rates(motion.omega);
    let gauss = Normal::new(0.0, noise.sigma_px.max(0.0)).expect("finite sigma");
    let points = cam.points();
    let flow = points
        .iter()
        .map(|&(x, y)| {
            let (ru, rv) = rotational_field(f, x, y, w);
            let mut u = (-f * t[0] / altitude + ru) / cam.rate;
            let mut v = (-f * t[1] / altitude + rv) / cam.rate;
            if noise.sigma_px > 0.0 {
                u += gauss.sample(rng);
                v += gauss.sample(rng);
            }
            if noise.p_out > 0.0 && rng.gen_bool(noise.p_out.min(1.0)) {
                u = rng.gen_range(-1.0..=1.0) * noise.outlier_px;
                v = rng.gen_range(-1.0..=1.0) * noise.outlier_px;
            }
            (u, v)
        })
        .collect();
    FlowSample {
        points,
        flow,
        timestamp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    pub timestamp: f64,
    pub omega: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuModel {
    pub rate: f64,
    /// White noise per axis in rad/s.
    pub sigma: f64,
    /// Constant bias per axis in rad/s.
    pub bias: [f64; 3],
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            rate: 200.0,
            sigma: 0.005,
            bias: [0.01, -0.01, 0.01],
        }
    }
}

impl ImuModel {
    pub fn ideal() -> Self {
        Self {
            rate: 200.0,
            sigma: 0.0,
            bias: [0.0; 3],
        }
    }

    pub fn read<R: Rng>(&self, omega: [f64; 3], timestamp: f64, rng: &mut R) -> ImuReading {
        let gauss = Normal::new(0.0, self.sigma.max(0.0)).expect("finite sigma");
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = omega[k] + self.bias[k] + if self.sigma > 0.0 { gauss.sample(rng) } else { 0.0 };
        }
        ImuReading { timestamp, omega: out }
    }
}

/// Reading closest in time to `t`; the earlier one on ties.
pub fn nearest_imu(readings: &[ImuReading], t: f64) -> Option<&ImuReading> {
    readings
        .iter()
        .min_by(|a, b| (a.timestamp - t).abs().total_cmp(&(b.timestamp - t).abs()))
}

/// Subtract the flow predicted from the IMU rates.
pub fn unrotate(sample: &FlowSample, imu: &ImuReading, cam: &DownCamera) -> FlowSample {
    let w = camera_rates(imu.omega);
    let flow = sample
        .points
        .iter()
        .zip(&sample.flow)
        .map(|(&(x, y), &(u, v))| {
            let (ru, rv) = rotational_field(cam.focal_px, x, y, w);
            (u - ru / cam.rate, v - rv / cam.rate)
        })
        .collect();
    FlowSample {
        points: sample.points.clone(),
        flow,
        timestamp: sample.timestamp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Fraction of points farthest from the median discarded before gating.
    pub trim: f64,
    /// Per-axis standard deviation limit in px/frame.
    pub sigma_gate: f64,
    /// Decay applied to the previous velocity when the gate trips.
    pub gamma: f64,
}

impl GateConfig {
    /// Gate at three times the pixel noise, with a floor so zero-noise
    /// round-off never trips it.
    pub fn for_noise(noise: &FlowNoise) -> Self {
        Self {
            trim: 0.1,
            sigma_gate: (3.0 * noise.sigma_px).max(0.05),
            gamma: 0.9,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Body velocity from unrotated flow, or the decayed previous estimate when
/// the flow is too inconsistent.
pub fn estimate_velocity(
    flow: &FlowSample,
    altitude: f64,
    cam: &DownCamera,
    gate: &GateConfig,
    prev_velocity: Vec2,
) -> (Vec2, bool) {
    let decayed = (prev_velocity * gate.gamma, false);
    if flow.flow.is_empty() || !(altitude > 0.0) {
        return decayed;
    }
    let mu = median(flow.flow.iter().map(|f| f.0).collect());
    let mv = median(flow.flow.iter().map(|f| f.1).collect());
    let mut idx: Vec<usize> = (0..flow.flow.len()).collect();
    let dist = |i: usize| (flow.flow[i].0 - mu).powi(2) + (flow.flow[i].1 - mv).powi(2);
    idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let drop = (gate.trim * idx.len() as f64).ceil() as usize;
    let keep = &idx[..idx.len().saturating_sub(drop).max(1)];
    let (u, su) = mean_std(keep.iter().map(|&i| flow.flow[i].0));
    let (v, sv) = mean_std(keep.iter().map(|&i| flow.flow[i].1));
    if su > gate.sigma_gate || sv > gate.sigma_gate {
        return decayed;
    }
    let k = altitude * cam.rate / cam.focal_px;
    // Camera translation is (vx, −vy); flow is −f·T/h per second.
    (Vec2::new(-u * k, v * k), true)
}

/// Planar pose relative to the start of integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub position: Vec2,
    pub yaw: f64,
    /// Body-frame velocity (forward, left).
    pub velocity: Vec2,
    pub valid: bool,
    /// Time since the last accepted flow estimate.
    pub invalid_for: f64,
    pub time: f64,
}

impl PoseEstimate {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.position.x, self.position.y, self.yaw)
    }
}

/// Euler integrator for gyro yaw and flow velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseIntegrator {
    state: PoseEstimate,
}

impl PoseIntegrator {
    pub fn new(start: Pose2) -> Self {
        Self {
            state: PoseEstimate {
                position: start.position(),
                yaw: start.yaw,
                velocity: Vec2::new(0.0, 0.0),
                valid: true,
                invalid_for: 0.0,
                time: 0.0,
            },
        }
    }

    pub fn estimate(&self) -> PoseEstimate {
        self.state
    }

    /// Re-anchor at `start` (trajectory start).
    pub fn reset(&mut self, start: Pose2) {
        let v = self.state.velocity;
        let t = self.state.time;
        self.state = Self::new(start).state;
        self.state.velocity = v;
        self.state.time = t;
    }

    pub fn imu_update(&mut self, reading: &ImuReading, dt: f64) {
        self.state.yaw = wrap_angle(self.state.yaw + reading.omega[2] * dt);
    }

    pub fn flow_update(&mut self, velocity: Vec2, valid: bool, dt: f64) {
        let s = &mut self.state;
        s.velocity = velocity;
        s.valid = valid;
        s.invalid_for = if valid { 0.0 } else { s.invalid_for + dt };
        let world = Pose2::new(0.0, 0.0, s.yaw).transform_point(velocity);
        s.position = s.position + world * dt;
        s.time += dt;
    }
}

/// Integrate a stream of `(body velocity, yaw)` estimates at spacing `dt`.
pub fn integrate_pose(stream: &[(Vec2, f64)], dt: f64) -> Result<PoseEstimate> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mut p = PoseIntegrator::new(Pose2::identity());
    for &(v, yaw) in stream {
        p.state.yaw = yaw;
        p.flow_update(v, true, dt);
    }
    Ok(p.estimate())
}

/// Write a pose trace as CSV with columns `t,x,y,vx,vy,valid`.
pub fn write_pose_trace<W: std::io::Write>(w: W, trace: &[PoseEstimate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "y", "vx", "vy", "valid"])?;
    for p in trace {
        out.write_record(&[
            p.time.to_string(),
            p.position.x.to_string(),
            p.position.y.to_string(),
            p.velocity.x.to_string(),
            p.velocity.y.to_string(),
            (p.valid as u8).to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Outcome of one open-loop drift trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftTrial {
    pub distance: f64,
    pub error: f64,
}

/// Fly a smooth seeded manoeuvre for `duration` seconds and compare the
/// flow/IMU estimate with the true pose.
pub fn drift_trial<R: Rng>(
    rng: &mut R,
    duration: f64,
    speed: f64,
    altitude: f64,
    cam: &DownCamera,
    noise: &FlowNoise,
    imu: &ImuModel,
) -> DriftTrial {
    let gate = GateConfig::for_noise(noise);
    let dt_imu = 1.0 / imu.rate;
    let dt_flow = 1.0 / cam.rate;
    let per_flow = (imu.rate / cam.rate).round().max(1.0) as usize;
    // Yaw rate follows a random sinusoid within ±0.5 rad/s.
    let amp = rng.gen_range(0.0..0.5);
    let freq = rng.gen_range(0.2..1.0);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let yaw_rate = |t: f64| amp * (freq * t + phase).sin();
    let sonar = Normal::new(0.0, noise.sonar_sigma.max(0.0)).expect("finite sigma");

    let mut truth = Pose2::identity();
    let mut est = PoseIntegrator::new(Pose2::identity());
    let mut readings: Vec<ImuReading> = Vec::new();
    let mut distance = 0.0;
    let steps = (duration * imu.rate).round() as usize;
    let mut t = 0.0;
    for k in 1..=steps {
        let w = yaw_rate(t);
        let omega = [0.0, 0.0, w];
        let next = crate::sim_world::step_vehicle(
            &crate::sim_world::VehicleState {
                position: truth.position(),
                yaw: truth.yaw,
                speed,
                time: t,
            },
            speed,
            w,
            dt_imu,
        );
        distance += speed * dt_imu;
        truth = next.pose();
        t += dt_imu;
        let reading = imu.read(omega, t, rng);
        est.imu_update(&reading, dt_imu);
        readings.push(reading);
        if k % per_flow == 0 {
            let motion = BodyMotion {
                velocity: Vec2::new(speed, 0.0),
                omega,
            };
            let sample = simulate_flow(&motion, altitude, cam, noise, t, rng);
            let imu_now = *nearest_imu(&readings, t).expect("imu reading");
            readings.clear();
            readings.push(imu_now);
            let h = altitude + if noise.sonar_sigma > 0.0 { sonar.sample(rng) } else { 0.0 };
            let (v, ok) = estimate_velocity(&unrotate(&sample, &imu_now, cam), h, cam, &gate, est.estimate().velocity);
            est.flow_update(v, ok, dt_flow);
        }
    }
    DriftTrial {
        distance,
        error: est.estimate().position.dist(truth.position()),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn clean(motion: BodyMotion, h: f64) -> FlowSample {
        simulate_flow(&motion, h, &DownCamera::default(), &FlowNoise::none(), 0.0, &mut rng())
    }

    #[test]
    fn no_motion_no_flow() {
        let s = clean(BodyMotion::default(), 2.0);
        assert!(s.flow.iter().all(|&(u, v)| u == 0.0 && v == 0.0));
    }

    #[test]
    fn translation_flow_magnitude() {
        let s = clean(
            BodyMotion {
                velocity: Vec2::new(1.0, 0.0),
                omega: [0.0; 3],
            },
            2.0,
        );
        // f·v/(h·rate) = 300·1/(2·100).
        for &(u, v) in &s.flow {
            assert!((u + 1.5).abs() < 1e-12 && v == 0.0);
        }
    }

    #[test]
    fn yaw_flow_is_a_curl_with_zero_mean_after_unrotation() {
        let cam = DownCamera::default();
        let motion = BodyMotion {
            velocity: Vec2::new(0.0, 0.0),
            omega: [0.0, 0.0, 0.8],
        };
        let s = clean(motion, 2.0);
        // Tangential: flow ⟂ position vector.
        for (&(x, y), &(u, v)) in s.points.iter().zip(&s.flow) {
            assert!((x * u + y * v).abs() < 1e-9);
        }
        let imu = ImuReading {
            timestamp: 0.0,
            omega: motion.omega,
        };
        let un = unrotate(&s, &imu, &cam);
        assert!(un.flow.iter().all(|&(u, v)| u.abs() < 1e-12 && v.abs() < 1e-12));
    }

    #[test]
    fn zero_noise_round_trip_within_two_percent() {
        let cam = DownCamera::default();
        let gate = GateConfig::for_noise(&FlowNoise::none());
        for &speed in &[0.2, 1.0, 3.0] {
            for &h in &[1.0, 2.5, 4.0] {
                for &heading in &[0.0, 1.0, -2.0] {
                    let v = Vec2::unit(heading) * speed;
                    let motion = BodyMotion {
                        velocity: v,
                        omega: [0.1, -0.2, 0.5],
                    };
                    let s = clean(motion, h);
                    let imu = ImuReading {
                        timestamp: 0.0,
                        omega: motion.omega,
                    };
                    let (est, ok) = estimate_velocity(&unrotate(&s, &imu, &cam), h, &cam, &gate, Vec2::new(0.0, 0.0));
                    assert!(ok);
                    assert!(est.dist(v) <= 0.02 * speed, "{speed} {h} {heading}: {est:?}");
                }
            }
        }
    }

    #[test]
    fn pure_rotation_gives_no_velocity() {
        let cam = DownCamera::default();
        let motion = BodyMotion {
            velocity: Vec2::new(0.0, 0.0),
            omega: [0.3, 0.2, -0.7],
        };
        let s = clean(motion, 1.5);
        let imu = ImuReading {
            timestamp: 0.0,
            omega: motion.omega,
        };
        let gate = GateConfig::for_noise(&FlowNoise::none());
        let (v, ok) = estimate_velocity(&unrotate(&s, &imu, &cam), 1.5, &cam, &gate, Vec2::new(0.0, 0.0));
        assert!(ok && v.norm() <= 0.02);
    }

    #[test]
    fn heavy_outliers_trip_the_gate() {
        let cam = DownCamera::default();
        let noise = FlowNoise {
            p_out: 0.4,
            ..Default::default()
        };
        let gate = GateConfig::for_noise(&noise);
        let motion = BodyMotion {
            velocity: Vec2::new(1.0, 0.0),
            omega: [0.0; 3],
        };
        let mut r = rng();
        let mut tripped = 0;
        for i in 0..50 {
            let s = simulate_flow(&motion, 2.0, &cam, &noise, i as f64, &mut r);
            let (v, ok) = estimate_velocity(&s, 2.0, &cam, &gate, Vec2::new(1.0, 0.5));
            if !ok {
                tripped += 1;
                assert_eq!(v, Vec2::new(0.9, 0.45));
            }
        }
        assert!(tripped >= 45, "{tripped}");
        // With no previous velocity the decayed estimate is zero.
        let s = simulate_flow(&motion, 2.0, &cam, &FlowNoise { p_out: 1.0, ..noise }, 0.0, &mut r);
        assert_eq!(estimate_velocity(&s, 2.0, &cam, &gate, Vec2::new(0.0, 0.0)), (Vec2::new(0.0, 0.0), false));
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let p = integrate_pose(&[(Vec2::new(1.0, 0.0), 0.0); 3], 0.01).unwrap();
        let mut buf = Vec::new();
        write_pose_trace(&mut buf, &[p, p]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,x,y,vx,vy,valid"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn reset_re_anchors_but_keeps_velocity() {
        let mut p = PoseIntegrator::new(Pose2::identity());
        p.flow_update(Vec2::new(2.0, 0.0), true, 0.5);
        p.reset(Pose2::identity());
        let e = p.estimate();
        assert_eq!(e.position, Vec2::new(0.0, 0.0));
        assert_eq!(e.velocity, Vec2::new(2.0, 0.0));
    }

    #[test]
    fn integration_of_constant_velocity() {
        let stream = vec![(Vec2::new(1.0, 0.0), std::f64::consts::FRAC_PI_2); 100];
        let p = integrate_pose(&stream, 0.01).unwrap();
        assert!(p.position.x.abs() < 1e-12);
        assert!((p.position.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_three_second_drift_is_small() {
        let mut r = rng();
        let cam = DownCamera::default();
        let ok = (0..20)
            .filter(|_| {
                let d = drift_trial(&mut r, 3.0, 1.5, 1.5, &cam, &FlowNoise::default(), &ImuModel::default());
                d.error <= 0.05 * d.distance
            })
            .count();
        assert!(ok >= 19, "{ok}");
    }
}
