//! Dense two-segment arc library and maximum-dispersion subset selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    /// Curvature levels per segment; the dense library has `levels²` paths.
    pub levels: usize,
    pub length: f64,
    pub ds: f64,
    /// 1/m; equals the planning yaw-rate limit over cruise speed.
    pub kappa_max: f64,
    pub k: usize,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            levels: 49,
            length: 5.0,
            ds: 0.1,
            kappa_max: 0.4,
            k: 78,
        }
    }
}

/// A body-frame path sampled at fixed arc-length spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    pub ds: f64,
    pub samples: Vec<Pose2>,
}

impl Trajectory {
    pub fn length(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.ds
    }

    pub fn end(&self) -> Pose2 {
        *self.samples.last().expect("non-empty trajectory")
    }

    /// Samples expressed in the frame where the body sits at `pose`.
    pub fn to_world(&self, pose: &Pose2) -> Vec<Pose2> {
        self.samples.iter().map(|s| pose.compose(s)).collect()
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.kappa1.abs().max(self.kappa2.abs())
    }
}

/// Advance `p` by arc length `s` at constant curvature `kappa`.
pub fn arc_step(p: Pose2, kappa: f64, s: f64) -> Pose2 {
    let yaw1 = p.yaw + kappa * s;
    let d = if kappa.abs() < 1e-12 {
        Vec2::unit(p.yaw) * s
    } else {
        Vec2::new(yaw1.sin() - p.yaw.sin(), p.yaw.cos() - yaw1.cos()) * (1.0 / kappa)
    };
    Pose2::new(p.x + d.x, p.y + d.y, wrap_angle(yaw1))
}

fn two_segment(id: usize, kappa1: f64, kappa2: f64, length: f64, ds: f64) -> Trajectory {
    let n = (length / ds).round() as usize;
    let half = length / 2.0;
    let mid = arc_step(Pose2::identity(), kappa1, half);
    let samples = (0..=n)
        .map(|i| {
            let s = i as f64 * ds;
            if s <= half {
                arc_step(Pose2::identity(), kappa1, s)
            } else {
                arc_step(mid, kappa2, s - half)
            }
        })
        .collect();
    Trajectory {
        id,
        kappa1,
        kappa2,
        ds,
        samples,
    }
}

/// `n` two-segment constant-curvature paths on a square curvature grid.
pub fn generate_dense(n: usize, cfg: &LibraryConfig) -> Result<Vec<Trajectory>> {
    let levels = (n as f64).sqrt().round() as usize;
    if levels < 2 || levels * levels != n {
        return Err(Error::InvalidArgument(format!("library size {n} is not a square of at least 4")));
    }
    if !(cfg.length > 0.0 && cfg.ds > 0.0 && cfg.ds <= cfg.length && cfg.kappa_max > 0.0) {
        return Err(Error::InvalidArgument("length, ds and kappa_max must be positive".into()));
    }
    let mid = (levels - 1) as f64 / 2.0;
    let kappa = |i: usize| cfg.kappa_max * ((i as f64 - mid) / mid);
    let mut out = Vec::with_capacity(n);
    for i in 0..levels {
        for j in 0..levels {
            out.push(two_segment(out.len(), kappa(i), kappa(j), cfg.length, cfg.ds));
        }
    }
    Ok(out)
}

/// Largest distance between samples at equal arc length.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.samples
        .iter()
        .zip(&b.samples)
        .map(|(p, q)| p.position().dist_sq(q.position()))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Greedy farthest-point selection of `k` ids. The first pick is the
/// straightest path; ties go to the lower id.
pub fn select_dispersion(dense: &[Trajectory], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > dense.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds library size {}", dense.len())));
    }
    let first = (0..dense.len())
        .min_by(|&a, &b| {
            let ca = dense[a].kappa1.abs() + dense[a].kappa2.abs();
            let cb = dense[b].kappa1.abs() + dense[b].kappa2.abs();
            ca.total_cmp(&cb).then(a.cmp(&b))
        })
        .expect("non-empty library");
    let mut chosen = vec![first];
    let mut taken = vec![false; dense.len()];
    taken[first] = true;
    let mut nearest: Vec<f64> = dense.iter().map(|t| trajectory_distance(t, &dense[first])).collect();
    while chosen.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..dense.len() {
            if !taken[i] && best.map_or(true, |b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("candidates remain");
        taken[b] = true;
        chosen.push(b);
        for i in 0..dense.len() {
            if !taken[i] {
                nearest[i] = nearest[i].min(trajectory_distance(&dense[i], &dense[b]));
            }
        }
    }
    Ok(chosen)
}

/// Smallest pairwise distance within a set.
pub fn min_pairwise_distance(set: &[&Trajectory]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            m = m.min(trajectory_distance(set[i], set[j]));
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLibrary {
    pub config: LibraryConfig,
    pub dense: Vec<Trajectory>,
    /// Greedy order.
    pub selected: Vec<usize>,
}

impl TrajectoryLibrary {
    pub fn build(cfg: &LibraryConfig) -> Result<Self> {
        let dense = generate_dense(cfg.levels * cfg.levels, cfg)?;
        let selected = select_dispersion(&dense, cfg.k)?;
        Ok(Self {
            config: *cfg,
            dense,
            selected,
        })
    }

    pub fn selected(&self) -> impl Iterator<Item = &Trajectory> {
        self.selected.iter().map(|&i| &self.dense[i])
    }

    pub fn get(&self, id: usize) -> Option<&Trajectory> {
        self.dense.get(id)
    }

    /// JSON dump of the selected trajectories.
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Dump<'a> {
            config: &'a LibraryConfig,
            dense_size: usize,
            selected: Vec<&'a Trajectory>,
        }
        let dump = Dump {
            config: &self.config,
            dense_size: self.dense.len(),
            selected: self.selected().collect(),
        };
        let text = serde_json::to_string_pretty(&dump)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Rebuild from a dump; the dense set is regenerated from the config and
    /// must reproduce the stored selection.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Dump {
            config: LibraryConfig,
            selected: Vec<Trajectory>,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dump: Dump = serde_json::from_str(&text)?;
        let dense = generate_dense(dump.config.levels * dump.config.levels, &dump.config)?;
        for t in &dump.selected {
            if dense.get(t.id) != Some(t) {
                return Err(Error::parse("trajectory library", format!("trajectory {} does not match its config", t.id)));
            }
        }
        Ok(Self {
            config: dump.config,
            selected: dump.selected.iter().map(|t| t.id).collect(),
            dense,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> Vec<Trajectory> {
        generate_dense(2401, &LibraryConfig::default()).unwrap()
    }

    #[test]
    fn straight_path() {
        let d = lib();
        let t = &d[24 * 49 + 24];
        assert_eq!((t.kappa1, t.kappa2), (0.0, 0.0));
        assert_eq!(t.samples.len(), 51);
        assert!((t.end().x - 5.0).abs() < 1e-12 && t.end().y == 0.0);
    }

    #[test]
    fn s_curve_endpoint_closed_form() {
        let cfg = LibraryConfig::default();
        let d = lib();
        let t = &d[48 * 49];
        let k = cfg.kappa_max;
        assert_eq!((t.kappa1, t.kappa2), (k, -k));
        // First arc ends at heading kL/2; the mirrored second arc returns it to 0.
        let h = 2.5;
        let (x1, y1) = ((k * h).sin() / k, (1.0 - (k * h).cos()) / k);
        let expect = (2.0 * x1, 2.0 * y1);
        assert!((t.end().x - expect.0).abs() < 1e-12);
        assert!((t.end().y - expect.1).abs() < 1e-12);
        assert!(t.end().yaw.abs() < 1e-12);
    }

    #[test]
    fn sample_spacing_and_length() {
        for t in lib().iter().step_by(97) {
            assert!((t.length() - 5.0).abs() <= 0.05);
            for w in t.samples.windows(2) {
                // Chord of a 0.1 m arc at curvature ≤ 0.4.
                let c = w[0].position().dist(w[1].position());
                assert!(c <= 0.1 + 1e-12 && c > 0.0999);
            }
        }
    }

    #[test]
    fn end_poses_are_distinct() {
        // Positions alone can coincide: (−2κ, 2κ) and (−κ, −κ) share a chord,
        // so distinctness is checked on the full end pose.
        let d = lib();
        let mut ends: Vec<(i64, i64, i64)> = d
            .iter()
            .map(|t| {
                let e = t.end();
                ((e.x * 1e9) as i64, (e.y * 1e9) as i64, (e.yaw * 1e9) as i64)
            })
            .collect();
        ends.sort();
        ends.dedup();
        assert_eq!(ends.len(), 2401);
    }

    #[test]
    fn first_pick_is_straight_and_second_is_extreme() {
        let d = lib();
        let sel = select_dispersion(&d, 2).unwrap();
        assert_eq!(sel[0], 24 * 49 + 24);
        let t = &d[sel[1]];
        assert_eq!(t.kappa1.abs(), 0.4);
        assert_eq!(t.kappa2.abs(), 0.4);
        assert_eq!(t.kappa1.signum(), t.kappa2.signum());
        // Mirror image of the pick has a higher id.
        assert!(t.kappa1 < 0.0);
    }

    #[test]
    fn selection_is_nested_and_bounded() {
        let d = lib();
        let a = select_dispersion(&d, 20).unwrap();
        let b = select_dispersion(&d, 78).unwrap();
        assert_eq!(a[..], b[..20]);
        for &i in &b {
            assert!(d[i].max_abs_curvature() <= 0.4 + 1e-15);
        }
        assert!(select_dispersion(&d, 0).is_err());
    }

    #[test]
    fn distance_is_a_metric_on_samples() {
        let d = lib();
        let (a, b, c) = (&d[0], &d[1200], &d[2400]);
        assert_eq!(trajectory_distance(a, a), 0.0);
        assert_eq!(trajectory_distance(a, b), trajectory_distance(b, a));
        assert!(trajectory_distance(a, c) <= trajectory_distance(a, b) + trajectory_distance(b, c) + 1e-12);
    }

    #[test]
    fn library_dump_round_trip() {
        let cfg = LibraryConfig {
            levels: 7,
            k: 5,
            ..Default::default()
        };
        let l = TrajectoryLibrary::build(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lib.json");
        l.save(&p).unwrap();
        assert_eq!(TrajectoryLibrary::load(&p).unwrap(), l);
    }
}
