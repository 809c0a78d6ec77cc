//! Fading-memory obstacle cloud.
//!
//! Every point carries the solid-angle weight of the patch that produced it
//! and decays as `exp(−age/τ)`. Points whose decay factor falls below θ are
//! deleted, so no point survives longer than `−τ·ln θ`.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::perception::{Interpretation, ObstaclePoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub position: Vec2,
    pub birth_time: f64,
    pub weight: f64,
    pub tag: Interpretation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudConfig {
    /// Decay time constant in seconds; 0 keeps points only at their birth
    /// instant.
    pub tau: f64,
    /// Deletion threshold on the decay factor, in (0, 1).
    pub theta: f64,
    pub capacity: usize,
    /// Spatial index cell side (the robot radius).
    pub cell: f64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            theta: (-2.0f64).exp(),
            capacity: 50_000,
            cell: 0.35,
        }
    }
}

impl CloudConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.theta > 0.0 && self.theta < 1.0 && self.capacity > 0 && self.cell > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid cloud config {self:?}")));
        }
        Ok(())
    }

    /// Longest time a point can survive pruning.
    pub fn max_age(&self) -> f64 {
        -self.tau * self.theta.ln()
    }
}

fn decay(tau: f64, age: f64) -> f64 {
    let age = age.max(0.0);
    if tau > 0.0 {
        (-age / tau).exp()
    } else if age == 0.0 {
        1.0
    } else {
        0.0
    }
}

type Cell = (i64, i64);

#[derive(Debug, Clone)]
pub struct ScoredCloud {
    config: CloudConfig,
    points: Vec<ScoredPoint>,
    index: HashMap<Cell, Vec<u32>>,
}

impl ScoredCloud {
    pub fn new(config: CloudConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            points: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn config(&self) -> &CloudConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ScoredPoint] {
        &self.points
    }

    fn cell_of(&self, p: Vec2) -> Cell {
        ((p.x / self.config.cell).floor() as i64, (p.y / self.config.cell).floor() as i64)
    }

    fn reindex(&mut self) {
        self.index.clear();
        for (i, p) in self.points.iter().enumerate() {
            let c = ((p.position.x / self.config.cell).floor() as i64, (p.position.y / self.config.cell).floor() as i64);
            self.index.entry(c).or_default().push(i as u32);
        }
    }

    /// Current score of one point.
    pub fn score_of(&self, p: &ScoredPoint, now: f64) -> f64 {
        p.weight * decay(self.config.tau, now - p.birth_time)
    }

    /// Add points born at `now`. Over capacity, the lowest-scoring points
    /// are evicted first (oldest first among equals).
    pub fn insert(&mut self, points: &[ObstaclePoint], tag: Interpretation, now: f64) {
        self.points.extend(points.iter().filter(|p| p.weight > 0.0).map(|p| ScoredPoint {
            position: p.position,
            birth_time: now,
            weight: p.weight,
            tag,
        }));
        let excess = self.points.len().saturating_sub(self.config.capacity);
        if excess > 0 {
            let mut order: Vec<usize> = (0..self.points.len()).collect();
            order.sort_by(|&a, &b| {
                self.score_of(&self.points[a], now)
                    .total_cmp(&self.score_of(&self.points[b], now))
                    .then(a.cmp(&b))
            });
            let mut drop = vec![false; self.points.len()];
            for &i in &order[..excess] {
                drop[i] = true;
            }
            let mut k = 0;
            self.points.retain(|_| {
                k += 1;
                !drop[k - 1]
            });
        }
        self.reindex();
    }

    /// Delete every point whose decay factor is below θ.
    pub fn prune(&mut self, now: f64) {
        let (tau, theta) = (self.config.tau, self.config.theta);
        let before = self.points.len();
        self.points.retain(|p| decay(tau, now - p.birth_time) >= theta);
        if self.points.len() != before {
            self.reindex();
        }
    }

    /// Σ weight·exp(−age/τ) over points within `radius` of `position`.
    pub fn score_at(&self, position: Vec2, radius: f64, now: f64) -> f64 {
        let mut total = 0.0;
        self.visit(position, radius, |i| total += self.score_of(&self.points[i], now));
        total
    }

    /// Indices of points within `radius`, in deterministic order.
    pub fn within(&self, position: Vec2, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(position, radius, |i| out.push(i));
        out.sort_unstable();
        out
    }

    fn visit(&self, position: Vec2, radius: f64, mut f: impl FnMut(usize)) {
        if self.points.is_empty() || !(radius >= 0.0) {
            return;
        }
        let r2 = radius * radius;
        let reach = (radius / self.config.cell).ceil() as i64;
        let (cx, cy) = self.cell_of(position);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(ids) = self.index.get(&(cx + dx, cy + dy)) {
                    for &i in ids {
                        if self.points[i as usize].position.dist_sq(position) <= r2 {
                            f(i as usize);
                        }
                    }
                }
            }
        }
    }

    /// Frozen scores at `now` for repeated queries within one planning cycle.
    pub fn snapshot(&self, now: f64) -> CloudSnapshot<'_> {
        CloudSnapshot {
            cloud: self,
            scores: self.points.iter().map(|p| self.score_of(p, now)).collect(),
        }
    }

    /// CSV `x,y,score,tag` at `now`.
    pub fn write_csv<W: Write>(&self, now: f64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "score", "tag"])?;
        for p in &self.points {
            let tag = match p.tag {
                Interpretation::Near => "near",
                Interpretation::Point => "point",
                Interpretation::Far => "far",
            };
            w.write_record([
                p.position.x.to_string(),
                p.position.y.to_string(),
                self.score_of(p, now).to_string(),
                tag.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub struct CloudSnapshot<'a> {
    cloud: &'a ScoredCloud,
    scores: Vec<f64>,
}

impl CloudSnapshot<'_> {
    pub fn score_at(&self, position: Vec2, radius: f64) -> f64 {
        let mut total = 0.0;
        self.cloud.visit(position, radius, |i| total += self.scores[i]);
        total
    }
}
