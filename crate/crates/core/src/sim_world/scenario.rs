use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Bounds, Pose2, Vec2};
use crate::{Error, Result};

/// Trees at or above this radius count as "large" in reports.
pub const LARGE_TREE_RADIUS: f64 = 0.25;

/// Radius of the tree-free disk around the start position.
const START_CLEARANCE: f64 = 2.0;

/// Minimum surface-to-surface gap between trees.
const MIN_GAP: f64 = 0.2;

/// Random sequential placement jams around 0.55 packing; stay well below it.
const MAX_PACKING: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Tree {
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_large(&self) -> bool {
        self.radius >= LARGE_TREE_RADIUS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestScenario {
    pub trees: Vec<Tree>,
    pub bounds: Bounds,
    /// Requested density in trees per m².
    pub density: f64,
    pub seed: u64,
    pub goal_direction: Vec2,
}

impl ForestScenario {
    /// A scenario with no trees; useful for tests and open-field runs.
    pub fn empty(bounds: Bounds) -> Self {
        Self {
            trees: Vec::new(),
            bounds,
            density: 0.0,
            seed: 0,
            goal_direction: Vec2::new(1.0, 0.0),
        }
    }

    /// Scenario with hand-placed trees.
    pub fn with_trees(bounds: Bounds, trees: Vec<Tree>) -> Self {
        let density = trees.len() as f64 / bounds.area();
        Self {
            trees,
            bounds,
            density,
            seed: 0,
            goal_direction: Vec2::new(1.0, 0.0),
        }
    }

    /// Start pose: 5 m in from the lower-x edge, centred in y, facing the goal.
    pub fn start_pose(&self) -> Pose2 {
        let b = &self.bounds;
        let inset = (b.width() / 2.0).min(5.0);
        Pose2::new(
            b.min_x + inset,
            0.5 * (b.min_y + b.max_y),
            self.goal_direction.y.atan2(self.goal_direction.x),
        )
    }

    /// Serialise as the line-oriented scenario format:
    ///
    /// ```text
    /// canopy-forest 1
    /// bounds <min_x> <min_y> <max_x> <max_y>
    /// seed <u64>
    /// density <trees per m²>
    /// goal <dx> <dy>
    /// trees <count>
    /// <x> <y> <radius>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = &self.bounds;
        // `{}` on f64 prints the shortest representation that parses back exactly.
        let _ = writeln!(s, "canopy-forest 1");
        let _ = writeln!(s, "bounds {} {} {} {}", b.min_x, b.min_y, b.max_x, b.max_y);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "density {}", self.density);
        let _ = writeln!(s, "goal {} {}", self.goal_direction.x, self.goal_direction.y);
        let _ = writeln!(s, "trees {}", self.trees.len());
        for t in &self.trees {
            let _ = writeln!(s, "{} {} {}", t.x, t.y, t.radius);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "scenario";
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));

        let mut header = |key: &str| -> Result<Vec<&str>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(ctx, format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.collect()),
                other => Err(Error::parse(
                    ctx,
                    format!("expected `{key}`, found {:?}", other.unwrap_or("")),
                )),
            }
        };

        let magic = header("canopy-forest")?;
        if magic != ["1"] {
            return Err(Error::parse(ctx, format!("unsupported version {magic:?}")));
        }
        let b = parse_floats(&header("bounds")?, 4, ctx)?;
        let seed: u64 = header("seed")?
            .first()
            .ok_or_else(|| Error::parse(ctx, "seed value missing"))?
            .parse()
            .map_err(|e| Error::parse(ctx, format!("seed: {e}")))?;
        let density = parse_floats(&header("density")?, 1, ctx)?[0];
        let g = parse_floats(&header("goal")?, 2, ctx)?;
        let count: usize = header("trees")?
            .first()
            .ok_or_else(|| Error::parse(ctx, "tree count missing"))?
            .parse()
            .map_err(|e| Error::parse(ctx, format!("tree count: {e}")))?;

        let mut trees = Vec::with_capacity(count);
        for line in lines.by_ref().take(count) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let v = parse_floats(&parts, 3, ctx)?;
            trees.push(Tree {
                x: v[0],
                y: v[1],
                radius: v[2],
            });
        }
        if trees.len() != count {
            return Err(Error::parse(
                ctx,
                format!("expected {count} trees, found {}", trees.len()),
            ));
        }
        if lines.next().is_some() {
            return Err(Error::parse(ctx, "trailing data after tree list"));
        }
        Ok(Self {
            trees,
            bounds: Bounds::new(b[0], b[1], b[2], b[3]),
            density,
            seed,
            goal_direction: Vec2::new(g[0], g[1]),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_floats(parts: &[&str], n: usize, ctx: &str) -> Result<Vec<f64>> {
    if parts.len() != n {
        return Err(Error::parse(
            ctx,
            format!("expected {n} numbers, found {}", parts.len()),
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| Error::parse(ctx, format!("{p:?}: {e}")))
        })
        .collect()
}

fn sample_radius(rng: &mut impl Rng) -> f64 {
    if rng.gen::<f64>() < 0.6 {
        rng.gen_range(0.25..0.5)
    } else {
        rng.gen_range(0.08..0.25)
    }
}

/// Poisson-disk tree placement.
///
/// Places `round(density · area)` trees by dart throwing with a minimum
/// centre spacing of `0.6 / sqrt(density)` (and never closer than the sum of
/// radii plus a 0.2 m gap). A 2 m disk around [`ForestScenario::start_pose`]
/// is kept clear.
pub fn generate_scenario(density: f64, bounds: Bounds, seed: u64) -> Result<ForestScenario> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "density must be positive, got {density}"
        )));
    }
    if bounds.is_degenerate() {
        return Err(Error::InvalidArgument(format!(
            "degenerate bounds {bounds:?}"
        )));
    }

    let area = bounds.area();
    let target = (density * area).round() as usize;
    let spacing = 0.6 / density.sqrt();
    // Expected exclusion diameter for the radius mixture (mean radius ≈ 0.27 m).
    let diameter = spacing.max(2.0 * 0.27 + MIN_GAP);
    let packing = target as f64 * std::f64::consts::PI * (diameter / 2.0).powi(2) / area;
    if packing > MAX_PACKING {
        return Err(Error::InfeasibleDensity { density, area });
    }

    let mut scenario = ForestScenario {
        trees: Vec::with_capacity(target),
        bounds,
        density,
        seed,
        goal_direction: Vec2::new(1.0, 0.0),
    };
    let start = scenario.start_pose().position();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Spatial hash over cells of side `spacing` so each candidate only checks
    // nearby trees.
    let cell = spacing.max(2.0 * 0.5 + MIN_GAP);
    let nx = (bounds.width() / cell).ceil().max(1.0) as usize;
    let ny = (bounds.height() / cell).ceil().max(1.0) as usize;
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    let cell_of = |p: Vec2| -> (usize, usize) {
        let cx = (((p.x - bounds.min_x) / cell) as usize).min(nx - 1);
        let cy = (((p.y - bounds.min_y) / cell) as usize).min(ny - 1);
        (cx, cy)
    };

    let max_attempts = 200 * target.max(1);
    let mut attempts = 0;
    while scenario.trees.len() < target {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InfeasibleDensity { density, area });
        }
        let radius = sample_radius(&mut rng);
        let p = Vec2::new(
            rng.gen_range(bounds.min_x + radius..=bounds.max_x - radius),
            rng.gen_range(bounds.min_y + radius..=bounds.max_y - radius),
        );
        if p.dist(start) < START_CLEARANCE + radius {
            continue;
        }
        let (cx, cy) = cell_of(p);
        let mut ok = true;
        'scan: for gx in cx.saturating_sub(1)..=(cx + 1).min(nx - 1) {
            for gy in cy.saturating_sub(1)..=(cy + 1).min(ny - 1) {
                for &j in &grid[gx * ny + gy] {
                    let t = &scenario.trees[j];
                    let need = spacing.max(radius + t.radius + MIN_GAP);
                    if p.dist(t.center()) < need {
                        ok = false;
                        break 'scan;
                    }
                }
            }
        }
        if ok {
            grid[cx * ny + cy].push(scenario.trees.len());
            scenario.trees.push(Tree {
                x: p.x,
                y: p.y,
                radius,
            });
        }
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn high_density_tree_count() {
        let s = generate_scenario(1.0 / 36.0, Bounds::sized(60.0, 60.0), 7).unwrap();
        let n = s.trees.len() as f64;
        assert!((90.0..=110.0).contains(&n), "{n}");
    }

    #[test]
    fn low_density_tree_count() {
        let s = generate_scenario(1.0 / 144.0, Bounds::sized(60.0, 60.0), 7).unwrap();
        let n = s.trees.len() as f64;
        assert!((22.5..=27.5).contains(&n), "{n}");
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_scenario(1.0 / 36.0, Bounds::sized(60.0, 60.0), 11).unwrap();
        let b = generate_scenario(1.0 / 36.0, Bounds::sized(60.0, 60.0), 11).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(1.0 / 36.0, Bounds::sized(60.0, 60.0), 12).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn invariants_hold() {
        for seed in 0..5 {
            let s = generate_scenario(1.0 / 25.0, Bounds::sized(50.0, 40.0), seed).unwrap();
            let start = s.start_pose().position();
            for (i, a) in s.trees.iter().enumerate() {
                assert!(a.radius > 0.0);
                assert!(s.bounds.contains(a.center()));
                assert!(a.center().dist(start) >= START_CLEARANCE + a.radius);
                for b in &s.trees[i + 1..] {
                    assert!(a.center().dist(b.center()) >= a.radius + b.radius);
                }
            }
        }
    }

    #[test]
    fn infeasible_density_is_rejected() {
        let err = generate_scenario(2.0, Bounds::sized(20.0, 20.0), 1).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDensity { .. }));
        assert!(generate_scenario(0.0, Bounds::sized(20.0, 20.0), 1).is_err());
        assert!(generate_scenario(0.1, Bounds::sized(0.0, 20.0), 1).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let s = generate_scenario(1.0 / 36.0, Bounds::new(-3.5, 1.25, 40.0, 30.0), 99).unwrap();
        let back = ForestScenario::from_text(&s.to_text()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn malformed_text_is_an_error() {
        assert!(ForestScenario::from_text("canopy-forest 2\n").is_err());
        let s = ForestScenario::empty(Bounds::sized(5.0, 5.0)).to_text();
        let truncated = s.replace("trees 0", "trees 1");
        assert!(ForestScenario::from_text(&truncated).is_err());
    }
}
