//! Paired-seed evaluation across run configurations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, FailureType, Outcome, RunReport};
use super::RunConfig;
use crate::learn::DepthModel;
use crate::traj_lib::TrajectoryLibrary;
use crate::{Error, Result};

/// Aggregate over the seeds of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub label: String,
    pub mode: String,
    pub density: f64,
    pub episodes: usize,
    pub total_distance: f64,
    pub mean_distance: f64,
    pub collisions: usize,
    pub goal_reached: usize,
    pub max_distance: usize,
    pub timeouts: usize,
    pub large_encountered: usize,
    pub large_avoided: usize,
    pub small_encountered: usize,
    pub small_avoided: usize,
    /// Percent of encountered trees avoided (NaN if none were encountered).
    pub pct_large: f64,
    pub pct_small: f64,
    pub pct_overall: f64,
    pub fail_large_tree: usize,
    pub fail_thin_tree: usize,
    pub fail_foliage_proxy: usize,
    pub fail_narrow_fov: usize,
}

fn pct(a: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        100.0 * a as f64 / n as f64
    }
}

impl SuiteRow {
    pub fn from_reports(label: &str, cfg: &RunConfig, reports: &[RunReport]) -> Self {
        let count = |o: Outcome| reports.iter().filter(|r| r.outcome == o).count();
        let fails = |f: FailureType| reports.iter().filter(|r| r.failure_type == Some(f)).count();
        let sum = |f: &dyn Fn(&RunReport) -> usize| reports.iter().map(f).sum::<usize>();
        let le = sum(&|r| r.trees_encountered.large);
        let la = sum(&|r| r.trees_avoided.large);
        let se = sum(&|r| r.trees_encountered.small);
        let sa = sum(&|r| r.trees_avoided.small);
        let total: f64 = reports.iter().map(|r| r.distance_flown).sum();
        Self {
            label: label.to_string(),
            mode: cfg.mode.name().to_string(),
            density: cfg.scenario.density,
            episodes: reports.len(),
            total_distance: total,
            mean_distance: if reports.is_empty() { 0.0 } else { total / reports.len() as f64 },
            collisions: count(Outcome::Collision),
            goal_reached: count(Outcome::GoalReached),
            max_distance: count(Outcome::MaxDistance),
            timeouts: count(Outcome::Timeout),
            large_encountered: le,
            large_avoided: la,
            small_encountered: se,
            small_avoided: sa,
            pct_large: pct(la, le),
            pct_small: pct(sa, se),
            pct_overall: pct(la + sa, le + se),
            fail_large_tree: fails(FailureType::LargeTree),
            fail_thin_tree: fails(FailureType::ThinTree),
            fail_foliage_proxy: fails(FailureType::FoliageProxy),
            fail_narrow_fov: fails(FailureType::NarrowFov),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub seeds: Vec<u64>,
    pub rows: Vec<SuiteRow>,
    /// `reports[i][k]` is configuration `i` on `seeds[k]`.
    pub reports: Vec<Vec<RunReport>>,
}

impl SuiteResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-seed distances of configuration `i`.
    pub fn distances(&self, i: usize) -> Vec<f64> {
        self.reports[i].iter().map(|r| r.distance_flown).collect()
    }
}

/// Run every configuration on every seed. The seed overrides each config's
/// own, so configuration `i` and `j` fly identical forests on seed `k`.
pub fn evaluate_suite(
    configs: &[(String, RunConfig)],
    seeds: &[u64],
    model: Option<&DepthModel>,
    library: &TrajectoryLibrary,
) -> Result<SuiteResult> {
    let mut rows = Vec::with_capacity(configs.len());
    let mut reports = Vec::with_capacity(configs.len());
    for (label, cfg) in configs {
        let mut rs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let c = RunConfig {
                seed,
                log_path: None,
                ..cfg.clone()
            };
            rs.push(run_episode(&c, model, library)?);
        }
        log::info!("{label}: {} episodes", rs.len());
        rows.push(SuiteRow::from_reports(label, cfg, &rs));
        reports.push(rs);
    }
    Ok(SuiteResult {
        seeds: seeds.to_vec(),
        rows,
        reports,
    })
}

/// Paired sign test of `a > b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided exact binomial p-value P(X ≥ wins), X ~ Bin(wins + losses, ½).
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    // Upper tail via log-space binomial coefficients.
    let ln_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let ln_half_n = n as f64 * 0.5f64.ln();
    let p_value = if n == 0 {
        1.0
    } else {
        (wins..=n)
            .map(|k| (ln_fact(n) - ln_fact(k) - ln_fact(n - k) + ln_half_n).exp())
            .sum::<f64>()
            .min(1.0)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}
