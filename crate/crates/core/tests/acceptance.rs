//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion.
//! Tests hold a global lock so timing criteria never share the CPU.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use canopy::features::{FeatureGroup, FeatureLayout, GroupCosts};
use canopy::harness::{
    bench_cycles, build_corpus, dodge_redodge, dodge_redodge_config, evaluate_suite, run_episode, run_episode_in,
    sign_test, train_pipeline, Corpus, CorpusConfig, Outcome, PredictionMode, RunConfig, ScenarioConfig,
};
use canopy::learn::{select_budgeted_groups, subset_error, train_variant, Dataset, DepthModel, TrainOptions};
use canopy::geom::Vec2;
use canopy::pose_flow::{
    drift_trial, estimate_velocity, simulate_flow, unrotate, BodyMotion, DownCamera, FlowNoise, GateConfig, ImuModel, ImuReading,
};
use canopy::sim_world::CameraModel;
use canopy::traj_lib::{generate_dense, select_dispersion, trajectory_distance, LibraryConfig, TrajectoryLibrary};

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
}

struct Trained {
    corpus: Corpus,
    model: DepthModel,
}

/// Corpus and model shared by the learning and closed-loop criteria.
fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = CorpusConfig {
            n_scenarios: 20,
            frames_per_scenario: 50,
            ..Default::default()
        };
        let corpus = build_corpus(&cfg).expect("corpus");
        let model = train_pipeline(&corpus, cfg.patch_size, &GroupCosts::nominal(), 100.0, &TrainOptions::default())
            .expect("model");
        Trained { corpus, model }
    })
}

#[test]
fn c1_multiple_beats_single() {
    let _g = serial();
    let t0 = Instant::now();
    let model = &trained().model;
    let library = TrajectoryLibrary::build(&LibraryConfig::default()).unwrap();
    let seeds: Vec<u64> = (0..100).collect();
    let mut all_pass = true;
    let mut details = Vec::new();
    for density in [1.0 / 36.0, 1.0 / 144.0] {
        let base = RunConfig {
            scenario: ScenarioConfig {
                density,
                ..Default::default()
            },
            ..Default::default()
        };
        let configs = vec![
            ("single".to_string(), RunConfig { mode: PredictionMode::Single, ..base.clone() }),
            ("multiple".to_string(), RunConfig { mode: PredictionMode::Multiple, ..base.clone() }),
        ];
        let res = evaluate_suite(&configs, &seeds, Some(model), &library).unwrap();
        let (s, m) = (&res.rows[0], &res.rows[1]);
        let test = sign_test(&res.distances(1), &res.distances(0));
        let avoid = m.pct_overall > s.pct_overall;
        let dist = m.mean_distance >= 1.2 * s.mean_distance;
        let sig = test.p_value < 0.05;
        all_pass &= avoid && dist && sig;
        details.push(format!(
            "1/{:.0}: avoided {:.2}% vs {:.2}%, mean distance {:.2} vs {:.2} m, collisions {} vs {}, sign test {}/{}/{} p={:.3}",
            1.0 / density,
            m.pct_overall,
            s.pct_overall,
            m.mean_distance,
            s.mean_distance,
            m.collisions,
            s.collisions,
            test.wins,
            test.losses,
            test.ties,
            test.p_value
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    report(1, all_pass, format!("{} ({secs:.0} s)", details.join("; ")));
    assert!(all_pass, "multiple vs single: {}", details.join("; "));
}

#[test]
fn c2_stagewise_beats_linear() {
    let _g = serial();
    let t0 = Instant::now();
    let corpus = &trained().corpus;
    let groups = corpus.train.layout.groups();
    let linear = train_variant(&corpus.train, &corpus.holdout, &groups, &TrainOptions { n_stages: 1, ..Default::default() }).unwrap();
    let staged = train_variant(&corpus.train, &corpus.holdout, &groups, &TrainOptions { n_stages: 3, ..Default::default() }).unwrap();
    let gain = 1.0 - staged.holdout_rmse / linear.holdout_rmse;
    let secs = t0.elapsed().as_secs_f64();
    let pass = gain >= 0.05 && secs <= 120.0;
    report(
        2,
        pass,
        format!("holdout RMSE 1-stage {:.3} m, 3-stage {:.3} m, reduction {:.1}% ({secs:.1} s)", linear.holdout_rmse, staged.holdout_rmse, 100.0 * gain),
    );
    assert!(pass);
}

/// Five groups of noisy views of a few latent factors, with one group that
/// only helps in combination with another.
fn synthetic_groups(n: usize, seed: u64) -> Dataset {
    let costs = GroupCosts::nominal();
    let layout = FeatureLayout::all(&costs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, layout.dim());
    let mut y = DVector::zeros(n);
    let noise = [0.3, 0.8, 0.5, 1.5, 0.4];
    for i in 0..n {
        let z: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let shared: f64 = rng.sample(StandardNormal);
        y[i] = 2.0 * z[0] + 1.0 * z[1] - 1.5 * z[2] + 0.5 * z[3] + 0.2 * rng.sample::<f64, _>(StandardNormal);
        for slot in &layout.slots {
            let g = slot.group.index();
            for c in 0..slot.len {
                let e: f64 = rng.sample(StandardNormal);
                let v = match slot.group {
                    FeatureGroup::FlowStats => z[0] + noise[g] * e,
                    FeatureGroup::Radon => z[1] + 0.5 * z[0] + noise[g] * e,
                    FeatureGroup::StructureTensor => z[2] + shared + noise[g] * e,
                    // Cancels the nuisance in the structure group.
                    FeatureGroup::Laws => shared + z[3] + noise[g] * e,
                    FeatureGroup::Hog => z[0] + z[2] + noise[g] * e * (1.0 + (c % 3) as f64),
                };
                x[(i, slot.offset + c)] = v;
            }
        }
    }
    Dataset::new(layout, x, y).unwrap()
}

#[test]
fn c3_greedy_selection_near_optimal() {
    let _g = serial();
    let t0 = Instant::now();
    let data = synthetic_groups(3000, 5);
    let costs = GroupCosts::nominal();
    let lambda = 1e-3;
    let (train, valid) = data.split_every(10);
    let all = FeatureGroup::ALL;
    let mut worst: f64 = 0.0;
    let mut nested = true;
    let mut prev: Vec<FeatureGroup> = Vec::new();
    // Brute force: (cost, validation error) of every subset.
    let subsets: Vec<(f64, f64)> = (0u32..32)
        .map(|mask| {
            let subset: Vec<FeatureGroup> = all.iter().copied().filter(|g| mask & (1 << g.index()) != 0).collect();
            let cost = subset.iter().map(|&g| costs.get(g)).sum::<f64>();
            (cost, subset_error(&train, &valid, &subset, lambda).unwrap())
        })
        .collect();
    let budgets: Vec<f64> = (1..=33).map(|k| 0.5 * k as f64).collect();
    for &b in &budgets {
        let plan = select_budgeted_groups(&data, &costs, b, lambda).unwrap();
        let groups = plan.groups();
        nested &= groups.len() >= prev.len() && groups[..prev.len()] == prev[..];
        prev = groups;
        let best = subsets
            .iter()
            .filter(|(cost, _)| *cost <= b)
            .map(|(_, e)| *e)
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(plan.validation_error() / best);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst <= 1.25 && nested && secs <= 60.0;
    report(3, pass, format!("worst greedy/optimal error ratio {worst:.3} over {} budgets, nested {nested} ({secs:.1} s)", budgets.len()));
    assert!(pass);
}

#[test]
fn c4_dispersion_selection() {
    let _g = serial();
    let cfg = LibraryConfig::default();
    let dense = generate_dense(2401, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let pool: Vec<_> = sample(&mut rng, dense.len(), 20).into_iter().map(|i| dense[i].clone()).collect();
        let d: Vec<Vec<f64>> = pool.iter().map(|a| pool.iter().map(|b| trajectory_distance(a, b)).collect()).collect();
        let min_pair = |s: &[usize]| {
            let mut m = f64::INFINITY;
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    m = m.min(d[s[i]][s[j]]);
                }
            }
            m
        };
        let greedy = min_pair(&select_dispersion(&pool, 5).unwrap());
        let mut best: f64 = 0.0;
        for a in 0..20 {
            for b in a + 1..20 {
                for c in b + 1..20 {
                    for e in c + 1..20 {
                        for f in e + 1..20 {
                            best = best.max(min_pair(&[a, b, c, e, f]));
                        }
                    }
                }
            }
        }
        worst = worst.min(greedy / best);
    }
    let t0 = Instant::now();
    let lib = TrajectoryLibrary::build(&cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst >= 0.5 && lib.selected.len() == 78 && secs <= 10.0;
    report(4, pass, format!("worst greedy/exhaustive ratio {worst:.3} over 100 instances; 2401 -> {} in {secs:.2} s", lib.selected.len()));
    assert!(pass);
}

#[test]
fn c5_planning_cycle_budget() {
    let _g = serial();
    let model = &trained().model;
    let library = TrajectoryLibrary::build(&LibraryConfig::default()).unwrap();
    let r = bench_cycles(model, &library, &CameraModel::forward(320, 240), 100, 10_000, 5).unwrap();
    let (mean, max) = (r.mean_cycle_ms(), r.max_cycle_ms());
    let pass = mean <= 200.0;
    let perc = r.perception_ms.iter().sum::<f64>() / r.perception_ms.len() as f64;
    report(
        5,
        pass,
        format!("mean cycle {mean:.1} ms (perception {perc:.1} ms), max {max:.1} ms over 100 cycles at 320x240, 78 x 3 x 10k points"),
    );
    assert!(pass);
}

#[test]
fn c6_pose_drift() {
    let _g = serial();
    let cam = DownCamera::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = drift_trial(&mut rng, 3.0, 1.5, 1.5, &cam, &FlowNoise::default(), &ImuModel::default());
        let rel = t.error / t.distance;
        worst = worst.max(rel);
        if rel <= 0.05 {
            ok += 1;
        }
    }
    // Zero-noise velocity recovery after unrotation.
    let gate = GateConfig::for_noise(&FlowNoise::none());
    let mut clean_worst: f64 = 0.0;
    for _ in 0..100 {
        let v = Vec2::unit(rng.gen_range(-3.0..3.0)) * rng.gen_range(0.2..3.0);
        let omega = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0)];
        let h = rng.gen_range(1.0..4.0);
        let motion = BodyMotion { velocity: v, omega };
        let s = simulate_flow(&motion, h, &cam, &FlowNoise::none(), 0.0, &mut rng);
        let imu = ImuReading { timestamp: 0.0, omega };
        let (est, valid) = estimate_velocity(&unrotate(&s, &imu, &cam), h, &cam, &gate, Vec2::default());
        clean_worst = clean_worst.max(if valid { est.dist(v) / v.norm() } else { f64::INFINITY });
    }
    let pass = ok >= 95 && clean_worst <= 0.02;
    report(6, pass, format!("{ok}/100 trials within 5% (worst {:.2}%); zero-noise worst {:.3}%", 100.0 * worst, 100.0 * clean_worst));
    assert!(pass);
}

#[test]
fn c7_fading_memory_prevents_fov_collisions() {
    let _g = serial();
    let library = TrajectoryLibrary::build(&LibraryConfig::default()).unwrap();
    let scenario = dodge_redodge();
    let seeds = 0..5u64;
    let outcomes = |tau: f64| -> Vec<Outcome> {
        seeds
            .clone()
            .map(|s| run_episode_in(&dodge_redodge_config(tau, s), &scenario, None, &library).unwrap().report.outcome)
            .collect()
    };
    let with = outcomes(2.0);
    let without = outcomes(0.0);
    let count = |v: &[Outcome]| v.iter().filter(|o| **o == Outcome::Collision).count();
    let pass = count(&with) == 0 && count(&without) >= 1;
    report(7, pass, format!("collisions over 5 seeds: tau=2 s {}, tau=0 {}", count(&with), count(&without)));
    assert!(pass);
}

#[test]
fn c8_lut_brackets_each_bin() {
    let _g = serial();
    let lut = &trained().model.full().lut;
    let populated: Vec<_> = lut.bins.iter().filter(|b| b.is_populated()).collect();
    let bad: Vec<u32> = populated
        .iter()
        .filter(|b| !(b.d_near <= b.depth as f64 && b.depth as f64 <= b.d_far))
        .map(|b| b.depth)
        .collect();
    let b3 = lut.bin(3);
    let pattern = b3.d_near < 3.0 && 3.0 < b3.d_far;
    let pass = bad.is_empty() && pattern && !populated.is_empty();
    report(
        8,
        pass,
        format!("{} populated bins, violations {bad:?}; bin 3 near {:.2} far {:.2}", populated.len(), b3.d_near, b3.d_far),
    );
    assert!(pass);
}

#[test]
fn c9_runs_are_deterministic() {
    let _g = serial();
    let model = &trained().model;
    let library = TrajectoryLibrary::build(&LibraryConfig::default()).unwrap();
    let mut same = true;
    for (mode, seed) in [(PredictionMode::Multiple, 3), (PredictionMode::Single, 8), (PredictionMode::Oracle, 11)] {
        let cfg = RunConfig { mode, seed, ..Default::default() };
        let a = run_episode(&cfg, Some(model), &library).unwrap().to_json().unwrap();
        let b = run_episode(&cfg, Some(model), &library).unwrap().to_json().unwrap();
        same &= a == b;
    }
    report(9, same, "3 repeated runs byte-identical".to_string());
    assert!(same);
}
