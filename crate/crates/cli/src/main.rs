use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use canopy::features::GroupCosts;
use canopy::harness::{
    bench_cycles, build_corpus, dodge_redodge, evaluate_suite, run_episode_in, sign_test, CorpusConfig,
    PredictionMode, RunConfig,
};
use canopy::learn::{build_lut, select_budgeted_groups, train_depth_model, Dataset, DepthModel, TrainOptions};
use canopy::sim_world::CameraModel;
use canopy::traj_lib::{LibraryConfig, TrajectoryLibrary};

#[derive(Parser)]
#[command(name = "canopy", version, about = "Monocular receding-horizon flight simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// TOML config file plus `key=value` overrides (dotted keys reach nested
/// tables, e.g. `planner.w_dir=0.5`).
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a forest and write it in the scenario text format.
    GenWorld {
        #[arg(long, default_value_t = 1.0 / 36.0)]
        density: f64,
        #[arg(long, default_value_t = 60.0)]
        length: f64,
        #[arg(long, default_value_t = 30.0)]
        width: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the hand-placed dodge-and-re-dodge course instead.
        #[arg(long)]
        dodge: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render fly-throughs and write train/holdout feature CSVs.
    BuildCorpus {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for train.csv and holdout.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy budgeted feature-group selection on a feature CSV.
    SelectFeatures {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        budget_ms: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the depth model: one variant per prefix of the budget plan.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        holdout: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        budget_ms: f64,
        #[arg(long, default_value_t = 3)]
        stages: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = canopy::features::DEFAULT_PATCH_SIZE)]
        patch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild each variant's near/far table from a holdout CSV.
    BuildLut {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        holdout: PathBuf,
        /// Defaults to overwriting the model file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the dense library and its dispersion-selected subset.
    Trajlib {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly one episode and print its report as JSON.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fly a scenario file instead of generating one from the config.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired-seed comparison of prediction modes across densities.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "single,multiple")]
        modes: Vec<String>,
        /// Trees per m², comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0 / 36.0, 1.0 / 144.0])]
        densities: Vec<f64>,
        /// Prefix for <prefix>.csv and <prefix>.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time full perception + planning cycles.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 320)]
        width: usize,
        #[arg(long, default_value_t = 240)]
        height: usize,
        #[arg(long, default_value_t = 100)]
        cycles: usize,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_value(raw: &str) -> toml::Value {
    // Bare words become strings; anything TOML can parse keeps its type.
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn load_config<T: Serialize + DeserializeOwned + Default>(args: &ConfigArgs) -> Result<T> {
    let mut table: toml::Table = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for kv in &args.set {
        let Some((key, raw)) = kv.split_once('=') else {
            bail!("override {kv:?} is not KEY=VALUE");
        };
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut node = &mut table;
        for p in &parts[..parts.len() - 1] {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .with_context(|| format!("{p} in {key} is not a table"))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    }
    let text = toml::to_string(&table)?;
    toml::from_str(&text).context("invalid configuration")
}

fn run_config(args: &ConfigArgs) -> Result<RunConfig> {
    let cfg: RunConfig = load_config(args)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: Option<&Path>) -> Result<Option<DepthModel>> {
    path.map(|p| DepthModel::load(p).with_context(|| format!("loading model {}", p.display())))
        .transpose()
}

fn load_library(path: Option<&Path>, cfg: &LibraryConfig) -> Result<TrajectoryLibrary> {
    Ok(match path {
        Some(p) => TrajectoryLibrary::load(p)?,
        None => TrajectoryLibrary::build(cfg)?,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_mode(s: &str) -> Result<PredictionMode> {
    Ok(match s {
        "oracle" => PredictionMode::Oracle,
        "single" => PredictionMode::Single,
        "multiple" => PredictionMode::Multiple,
        other => bail!("unknown mode {other:?}"),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::GenWorld {
            density,
            length,
            width,
            seed,
            dodge,
            out,
        } => {
            let world = if dodge {
                dodge_redodge()
            } else {
                canopy::harness::ScenarioConfig { density, length, width }.generate(seed)?
            };
            world.save(&out)?;
            log::info!("{} trees -> {}", world.trees.len(), out.display());
        }
        Cmd::BuildCorpus { cfg, out } => {
            let cc: CorpusConfig = load_config(&cfg)?;
            let corpus = build_corpus(&cc)?;
            fs::create_dir_all(&out)?;
            corpus.train.save_csv(&out.join("train.csv"))?;
            corpus.holdout.save_csv(&out.join("holdout.csv"))?;
            write(&out.join("corpus.toml"), &toml::to_string_pretty(&cc)?)?;
            log::info!("{} frames: {} train / {} holdout patches", corpus.frames, corpus.train.len(), corpus.holdout.len());
        }
        Cmd::SelectFeatures {
            data,
            budget_ms,
            lambda,
            out,
        } => {
            let d = Dataset::load_csv(&data, &GroupCosts::nominal())?;
            let plan = select_budgeted_groups(&d, &GroupCosts::nominal(), budget_ms, lambda)?;
            let json = serde_json::to_string_pretty(&plan)?;
            match out {
                Some(p) => write(&p, &json)?,
                None => println!("{json}"),
            }
        }
        Cmd::Train {
            train,
            holdout,
            budget_ms,
            stages,
            lambda,
            patch_size,
            out,
        } => {
            let costs = GroupCosts::nominal();
            let tr = Dataset::load_csv(&train, &costs)?;
            let ho = Dataset::load_csv(&holdout, &costs)?;
            let opts = TrainOptions { n_stages: stages, lambda };
            let plan = select_budgeted_groups(&tr, &costs, budget_ms, lambda)?;
            let model = train_depth_model(&tr, &ho, patch_size, Some(&plan), &opts)?;
            model.save(&out)?;
            for v in &model.variants {
                let names: Vec<&str> = v.layout.groups().iter().map(|g| g.name()).collect();
                println!("{:>6.1} ms  holdout RMSE {:.3} m  [{}]", v.cost(), v.holdout_rmse, names.join(","));
            }
        }
        Cmd::BuildLut { model, holdout, out } => {
            let mut m = DepthModel::load(&model)?;
            let ho = Dataset::load_csv(&holdout, &GroupCosts::nominal())?;
            for v in &mut m.variants {
                let h = ho.restrict(&v.layout)?;
                let pred = v.regressor.predict(&h.x);
                v.lut = build_lut(&pred, h.y.as_slice());
            }
            m.save(out.as_deref().unwrap_or(&model))?;
            println!("{}", serde_json::to_string_pretty(&m.full().lut)?);
        }
        Cmd::Trajlib { cfg, out } => {
            let lc: LibraryConfig = load_config(&cfg)?;
            let lib = TrajectoryLibrary::build(&lc)?;
            lib.save(&out)?;
            log::info!("{} -> {} trajectories, {}", lib.dense.len(), lib.selected.len(), out.display());
        }
        Cmd::Run {
            cfg,
            model,
            world,
            library,
            out,
        } => {
            let rc = run_config(&cfg)?;
            let model = load_model(model.as_deref())?;
            let lib = load_library(library.as_deref(), &rc.library)?;
            let scenario = match world {
                Some(p) => canopy::sim_world::ForestScenario::load(&p)?,
                None => rc.scenario.generate(rc.seed)?,
            };
            let trace = run_episode_in(&rc, &scenario, model.as_ref(), &lib)?;
            let json = trace.report.to_json()?;
            match out {
                Some(p) => write(&p, &json)?,
                None => println!("{json}"),
            }
        }
        Cmd::Evaluate {
            cfg,
            model,
            library,
            seeds,
            first_seed,
            modes,
            densities,
            out,
        } => {
            let base = run_config(&cfg)?;
            let model = load_model(model.as_deref())?;
            let lib = load_library(library.as_deref(), &base.library)?;
            let modes: Vec<PredictionMode> = modes.iter().map(|m| parse_mode(m)).collect::<Result<_>>()?;
            let mut configs = Vec::new();
            for &density in &densities {
                for &mode in &modes {
                    let mut c = base.clone();
                    c.mode = mode;
                    c.scenario.density = density;
                    configs.push((format!("{}@1/{:.0}", mode.name(), 1.0 / density), c));
                }
            }
            let seed_list: Vec<u64> = (first_seed..first_seed + seeds).collect();
            let res = evaluate_suite(&configs, &seed_list, model.as_ref(), &lib)?;
            let csv_path = out.with_extension("csv");
            res.write_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?)?;
            write(&out.with_extension("json"), &res.to_json()?)?;
            for r in &res.rows {
                println!(
                    "{:<18} mean {:6.2} m  avoided {:6.2}%  collisions {:3}  goal {:3}",
                    r.label, r.mean_distance, r.pct_overall, r.collisions, r.goal_reached
                );
            }
            // Sign tests between consecutive modes at each density.
            for (d, _) in densities.iter().enumerate() {
                for k in 1..modes.len() {
                    let (i, j) = (d * modes.len() + k, d * modes.len() + k - 1);
                    let t = sign_test(&res.distances(i), &res.distances(j));
                    println!(
                        "{} vs {}: wins {} losses {} ties {} p = {:.4}",
                        res.rows[i].label, res.rows[j].label, t.wins, t.losses, t.ties, t.p_value
                    );
                }
            }
        }
        Cmd::Bench {
            model,
            width,
            height,
            cycles,
            points,
            seed,
        } => {
            let m = DepthModel::load(&model)?;
            let lib = TrajectoryLibrary::build(&LibraryConfig::default())?;
            let r = bench_cycles(&m, &lib, &CameraModel::forward(width, height), cycles, points, seed)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            println!(
                "{width}x{height}: mean cycle {:.1} ms (perception {:.1}, planning {:.1}), max {:.1} ms over {cycles} cycles",
                r.mean_cycle_ms(),
                mean(&r.perception_ms),
                mean(&r.planning_ms),
                r.max_cycle_ms()
            );
        }
    }
    Ok(())
}
