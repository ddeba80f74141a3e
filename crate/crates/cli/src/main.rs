use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rote::agents::dataset::{generate_dataset, transfer_pairs, Dataset, DatasetSpec};
use rote::config::RoteConfig;
use rote::eval::human::import_dir;
use rote::eval::timing::{run_timing, timing_csv};
use rote::eval::{run_eval, run_generalization, PredictorKind, Protocol};
use rote::grid::Action;
use rote::infer::HypothesisSet;
use rote::session::SessionManager;
use rote::trajectory::Trajectory;

#[derive(Parser)]
#[command(name = "rote", version, about = "Infer agent behavior as executable programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RoteConfig> {
        match &self.config {
            Some(p) => RoteConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(RoteConfig::default()),
        }
    }
}

#[derive(Args)]
struct DataArg {
    /// A generated dataset directory, or a directory of trajectory files.
    #[arg(long)]
    data: PathBuf,
    /// Use every trajectory instead of the held-out split.
    #[arg(long)]
    all: bool,
    /// Keep only the first N trajectories.
    #[arg(long)]
    limit: Option<usize>,
}

impl DataArg {
    fn load(&self) -> Result<Vec<Trajectory>> {
        let mut out = if self.data.join("manifest.json").exists() {
            let ds = Dataset::load(&self.data).with_context(|| format!("loading {}", self.data.display()))?;
            let picked = if self.all { ds.trajectories.iter().collect() } else { ds.holdout() };
            picked.into_iter().cloned().collect()
        } else {
            load_trajectory_dir(&self.data)?
        };
        if let Some(n) = self.limit {
            out.truncate(n);
        }
        if out.is_empty() {
            bail!("no trajectories in {}", self.data.display());
        }
        Ok(out)
    }
}

fn load_trajectory_dir(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Trajectory::load(p).with_context(|| format!("loading {}", p.display()))).collect()
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scripted trajectory dataset.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        per_agent: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        holdout_per_agent: usize,
    },
    /// Fit a hypothesis set on the first steps of a trajectory.
    Fit {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        trajectory: PathBuf,
        /// Observed steps.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        salt: u64,
    },
    /// Roll a fitted set forward on a trajectory's world.
    Predict {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        /// Restart every program in the trajectory's first world, keeping
        /// the weights.
        #[arg(long)]
        transfer: bool,
    },
    /// Score a predictor under a protocol.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        data: DataArg,
        /// single_step | multi_step | human_replay
        #[arg(long, default_value = "multi_step")]
        protocol: Protocol,
        /// rote | nllm | frequency
        #[arg(long, default_value = "rote")]
        predictor: PredictorKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Observe in one world, predict in a fresh one.
    Generalize {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value = "rote")]
        predictor: PredictorKind,
        /// Seed for the target worlds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wall-clock and backend calls against the prediction horizon.
    Timing {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_delimiter = ',', default_value = "rote,nllm")]
        predictors: Vec<PredictorKind>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        context: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the session service.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Trajectories offered for prediction games.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Validate human gameplay files and write canonical trajectories.
    ImportHuman {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenData { seed, out, per_agent, steps, holdout_per_agent } => {
            let spec = DatasetSpec { per_agent, steps, holdout_per_agent, ..DatasetSpec::new(seed) };
            let ds = generate_dataset(&spec);
            ds.write(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("{} trajectories, {} pairs -> {}", ds.trajectories.len(), ds.pair_count(), out.display());
        }
        Command::Fit { config, trajectory, steps, out, salt } => {
            let cfg = config.load()?;
            let t = Trajectory::load(&trajectory).with_context(|| format!("loading {}", trajectory.display()))?;
            let backend = cfg.build_backend()?;
            let inference = cfg.engine(&backend).infer(&t.history(steps), Vec::new(), salt)?;
            backend.save_transcript()?;
            std::fs::write(&out, inference.set.to_json())?;
            let r = &inference.report;
            println!(
                "fit {} steps: {} hypotheses, {} calls, {} replaced",
                inference.set.observed,
                inference.set.len(),
                r.calls,
                r.replaced
            );
            if let Some(best) = inference.set.best() {
                println!("best {} ({:.4})", best.label(), best.posterior);
            }
        }
        Command::Predict { set, trajectory, horizon, transfer } => {
            let set = HypothesisSet::from_json(&std::fs::read_to_string(&set)?).context("parsing hypothesis set")?;
            let t = Trajectory::load(&trajectory)?;
            let from = if transfer { 0 } else { set.observed };
            let obs = t.observation(from).with_context(|| format!("trajectory has no step {from}"))?;
            let set = if transfer { set.transfer(obs) } else { set };
            let predicted: Vec<Action> = set.rollout(&obs.to_world(), horizon).iter().map(|p| p.action).collect();
            let truth: Vec<Action> = t.actions().into_iter().skip(from).take(horizon).collect();
            let hits = predicted.iter().zip(&truth).filter(|(p, a)| p == a).count();
            let report = serde_json::json!({
                "from": from,
                "predicted": predicted,
                "truth": truth,
                "accuracy": if truth.is_empty() { None } else { Some(hits as f64 / truth.len() as f64) },
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval { config, data, protocol, predictor, out } => {
            let cfg = config.load()?;
            let trajectories = data.load()?;
            let refs: Vec<&Trajectory> = trajectories.iter().collect();
            let backend = cfg.build_backend()?;
            let p = cfg.predictor(predictor, &backend);
            let (result, timings) = run_eval(protocol, &refs, p.as_ref(), cfg.snapshot())?;
            backend.save_transcript()?;
            result.write(&out)?;
            timings.write(&out)?;
            print!("{}", result.to_csv());
        }
        Command::Generalize { config, data, predictor, seed, out } => {
            let cfg = config.load()?;
            let trajectories = data.load()?;
            let refs: Vec<&Trajectory> = trajectories.iter().collect();
            let protocol = Protocol::generalization();
            let Protocol::Generalization { horizon, .. } = protocol else { unreachable!() };
            let pairs = transfer_pairs(&refs, seed, horizon);
            let backend = cfg.build_backend()?;
            let p = cfg.predictor(predictor, &backend);
            let (result, timings) = run_generalization(protocol, &pairs, p.as_ref(), cfg.snapshot())?;
            backend.save_transcript()?;
            result.write(&out)?;
            timings.write(&out)?;
            print!("{}", result.to_csv());
        }
        Command::Timing { config, data, predictors, horizons, context, out } => {
            let cfg = config.load()?;
            let trajectories = data.load()?;
            let refs: Vec<&Trajectory> = trajectories.iter().collect();
            let backend = cfg.build_backend()?;
            let mut rows = Vec::new();
            for kind in predictors {
                let p = cfg.predictor(kind, &backend);
                rows.extend(run_timing(p.as_ref(), &horizons, &refs, context));
            }
            backend.save_transcript()?;
            let csv = timing_csv(&rows);
            std::fs::write(&out, &csv)?;
            print!("{csv}");
        }
        Command::Serve { config, addr, data } => {
            let cfg = config.load()?;
            let stored = match data {
                Some(d) => DataArg { data: d, all: false, limit: None }.load()?,
                None => Vec::new(),
            };
            let backend = cfg.build_backend()?;
            let manager = SessionManager::new(cfg.engine(&backend), stored);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(rote_server::serve(addr, rote_server::AppState::new(manager)))?;
        }
        Command::ImportHuman { input, out } => {
            let imported = import_dir(&input)?;
            std::fs::create_dir_all(&out)?;
            for imp in &imported {
                for w in &imp.warnings {
                    log::warn!("{}: {w}", imp.trajectory.meta.id);
                }
                imp.trajectory.save(&out.join(format!("{}.json", imp.trajectory.meta.id)))?;
            }
            println!("imported {} trajectories -> {}", imported.len(), out.display());
        }
    }
    Ok(())
}
