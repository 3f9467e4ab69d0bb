use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edgesplit_core::harness::calibrate::calibrate;
use edgesplit_core::harness::io::{summary_json, write_sweep, write_trace};
use edgesplit_core::harness::pipeline::{
    pretrain_surrogates, run_policy, Surrogates, TrainingOutcome,
};
use edgesplit_core::harness::{
    run_scenario, split_vs_placement_study, sweep, train_mab, PolicyKind, RunConfig, RunMode,
    ScenarioSuite, StudyConfig,
};
use edgesplit_core::mab::MabState;
use edgesplit_core::placement::{Encoder, SurrogateNet, TrainingBuffer};

#[derive(Parser)]
#[command(
    name = "edgesplit",
    version,
    about = "Split-aware placement of DNN fragments on a simulated edge cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// ε-greedy bandit training run; writes mab_state.json, trace.csv and buffer.csv.
    TrainMab(Common),
    /// Fits both surrogates; writes surrogate.bin (decision-aware) and surrogate_gobi.bin.
    PretrainSurrogate {
        #[command(flatten)]
        common: Common,
        /// Dataset from `train-mab`; trains the bandit first when omitted.
        #[arg(long)]
        buffer: Option<PathBuf>,
    },
    /// Inference run of one policy over all replications.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<String>,
        /// Reuse a trained bandit instead of training one per replication.
        #[arg(long, requires = "surrogate")]
        mab_state: Option<PathBuf>,
        /// Reuse a pre-trained surrogate.
        #[arg(long, requires = "mab_state")]
        surrogate: Option<PathBuf>,
    },
    /// Runs a scenario suite for every policy; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: String,
        /// Comma-separated points for the parametric suites.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated policies; all five when omitted.
        #[arg(long, value_delimiter = ',')]
        policy: Option<Vec<String>>,
    },
    /// Split-versus-placement response-time study; writes study.json.
    Study(Common),
    /// Work-scale grid search; writes calibration.json.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.9,1.0,1.1,1.2")]
        layer_scales: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.7,0.85,1.0,1.15,1.3")]
        semantic_scales: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn parse_policies(names: Option<&[String]>) -> Result<Vec<PolicyKind>> {
    match names {
        None => Ok(PolicyKind::ALL.to_vec()),
        Some(list) => list
            .iter()
            .map(|n| n.parse::<PolicyKind>().map_err(Into::into))
            .collect(),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::TrainMab(common) => {
            let mut cfg = load(&common)?;
            cfg.mode = RunMode::TrainMab;
            if !cfg.policy.uses_mab() {
                cfg.policy = PolicyKind::MabDaso;
            }
            let training = train_mab(&cfg, cfg.seed)?;
            training.mab.save(common.out.join("mab_state.json"))?;
            write_trace(common.out.join("trace.csv"), &training.trace)?;
            let dim = Encoder::new(cfg.env.workers.len(), cfg.placement.max_containers, true).dim();
            training
                .dataset
                .write_csv(common.out.join("buffer.csv"), dim)?;
            println!(
                "q = {:?}, n = {:?}, samples = {}",
                training.mab.q,
                training.mab.n,
                training.dataset.len()
            );
        }
        Command::PretrainSurrogate { common, buffer } => {
            let cfg = load(&common)?;
            let dataset = match buffer {
                Some(p) => {
                    let (buf, dim) = TrainingBuffer::read_csv(&p, cfg.placement.buffer_capacity)?;
                    let expected =
                        Encoder::new(cfg.env.workers.len(), cfg.placement.max_containers, true)
                            .dim();
                    if dim != expected {
                        bail!("buffer has {dim} features, configuration expects {expected}");
                    }
                    buf
                }
                None => train_mab(&cfg, cfg.seed)?.dataset,
            };
            let nets = pretrain_surrogates(&cfg, &dataset, cfg.env.workers.len(), cfg.seed)?;
            nets.daso.save(common.out.join("surrogate.bin"))?;
            nets.gobi.save(common.out.join("surrogate_gobi.bin"))?;
            println!(
                "final loss: aware {:.6}, unaware {:.6}",
                nets.daso_loss.last().copied().unwrap_or(f64::NAN),
                nets.gobi_loss.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Run {
            common,
            policy,
            mab_state,
            surrogate,
        } => {
            let mut cfg = load(&common)?;
            if let Some(p) = policy {
                cfg.policy = p.parse()?;
            }
            cfg.mode = RunMode::Infer;
            let started = std::time::Instant::now();
            let (runs, mab, net) = match (mab_state, surrogate) {
                (Some(m), Some(s)) => {
                    let mab = MabState::load(&m)?;
                    let net = SurrogateNet::load(&s)?;
                    let training = TrainingOutcome {
                        mab: mab.clone(),
                        dataset: TrainingBuffer::new(cfg.placement.buffer_capacity),
                        trace: Vec::new(),
                        hits: [[(0, 0); 2]; 2],
                    };
                    let nets = Surrogates {
                        daso: net.clone(),
                        gobi: net.clone(),
                        daso_loss: Vec::new(),
                        gobi_loss: Vec::new(),
                    };
                    let runs = (0..cfg.replications as u64)
                        .map(|i| run_policy(&cfg, cfg.policy, cfg.seed + i, &training, &nets))
                        .collect::<edgesplit_core::Result<Vec<_>>>()?;
                    (runs, mab, net)
                }
                _ => {
                    let res = run_scenario(&cfg, &[cfg.policy])?;
                    let first = &res.replications[0];
                    let runs = res
                        .runs(cfg.policy)
                        .into_iter()
                        .cloned()
                        .collect::<Vec<_>>();
                    (
                        runs,
                        first.training.mab.clone(),
                        first.surrogates.for_policy(cfg.policy).clone(),
                    )
                }
            };
            let refs: Vec<_> = runs.iter().collect();
            let agg = edgesplit_core::harness::pipeline::aggregate(runs.iter().map(|r| &r.summary));
            fs::write(
                common.out.join("summary.json"),
                summary_json(cfg.policy, cfg.seed, &refs, &agg)?,
            )?;
            write_trace(common.out.join("trace.csv"), &runs[0].trace)?;
            for r in runs.iter().skip(1) {
                write_trace(
                    common.out.join(format!("trace_seed{}.csv", r.seed)),
                    &r.trace,
                )?;
            }
            mab.save(common.out.join("mab_state.json"))?;
            net.save(common.out.join("surrogate.bin"))?;
            let per_interval: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.decision_seconds.iter().copied())
                .collect();
            let timing = serde_json::json!({
                "wall_seconds": started.elapsed().as_secs_f64(),
                "mean_decision_seconds_per_interval":
                    per_interval.iter().sum::<f64>() / per_interval.len().max(1) as f64,
            });
            write_json(&common.out.join("timing.json"), &timing)?;
            let get = |k: &str| agg.mean.get(k).copied().unwrap_or(f64::NAN);
            println!(
                "{}: accuracy {:.4}, violations {:.3}, reward {:.4}, ART {:.3}, energy {:.1} Wh",
                cfg.policy.short(),
                get("accuracy"),
                get("sla_violation_fraction"),
                get("avg_reward"),
                get("avg_response_time"),
                get("total_energy_wh")
            );
        }
        Command::Sweep {
            common,
            suite,
            values,
            policy,
        } => {
            let cfg = load(&common)?;
            let suite: ScenarioSuite = suite.parse()?;
            let policies = parse_policies(policy.as_deref())?;
            let rows = sweep(suite, &cfg, &policies, values.as_deref());
            write_sweep(common.out.join("sweep.csv"), &rows)?;
            if suite == ScenarioSuite::SplitVsPlacementStudy {
                let res = split_vs_placement_study(&StudyConfig::from_run_config(&cfg))?;
                write_json(&common.out.join("study.json"), &res)?;
            }
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} rows, {} failed", rows.len(), failed);
        }
        Command::Study(common) => {
            let cfg = load(&common)?;
            let res = split_vs_placement_study(&StudyConfig::from_run_config(&cfg))?;
            write_json(&common.out.join("study.json"), &res)?;
            println!(
                "tasks {}, split-induced std {:.4}, placement-induced std {:.4}",
                res.tasks, res.split_mean_std, res.placement_mean_std
            );
        }
        Command::Calibrate {
            common,
            layer_scales,
            semantic_scales,
            seeds,
        } => {
            let cfg = load(&common)?;
            let seeds: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
            let points = calibrate(&cfg, &layer_scales, &semantic_scales, &seeds)?;
            write_json(&common.out.join("calibration.json"), &points)?;
            for p in points.iter().take(5) {
                println!(
                    "layer x{:.2} semantic x{:.2}: ART {:.3} / {:.3} = {:.3}, accuracy {:.4} / {:.4}",
                    p.layer_scale, p.semantic_scale, p.art_layer, p.art_semantic, p.ratio, p.accuracy_layer, p.accuracy_semantic
                );
            }
        }
    }
    Ok(())
}
