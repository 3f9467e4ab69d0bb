//! Training, pre-training and inference runs for one or more seeds.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::controller::{encode_sample, Controller, IntervalRecord};
use super::{PolicyKind, RunConfig, RunMode};
use crate::domain::{
    CompletedTask, IntervalMetrics, PlacementMatrix, RunSummary, SplitDecision, TaskId,
};
use crate::error::Result;
use crate::mab::{MabState, Table};
use crate::metrics::{
    mean_execution_time, mean_response_time, mean_wait_time, metric_accuracy, metric_fairness,
    metric_reward, metric_sla_violations,
};
use crate::placement::encode::SLOT_FEATURES;
use crate::placement::{
    random_fill, train_surrogate, Encoder, Sample, SurrogateNet, TrainingBuffer,
};
use crate::sim::Environment;
use crate::workload::{generate_arrivals, mix_seed};

const TRAIN_STREAM: u64 = 0x7EA1;
const INFER_STREAM: u64 = 0x1F3E;
const ROLLOUT_STREAM: u64 = 0xC0F7;
const NET_STREAM: u64 = 0x5E7;

/// Result of the ε-greedy bandit training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub mab: MabState,
    /// Realized and counterfactual samples, encoded with split flags.
    pub dataset: TrainingBuffer,
    pub trace: Vec<IntervalMetrics>,
    /// Deadline hits and totals per `[context][decision]`, with the context
    /// judged when the split was decided.
    pub hits: Table<(u64, u64)>,
}

impl TrainingOutcome {
    pub fn hit_rate(&self, context: usize, decision: SplitDecision) -> Option<f64> {
        let (hit, total) = self.hits[context][decision.index()];
        (total > 0).then(|| hit as f64 / total as f64)
    }
}

/// Pre-trained decision-aware and decision-unaware surrogates.
#[derive(Debug, Clone)]
pub struct Surrogates {
    pub daso: SurrogateNet,
    pub gobi: SurrogateNet,
    pub daso_loss: Vec<f64>,
    pub gobi_loss: Vec<f64>,
}

impl Surrogates {
    pub fn for_policy(&self, policy: PolicyKind) -> &SurrogateNet {
        if policy.decision_aware() {
            &self.daso
        } else {
            &self.gobi
        }
    }
}

/// One inference run of one policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: PolicyKind,
    pub seed: u64,
    pub summary: RunSummary,
    pub trace: Vec<IntervalMetrics>,
    pub rejected_rows: usize,
    pub precedence_violations: usize,
    pub ram_overcommits: usize,
    pub invalid_rows: usize,
    /// Wall-clock controller time per interval, seconds.
    pub decision_seconds: Vec<f64>,
    pub final_mab: MabState,
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub seed: u64,
    pub training: TrainingOutcome,
    pub surrogates: Surrogates,
    pub runs: Vec<PolicyRun>,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub replications: Vec<ReplicationResult>,
}

impl ScenarioResult {
    pub fn runs(&self, policy: PolicyKind) -> Vec<&PolicyRun> {
        self.replications
            .iter()
            .flat_map(|r| r.runs.iter().filter(move |p| p.policy == policy))
            .collect()
    }

    /// Mean and sample standard deviation of every numeric summary field.
    pub fn aggregate(&self, policy: PolicyKind) -> Aggregate {
        aggregate(self.runs(policy).iter().map(|r| &r.summary))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    /// Replications contributing a value to each field.
    pub n: BTreeMap<String, usize>,
}

pub fn aggregate<'a>(summaries: impl Iterator<Item = &'a RunSummary>) -> Aggregate {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in summaries {
        if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(s) {
            for (k, v) in map {
                if let Some(x) = v.as_f64() {
                    values.entry(k).or_default().push(x);
                } else {
                    values.entry(k).or_default();
                }
            }
        }
    }
    let mut out = Aggregate::default();
    for (k, xs) in values {
        out.n.insert(k.clone(), xs.len());
        if xs.is_empty() {
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.mean.insert(k.clone(), mean);
        out.std.insert(k, std);
    }
    out
}

fn arrivals_for(cfg: &RunConfig, seed: u64, stream: u64) -> crate::workload::ArrivalConfig {
    let mut a = cfg.arrivals.clone();
    a.seed = mix_seed(seed ^ cfg.arrivals.seed, stream);
    a
}

/// Dirichlet(1, …, 1) draw via normalized unit exponentials.
fn dirichlet_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// ε-greedy bandit training with random placement. Every interval also
/// spawns `counterfactuals` rollouts that start from a Dirichlet-weighted
/// random placement and continue with random placement until the objective
/// window closes; together with the realized intervals they form the
/// surrogate's pre-training set.
pub fn train_mab(cfg: &RunConfig, seed: u64) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let mut env_cfg = cfg.env.clone();
    env_cfg.horizon = cfg.train_intervals;
    let env_seed = mix_seed(seed, TRAIN_STREAM);
    let mut env = Environment::new(env_cfg, cfg.profiles.clone(), env_seed)?;
    let policy = if cfg.policy.uses_mab() {
        cfg.policy
    } else {
        PolicyKind::MabDaso
    };
    let mut ctl = Controller::new(
        policy,
        RunMode::TrainMab,
        MabState::new(cfg.mab.clone()),
        None,
        env.n_workers(),
        cfg.placement.clone(),
        arrivals_for(cfg, seed, TRAIN_STREAM),
        TrainingBuffer::new(cfg.placement.buffer_capacity),
        mix_seed(env_seed, 1),
    );
    ctl.record_branches = cfg.placement.counterfactuals > 0;

    let mut records: Vec<IntervalRecord> = Vec::with_capacity(cfg.train_intervals as usize);
    while !env.is_done() {
        records.push(ctl.run_interval(&mut env)?);
    }

    let mut contexts = BTreeMap::new();
    for r in &records {
        for &(id, ctx, _) in &r.decisions {
            if let Some(c) = ctx {
                contexts.insert(id, c.index());
            }
        }
    }
    let mut hits: Table<(u64, u64)> = [[(0, 0); 2]; 2];
    for task in records.iter().flat_map(|r| &r.metrics.completed) {
        if let Some(&c) = contexts.get(&task.task_id) {
            let cell = &mut hits[c][task.decision.index()];
            cell.0 += u64::from(task.met_deadline());
            cell.1 += 1;
        }
    }

    let encoder = Encoder::new(env.n_workers(), cfg.placement.max_containers, true);
    let k = cfg.placement.counterfactuals;
    let window = cfg.placement.objective_window.max(1);
    let arrivals = ctl.arrivals.clone();
    // Later intervals of a rollout replay the real run's arrivals and splits.
    let decided: BTreeMap<TaskId, SplitDecision> = records
        .iter()
        .flat_map(|r| r.decisions.iter().map(|&(id, _, d)| (id, d)))
        .collect();
    let rollouts: Vec<Vec<Sample>> = records
        .par_iter()
        .map(|r| -> Result<Vec<Sample>> {
            let Some(branch) = &r.branch else {
                return Ok(Vec::new());
            };
            let mut out = Vec::with_capacity(k);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                env_seed ^ ROLLOUT_STREAM,
                u64::from(r.metrics.t),
            ));
            for j in 0..k {
                let mut env = branch.env.clone();
                let weights = dirichlet_weights(env.n_workers(), &mut rng);
                // Alternate between keeping resident containers and a full reshuffle.
                let keep = if j % 2 == 0 {
                    env.previous_placement()
                } else {
                    PlacementMatrix::empty(branch.state.containers.len(), env.n_workers())
                };
                let p = random_fill(&branch.state, &keep, Some(&weights), &mut rng);
                let mut sums = [0.0; 3];
                let mut seen = 0;
                let mut placement = p.clone();
                loop {
                    let outcome = env.step(&placement)?;
                    let m = &outcome.metrics;
                    sums[0] += branch.mab.o_mab(&branch.mab.context_rewards(&m.completed));
                    sums[1] += m.aec;
                    sums[2] += cfg.placement.normalize_art(m.art);
                    seen += 1;
                    if seen == window || env.is_done() {
                        break;
                    }
                    let tasks = generate_arrivals(&arrivals, env.t())
                        .into_iter()
                        .map(|t| {
                            let d = decided
                                .get(&t.id)
                                .copied()
                                .unwrap_or(SplitDecision::Semantic);
                            t.with_decision(d)
                        })
                        .collect();
                    env.admit(tasks)?;
                    let state = env.snapshot_state();
                    placement = random_fill(&state, &env.previous_placement(), None, &mut rng);
                }
                let n = seen as f64;
                out.push(encode_sample(
                    &encoder,
                    &branch.state,
                    &p,
                    sums[0] / n,
                    sums[1] / n,
                    sums[2] / n,
                )?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut dataset =
        TrainingBuffer::new(cfg.placement.buffer_capacity.max(records.len() * (k + 1)));
    dataset.extend(ctl.buffer.iter().cloned());
    for extra in rollouts {
        dataset.extend(extra);
    }
    Ok(TrainingOutcome {
        mab: ctl.mab,
        dataset,
        trace: records.into_iter().map(|r| r.metrics).collect(),
        hits,
    })
}

/// Drops split flags so the sample matches a decision-unaware encoding.
pub fn strip_decisions(enc: &Encoder, sample: &Sample) -> Sample {
    let slots = enc.decision_index(0)..enc.placement_offset();
    let mut out = Sample {
        idx: Vec::with_capacity(sample.idx.len()),
        val: Vec::with_capacity(sample.val.len()),
        ..sample.clone()
    };
    for (&i, &v) in sample.idx.iter().zip(&sample.val) {
        let iu = i as usize;
        if slots.contains(&iu) && (iu - slots.start) % SLOT_FEATURES == 0 {
            continue;
        }
        out.idx.push(i);
        out.val.push(v);
    }
    out
}

pub fn gobi_dataset(enc: &Encoder, dataset: &TrainingBuffer) -> TrainingBuffer {
    let mut out = TrainingBuffer::new(dataset.capacity());
    out.extend(dataset.iter().map(|s| strip_decisions(enc, s)));
    out
}

/// Fits one surrogate of each kind on the training dataset.
pub fn pretrain_surrogates(
    cfg: &RunConfig,
    dataset: &TrainingBuffer,
    n_workers: usize,
    seed: u64,
) -> Result<Surrogates> {
    let p = &cfg.placement;
    let enc = Encoder::new(n_workers, p.max_containers, true);
    let gobi_data = gobi_dataset(&enc, dataset);
    let fit = |data: &TrainingBuffer, stream: u64| -> Result<(SurrogateNet, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ NET_STREAM, stream));
        let mut net = SurrogateNet::new(enc.dim(), p.hidden, &mut rng);
        let mean = data.iter().map(|s| p.target(s)).sum::<f64>() / data.len().max(1) as f64;
        net.set_output_bias(mean);
        let loss = train_surrogate(
            &mut net,
            data,
            p.pretrain_epochs,
            &p.optimizer(),
            |s| p.target(s),
            &mut rng,
        )?;
        Ok((net, loss))
    };
    let (daso, gobi) = rayon::join(|| fit(dataset, 1), || fit(&gobi_data, 2));
    let (daso, daso_loss) = daso?;
    let (gobi, gobi_loss) = gobi?;
    Ok(Surrogates {
        daso,
        gobi,
        daso_loss,
        gobi_loss,
    })
}

pub fn summarize(records: &[IntervalRecord], env: &Environment) -> RunSummary {
    let completed: Vec<CompletedTask> = records
        .iter()
        .flat_map(|r| r.metrics.completed.iter().cloned())
        .collect();
    let per_worker: Vec<f64> = env
        .completed_per_worker()
        .iter()
        .map(|&c| c as f64)
        .collect();
    let containers: u64 = env.completed_per_worker().iter().sum();
    let total_cost: f64 = records.iter().map(|r| r.metrics.cost_usd).sum();
    let decided = records.iter().map(|r| r.decisions.len()).sum::<usize>();
    let layer = records
        .iter()
        .flat_map(|r| &r.decisions)
        .filter(|d| d.2 == SplitDecision::Layer)
        .count();
    RunSummary {
        accuracy: metric_accuracy(&completed).ok(),
        sla_violation_fraction: metric_sla_violations(&completed).ok(),
        avg_reward: metric_reward(&completed).ok(),
        total_cost_usd: total_cost,
        cost_per_container_usd: (containers > 0).then(|| total_cost / containers as f64),
        avg_wait: mean_wait_time(&completed).ok(),
        avg_execution: mean_execution_time(&completed).ok(),
        avg_response_time: mean_response_time(&completed).ok(),
        fairness_jain: metric_fairness(&per_worker).ok(),
        total_energy_wh: records.iter().map(|r| r.metrics.energy_wh).sum(),
        completed_tasks: completed.len(),
        incomplete_tasks: env.active_tasks(),
        completed_containers: containers as usize,
        layer_fraction: (decided > 0).then(|| layer as f64 / decided as f64),
        migrations: env.migrations(),
        image_distribution_seconds: env.image_distribution_seconds(),
    }
}

/// UCB inference run of `policy` over the configured horizon.
pub fn run_policy(
    cfg: &RunConfig,
    policy: PolicyKind,
    seed: u64,
    training: &TrainingOutcome,
    nets: &Surrogates,
) -> Result<PolicyRun> {
    let env_seed = mix_seed(seed, INFER_STREAM);
    let mut env = Environment::new(cfg.env.clone(), cfg.profiles.clone(), env_seed)?;
    let buffer = if policy.decision_aware() {
        training.dataset.clone()
    } else {
        gobi_dataset(
            &Encoder::new(env.n_workers(), cfg.placement.max_containers, true),
            &training.dataset,
        )
    };
    let mut ctl = Controller::new(
        policy,
        RunMode::Infer,
        training.mab.clone(),
        Some(nets.for_policy(policy).clone()),
        env.n_workers(),
        cfg.placement.clone(),
        arrivals_for(cfg, seed, INFER_STREAM),
        buffer,
        mix_seed(env_seed, 2 + policy as u64),
    );
    let mut records = Vec::with_capacity(cfg.env.horizon as usize);
    while !env.is_done() {
        records.push(ctl.run_interval(&mut env)?);
    }
    Ok(PolicyRun {
        policy,
        seed,
        summary: summarize(&records, &env),
        rejected_rows: records.iter().map(|r| r.rejected_rows).sum(),
        precedence_violations: records.iter().map(|r| r.precedence_violations).sum(),
        ram_overcommits: records.iter().map(|r| r.ram_overcommits).sum(),
        invalid_rows: records.iter().filter(|r| !r.rows_valid).count(),
        decision_seconds: records.iter().map(|r| r.decision_seconds).collect(),
        trace: records.into_iter().map(|r| r.metrics).collect(),
        final_mab: ctl.mab,
    })
}

/// Training, pre-training and one inference run per policy for one seed.
pub fn run_replication(
    cfg: &RunConfig,
    policies: &[PolicyKind],
    seed: u64,
) -> Result<ReplicationResult> {
    cfg.validate()?;
    let training = train_mab(cfg, seed)?;
    let surrogates = pretrain_surrogates(cfg, &training.dataset, cfg.env.workers.len(), seed)?;
    let runs = policies
        .par_iter()
        .map(|&p| run_policy(cfg, p, seed, &training, &surrogates))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationResult {
        seed,
        training,
        surrogates,
        runs,
    })
}

/// Replications with seeds `cfg.seed + i`, run concurrently.
pub fn run_scenario(cfg: &RunConfig, policies: &[PolicyKind]) -> Result<ScenarioResult> {
    cfg.validate()?;
    let replications = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|i| run_replication(cfg, policies, cfg.seed + i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioResult { replications })
}
