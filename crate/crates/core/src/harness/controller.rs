//! One control interval: bandit bookkeeping, split decisions, placement,
//! surrogate fine-tuning and the simulator step, in that order.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PolicyKind, RunMode};
use crate::domain::{
    CompletedTask, IntervalMetrics, PlacementMatrix, SplitDecision, SystemState, TaskId,
};
use crate::error::Result;
use crate::mab::{Context, MabState};
use crate::placement::{
    fine_tune, optimize_placement, random_fill, reward_placement, Encoder, PlacementConfig, Sample,
    SurrogateNet, TrainingBuffer,
};
use crate::sim::Environment;
use crate::workload::{generate_arrivals, ArrivalConfig};

/// Steps of the control loop, logged in call order when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Call {
    Rewards,
    QUpdate,
    CountUpdate,
    ResponseUpdate,
    Schedule,
    DecideTrain,
    DecideUcb,
    DecideFixed,
    DecideRandom,
    Snapshot,
    Placement,
    FineTune,
    Step,
}

/// Pre-placement snapshot kept for counterfactual rollouts.
#[derive(Debug, Clone)]
pub struct Branch {
    pub env: Environment,
    pub state: SystemState,
    pub mab: MabState,
}

#[derive(Debug, Clone)]
pub struct IntervalRecord {
    /// `objective` holds the realized placement objective of this interval.
    pub metrics: IntervalMetrics,
    /// (task, context at decision time when a bandit decided, decision).
    pub decisions: Vec<(TaskId, Option<Context>, SplitDecision)>,
    pub rejected_rows: usize,
    pub precedence_violations: usize,
    pub ram_overcommits: usize,
    /// Whether every placement row was one-hot or empty.
    pub rows_valid: bool,
    /// This interval's encoding with its own objective components.
    pub sample: Sample,
    /// Wall-clock seconds spent deciding, excluding the simulator step.
    pub decision_seconds: f64,
    pub branch: Option<Branch>,
}

pub struct Controller {
    pub policy: PolicyKind,
    pub mode: RunMode,
    pub mab: MabState,
    pub net: Option<SurrogateNet>,
    pub encoder: Encoder,
    pub cfg: PlacementConfig,
    pub arrivals: ArrivalConfig,
    pub buffer: TrainingBuffer,
    /// Keep a [`Branch`] with every record.
    pub record_branches: bool,
    pub log: Option<Vec<Call>>,
    rng: ChaCha8Rng,
    leaving: Vec<CompletedTask>,
    /// Samples still accumulating their objective window.
    open: Vec<OpenSample>,
    /// Samples whose window closed, awaiting the next fine-tune.
    ready: Vec<Sample>,
}

#[derive(Debug, Clone)]
struct OpenSample {
    sample: Sample,
    sums: [f64; 3],
    seen: usize,
}

impl OpenSample {
    fn close(self) -> Sample {
        let n = self.seen as f64;
        Sample {
            o_mab: self.sums[0] / n,
            aec: self.sums[1] / n,
            art_norm: self.sums[2] / n,
            ..self.sample
        }
    }
}

/// Restricts `state` to the rows the encoder can represent.
pub fn encodable_view(state: &SystemState, cap: usize) -> SystemState {
    if state.containers.len() <= cap {
        return state.clone();
    }
    SystemState {
        workers: state.workers.clone(),
        containers: state.containers[..cap].to_vec(),
        worker_ram: state.worker_ram.clone(),
    }
}

/// Encodes `(state, placement)` into a training sample with the given
/// objective components.
pub fn encode_sample(
    enc: &Encoder,
    state: &SystemState,
    placement: &PlacementMatrix,
    o_mab: f64,
    aec: f64,
    art_norm: f64,
) -> Result<Sample> {
    let view = encodable_view(state, enc.max_containers);
    let rows = placement.rows()[..view.containers.len()].to_vec();
    let x = enc.encode(
        &view,
        &PlacementMatrix::from_rows(rows, placement.n_workers()),
    )?;
    Ok(Sample::from_dense(&x, o_mab, aec, art_norm))
}

impl Controller {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        policy: PolicyKind,
        mode: RunMode,
        mab: MabState,
        net: Option<SurrogateNet>,
        n_workers: usize,
        cfg: PlacementConfig,
        arrivals: ArrivalConfig,
        buffer: TrainingBuffer,
        seed: u64,
    ) -> Self {
        let encoder = Encoder::new(n_workers, cfg.max_containers, policy.decision_aware());
        Self {
            policy,
            mode,
            mab,
            net,
            encoder,
            cfg,
            arrivals,
            buffer,
            record_branches: false,
            log: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            leaving: Vec::new(),
            open: Vec::new(),
            ready: Vec::new(),
        }
    }

    fn note(&mut self, call: Call) {
        if let Some(log) = self.log.as_mut() {
            log.push(call);
        }
    }

    /// Runs interval `env.t()`.
    pub fn run_interval(&mut self, env: &mut Environment) -> Result<IntervalRecord> {
        let started = Instant::now();
        let t = env.t();
        let bandit = self.policy.uses_mab();

        // Tasks that left during the previous interval drive the bandit.
        let leaving = std::mem::take(&mut self.leaving);
        if bandit {
            let rewards = self.mab.context_rewards(&leaving);
            self.note(Call::Rewards);
            let o_mab = self.mab.o_mab(&rewards);
            self.mab.update_q(&rewards);
            self.note(Call::QUpdate);
            self.mab.update_counts();
            self.note(Call::CountUpdate);
            for task in &leaving {
                self.mab.update_response_estimate(task);
            }
            self.note(Call::ResponseUpdate);
            if self.mode == RunMode::TrainMab {
                self.mab.update_schedule(o_mab);
                self.note(Call::Schedule);
            }
        }

        let mut tasks = generate_arrivals(&self.arrivals, t);
        let mut decisions = Vec::with_capacity(tasks.len());
        for task in &mut tasks {
            let (context, decision) = match self.policy {
                PolicyKind::MabDaso | PolicyKind::MabGobi => {
                    let ctx = self.mab.classify_context(task);
                    let d = match self.mode {
                        RunMode::TrainMab => {
                            self.note(Call::DecideTrain);
                            self.mab.decide_train(task, &mut self.rng)
                        }
                        RunMode::Infer => {
                            self.note(Call::DecideUcb);
                            self.mab.decide_ucb(task, t)
                        }
                    };
                    self.mab.record_decision(ctx, d);
                    (Some(ctx), d)
                }
                PolicyKind::RandomDaso => {
                    self.note(Call::DecideRandom);
                    let d = if self.rng.random::<bool>() {
                        SplitDecision::Layer
                    } else {
                        SplitDecision::Semantic
                    };
                    (None, d)
                }
                PolicyKind::LayerGobi => {
                    self.note(Call::DecideFixed);
                    (None, SplitDecision::Layer)
                }
                PolicyKind::SemanticGobi => {
                    self.note(Call::DecideFixed);
                    (None, SplitDecision::Semantic)
                }
            };
            task.set_decision(decision)?;
            decisions.push((task.id, context, decision));
        }
        env.admit(tasks)?;

        let state = env.snapshot_state();
        self.note(Call::Snapshot);
        let p_init = env.previous_placement();
        let placement = match (&self.net, self.mode) {
            (Some(net), RunMode::Infer) => {
                optimize_placement(net, &self.encoder, &state, &p_init, &self.cfg)?
            }
            _ => random_fill(&state, &p_init, None, &mut self.rng),
        };
        self.note(Call::Placement);

        // Samples whose objective window has closed join the buffer.
        if !self.ready.is_empty() {
            self.buffer.extend(self.ready.drain(..));
            if self.mode == RunMode::Infer && self.cfg.finetune_batches > 0 {
                if let Some(net) = self.net.as_mut() {
                    let cfg = &self.cfg;
                    fine_tune(
                        net,
                        &self.buffer,
                        cfg.finetune_batches,
                        &cfg.optimizer(),
                        |s| cfg.target(s),
                        &mut self.rng,
                    )?;
                    self.note(Call::FineTune);
                }
            }
        }

        let branch = self.record_branches.then(|| Branch {
            env: env.clone(),
            state: state.clone(),
            mab: self.mab.clone(),
        });
        let rows_valid = placement
            .rows()
            .iter()
            .all(|w| w.is_none_or(|w| w < env.n_workers()));
        let decision_seconds = started.elapsed().as_secs_f64();

        let outcome = env.step(&placement)?;
        self.note(Call::Step);

        let mut metrics = outcome.metrics;
        let o_mab = self
            .mab
            .o_mab(&self.mab.context_rewards(&metrics.completed));
        let art_norm = self.cfg.normalize_art(metrics.art);
        metrics.objective =
            reward_placement(o_mab, metrics.aec, art_norm, self.cfg.alpha, self.cfg.beta);
        let sample = encode_sample(
            &self.encoder,
            &state,
            &placement,
            o_mab,
            metrics.aec,
            art_norm,
        )?;
        self.open.push(OpenSample {
            sample: sample.clone(),
            sums: [0.0; 3],
            seen: 0,
        });
        let window = self.cfg.objective_window.max(1);
        for open in &mut self.open {
            open.sums[0] += o_mab;
            open.sums[1] += metrics.aec;
            open.sums[2] += art_norm;
            open.seen += 1;
        }
        let (closed, still_open): (Vec<_>, Vec<_>) =
            self.open.drain(..).partition(|o| o.seen >= window);
        self.open = still_open;
        self.ready.extend(closed.into_iter().map(OpenSample::close));
        self.leaving = metrics.completed.clone();

        Ok(IntervalRecord {
            metrics,
            decisions,
            rejected_rows: outcome.rejected_rows.len(),
            precedence_violations: outcome.precedence_violations,
            ram_overcommits: outcome.ram_overcommits,
            rows_valid,
            sample,
            decision_seconds,
            branch,
        })
    }
}
