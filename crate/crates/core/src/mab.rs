//! Two-context bandit choosing between layer and semantic splits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AppKind, CompletedTask, SplitDecision, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MabConfig {
    /// Weight of the newest observation in the response-time EMA.
    pub phi: f64,
    /// Q step size.
    pub gamma: f64,
    /// Schedule constant: ε decays by `1 - k`, ρ grows by `1 + k`.
    pub k: f64,
    /// UCB exploration factor.
    pub c: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub initial_q: f64,
    /// Layer response-time estimate before any layer task completes.
    pub initial_response: f64,
}

impl Default for MabConfig {
    fn default() -> Self {
        Self {
            phi: 0.9,
            gamma: 0.1,
            k: 0.1,
            c: 0.5,
            epsilon: 1.0,
            rho: 0.05,
            initial_q: 0.5,
            initial_response: 3.0,
        }
    }
}

impl MabConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.phi) && unit(self.gamma) && unit(self.epsilon) && unit(self.initial_q)) {
            return Err(Error::InvalidConfig(
                "phi, gamma, epsilon and initial_q must lie in [0, 1]".into(),
            ));
        }
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::InvalidConfig("k must lie in (0, 1)".into()));
        }
        if !(self.c >= 0.0 && self.rho > 0.0 && self.initial_response >= 0.0) {
            return Err(Error::InvalidConfig(
                "c and initial_response must be non-negative, rho positive".into(),
            ));
        }
        Ok(())
    }
}

/// Whether a task's deadline is at least the layer-split response estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Context {
    High,
    Low,
}

impl Context {
    pub const ALL: [Context; 2] = [Context::High, Context::Low];

    pub fn index(self) -> usize {
        match self {
            Context::High => 0,
            Context::Low => 1,
        }
    }
}

/// Per-(context, decision) table indexed `[context][decision]`.
pub type Table<T> = [[T; 2]; 2];

/// Rewards observed this interval; `None` where no task matched.
pub type ContextRewards = Table<Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabState {
    pub cfg: MabConfig,
    /// Layer response-time estimate per application, in intervals.
    pub r: BTreeMap<AppKind, f64>,
    pub q: Table<f64>,
    pub n: Table<u64>,
    pub epsilon: f64,
    pub rho: f64,
    /// Decisions taken since the last count update.
    #[serde(default)]
    pub pending: Table<u64>,
}

impl MabState {
    pub fn new(cfg: MabConfig) -> Self {
        Self {
            r: AppKind::ALL
                .iter()
                .map(|&a| (a, cfg.initial_response))
                .collect(),
            q: [[cfg.initial_q; 2]; 2],
            n: [[0; 2]; 2],
            epsilon: cfg.epsilon,
            rho: cfg.rho,
            pending: [[0; 2]; 2],
            cfg,
        }
    }

    pub fn response_estimate(&self, app: AppKind) -> f64 {
        self.r
            .get(&app)
            .copied()
            .unwrap_or(self.cfg.initial_response)
    }

    pub fn classify(&self, app: AppKind, sla: f64) -> Context {
        if sla >= self.response_estimate(app) {
            Context::High
        } else {
            Context::Low
        }
    }

    pub fn classify_context(&self, task: &Task) -> Context {
        self.classify(task.app, task.sla)
    }

    /// EMA update of the layer response estimate; semantic tasks are ignored.
    pub fn update_response_estimate(&mut self, task: &CompletedTask) {
        if task.decision != SplitDecision::Layer {
            return;
        }
        let phi = self.cfg.phi;
        let r = self.r.entry(task.app).or_insert(self.cfg.initial_response);
        *r = phi * task.response_time + (1.0 - phi) * *r;
    }

    /// Mean hit-plus-accuracy reward per (context, decision) over `leaving`,
    /// with contexts judged against the current estimates.
    pub fn context_rewards(&self, leaving: &[CompletedTask]) -> ContextRewards {
        let mut sum = [[0.0; 2]; 2];
        let mut count = [[0usize; 2]; 2];
        for task in leaving {
            let c = self.classify(task.app, task.sla).index();
            let d = task.decision.index();
            sum[c][d] += f64::from(u8::from(task.met_deadline())) + task.accuracy;
            count[c][d] += 1;
        }
        let mut out = [[None; 2]; 2];
        for c in 0..2 {
            for d in 0..2 {
                if count[c][d] > 0 {
                    out[c][d] = Some(sum[c][d] / (2.0 * count[c][d] as f64));
                }
            }
        }
        out
    }

    /// Average of the four cell rewards; an empty cell contributes its Q.
    pub fn o_mab(&self, rewards: &ContextRewards) -> f64 {
        let mut total = 0.0;
        for c in 0..2 {
            for d in 0..2 {
                total += rewards[c][d].unwrap_or(self.q[c][d]);
            }
        }
        total / 4.0
    }

    /// Moves each observed cell's Q toward its reward.
    pub fn update_q(&mut self, rewards: &ContextRewards) {
        let gamma = self.cfg.gamma;
        for c in 0..2 {
            for d in 0..2 {
                if let Some(o) = rewards[c][d] {
                    self.q[c][d] += gamma * (o - self.q[c][d]);
                }
            }
        }
    }

    pub fn record_decision(&mut self, context: Context, decision: SplitDecision) {
        self.pending[context.index()][decision.index()] += 1;
    }

    /// Folds decisions recorded since the last call into the counts.
    pub fn update_counts(&mut self) {
        for c in 0..2 {
            for d in 0..2 {
                self.n[c][d] += self.pending[c][d];
                self.pending[c][d] = 0;
            }
        }
    }

    /// Decays exploration and raises the bar when `o_mab` beats it.
    pub fn update_schedule(&mut self, o_mab: f64) {
        if o_mab > self.rho {
            self.epsilon *= 1.0 - self.cfg.k;
            self.rho *= 1.0 + self.cfg.k;
        }
    }

    fn greedy(&self, context: Context) -> SplitDecision {
        let q = self.q[context.index()];
        if q[SplitDecision::Layer.index()] > q[SplitDecision::Semantic.index()] {
            SplitDecision::Layer
        } else {
            SplitDecision::Semantic
        }
    }

    /// ε-greedy decision used while training.
    pub fn decide_train<R: Rng + ?Sized>(&self, task: &Task, rng: &mut R) -> SplitDecision {
        if rng.random::<f64>() < self.epsilon {
            if rng.random::<bool>() {
                SplitDecision::Layer
            } else {
                SplitDecision::Semantic
            }
        } else {
            self.greedy(self.classify_context(task))
        }
    }

    /// Upper-confidence decision at interval `t`; an arm never tried in
    /// this context is chosen outright.
    pub fn decide_ucb(&self, task: &Task, t: u32) -> SplitDecision {
        self.ucb_for(self.classify_context(task), t)
    }

    pub fn ucb_for(&self, context: Context, t: u32) -> SplitDecision {
        let c = context.index();
        let n = self.n[c];
        let (l, s) = (
            SplitDecision::Layer.index(),
            SplitDecision::Semantic.index(),
        );
        if n[s] == 0 {
            return SplitDecision::Semantic;
        }
        if n[l] == 0 {
            return SplitDecision::Layer;
        }
        let ln_t = f64::from(t.max(1)).ln();
        let score = |d: usize| self.q[c][d] + self.cfg.c * (ln_t / n[d] as f64).sqrt();
        if score(l) > score(s) {
            SplitDecision::Layer
        } else {
            SplitDecision::Semantic
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let state: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        state.cfg.validate()?;
        Ok(state)
    }
}
