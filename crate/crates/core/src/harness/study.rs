//! How much response time moves when the split changes versus when the
//! placement changes, for a fixed task set.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::domain::{PlacementMatrix, SplitDecision, SystemState, Task, TaskId};
use crate::error::Result;
use crate::sim::{EnvConfig, Environment};
use crate::workload::{generate_arrivals, mix_seed, ArrivalConfig, ProfileSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub env: EnvConfig,
    pub profiles: ProfileSet,
    pub arrivals: ArrivalConfig,
    /// Intervals during which tasks arrive.
    pub arrival_intervals: u32,
    /// Extra intervals to let the last tasks finish.
    pub drain_intervals: u32,
    /// Worker permutations compared, the identity included.
    pub permutations: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        Self {
            env: cfg.env.clone(),
            profiles: cfg.profiles.clone(),
            arrivals: cfg.arrivals.clone(),
            arrival_intervals: 20,
            drain_intervals: 30,
            permutations: 6,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    /// Per-task standard deviation of response time across split variants.
    pub split_std: Vec<f64>,
    /// Per-task standard deviation across placement permutations.
    pub placement_std: Vec<f64>,
    pub split_mean_std: f64,
    pub placement_mean_std: f64,
    /// Tasks that completed under every variant.
    pub tasks: usize,
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Deterministic placement: each container prefers the worker its id hashes
/// to, read through `perm`, and falls forward along `perm` until RAM fits.
fn hashed_placement(state: &SystemState, perm: &[usize], seed: u64) -> PlacementMatrix {
    let h = perm.len();
    let mut used = vec![0.0; h];
    let mut rows = vec![None; state.containers.len()];
    for (r, c) in state.containers.iter().enumerate() {
        let start = (mix_seed(seed, c.container_id) % h as u64) as usize;
        rows[r] = (0..h)
            .map(|k| perm[(start + k) % h])
            .find(|&w| used[w] + c.ram_mb <= state.worker_ram[w] + 1e-9);
        if let Some(w) = rows[r] {
            used[w] += c.ram_mb;
        }
    }
    PlacementMatrix::from_rows(rows, h)
}

fn run_variant(
    cfg: &StudyConfig,
    tasks: &[Task],
    decide: impl Fn(&Task) -> SplitDecision,
    perm: &[usize],
) -> Result<BTreeMap<TaskId, f64>> {
    let mut env_cfg = cfg.env.clone();
    env_cfg.horizon = cfg.arrival_intervals + cfg.drain_intervals;
    let mut env = Environment::new(env_cfg, cfg.profiles.clone(), mix_seed(cfg.seed, 0x57D))?;
    let mut out = BTreeMap::new();
    while !env.is_done() {
        let t = env.t();
        let arriving: Vec<Task> = tasks
            .iter()
            .filter(|task| task.arrival == t)
            .map(|task| task.clone().with_decision(decide(task)))
            .collect();
        env.admit(arriving)?;
        let state = env.snapshot_state();
        let outcome = env.step(&hashed_placement(&state, perm, cfg.seed))?;
        for c in outcome.metrics.completed {
            out.insert(c.task_id, c.response_time);
        }
    }
    Ok(out)
}

fn per_task_std(runs: &[BTreeMap<TaskId, f64>]) -> Vec<f64> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .keys()
        .filter_map(|id| {
            let xs: Option<Vec<f64>> = runs.iter().map(|r| r.get(id).copied()).collect();
            xs.map(|xs| population_std(&xs))
        })
        .collect()
}

/// Runs the fixed task set (a) with every split flipped under a fixed
/// placement rule and (b) with the placement permuted across workers under
/// fixed splits, and compares per-task response-time spread.
pub fn split_vs_placement_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let mut arrivals = cfg.arrivals.clone();
    arrivals.seed = mix_seed(cfg.seed ^ cfg.arrivals.seed, 0x57D);
    let tasks: Vec<Task> = (0..cfg.arrival_intervals)
        .flat_map(|t| generate_arrivals(&arrivals, t))
        .collect();
    let base = |task: &Task| {
        if mix_seed(cfg.seed, task.id) & 1 == 0 {
            SplitDecision::Layer
        } else {
            SplitDecision::Semantic
        }
    };
    let h = cfg.env.workers.len();
    let identity: Vec<usize> = (0..h).collect();
    let mut perms = vec![identity.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x9E7));
    for _ in 1..cfg.permutations.max(1) {
        let mut p = identity.clone();
        p.shuffle(&mut rng);
        perms.push(p);
    }

    let split_runs = [false, true]
        .par_iter()
        .map(|&flip| {
            run_variant(
                cfg,
                &tasks,
                |t| if flip { base(t).flipped() } else { base(t) },
                &identity,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let placement_runs = perms
        .par_iter()
        .map(|p| run_variant(cfg, &tasks, base, p))
        .collect::<Result<Vec<_>>>()?;

    let split_std = per_task_std(&split_runs);
    let placement_std = per_task_std(&placement_runs);
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    Ok(StudyResult {
        split_mean_std: mean(&split_std),
        placement_mean_std: mean(&placement_std),
        tasks: split_std.len().min(placement_std.len()),
        split_std,
        placement_std,
    })
}
