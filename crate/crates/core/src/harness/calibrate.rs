//! Grid search over fragment work scales against response-time and
//! accuracy targets for the layer-only and semantic-only policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::controller::Controller;
use super::{PolicyKind, RunConfig, RunMode};
use crate::domain::CompletedTask;
use crate::error::Result;
use crate::mab::MabState;
use crate::metrics::{mean_response_time, metric_accuracy};
use crate::placement::TrainingBuffer;
use crate::sim::Environment;
use crate::workload::{mix_seed, ProfileSet};

/// Layer-to-semantic response-time ratio aimed for.
pub const TARGET_RATIO: f64 = 2.68;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub layer_scale: f64,
    pub semantic_scale: f64,
    pub art_layer: f64,
    pub art_semantic: f64,
    pub ratio: f64,
    pub accuracy_layer: f64,
    pub accuracy_semantic: f64,
}

pub fn scale_profiles(profiles: &ProfileSet, layer_scale: f64, semantic_scale: f64) -> ProfileSet {
    let mut out = profiles.clone();
    for p in out.values_mut() {
        p.layer.iter_mut().for_each(|f| f.work *= layer_scale);
        p.semantic.iter_mut().for_each(|f| f.work *= semantic_scale);
    }
    out
}

/// All tasks completed by a fixed-split policy under random placement.
fn completed_under(cfg: &RunConfig, policy: PolicyKind, seed: u64) -> Result<Vec<CompletedTask>> {
    let env_seed = mix_seed(seed, 0xCA1);
    let mut env = Environment::new(cfg.env.clone(), cfg.profiles.clone(), env_seed)?;
    let mut arrivals = cfg.arrivals.clone();
    arrivals.seed = mix_seed(seed ^ cfg.arrivals.seed, 0xCA1);
    let mut ctl = Controller::new(
        policy,
        RunMode::Infer,
        MabState::new(cfg.mab.clone()),
        None,
        env.n_workers(),
        cfg.placement.clone(),
        arrivals,
        TrainingBuffer::new(1),
        env_seed,
    );
    let mut out = Vec::new();
    while !env.is_done() {
        out.extend(ctl.run_interval(&mut env)?.metrics.completed);
    }
    Ok(out)
}

/// Evaluates every (layer, semantic) scale pair over `seeds` and returns the
/// points sorted by distance of the ratio from [`TARGET_RATIO`].
pub fn calibrate(
    cfg: &RunConfig,
    layer_scales: &[f64],
    semantic_scales: &[f64],
    seeds: &[u64],
) -> Result<Vec<CalibrationPoint>> {
    let grid: Vec<(f64, f64)> = layer_scales
        .iter()
        .flat_map(|&l| semantic_scales.iter().map(move |&s| (l, s)))
        .collect();
    let mut points = grid
        .par_iter()
        .map(|&(l, s)| -> Result<CalibrationPoint> {
            let mut c = cfg.clone();
            c.profiles = scale_profiles(&cfg.profiles, l, s);
            let mut layer = Vec::new();
            let mut semantic = Vec::new();
            for &seed in seeds {
                layer.extend(completed_under(&c, PolicyKind::LayerGobi, seed)?);
                semantic.extend(completed_under(&c, PolicyKind::SemanticGobi, seed)?);
            }
            let art_layer = mean_response_time(&layer)?;
            let art_semantic = mean_response_time(&semantic)?;
            Ok(CalibrationPoint {
                layer_scale: l,
                semantic_scale: s,
                art_layer,
                art_semantic,
                ratio: art_layer / art_semantic,
                accuracy_layer: metric_accuracy(&layer)?,
                accuracy_semantic: metric_accuracy(&semantic)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        (a.ratio - TARGET_RATIO)
            .abs()
            .total_cmp(&(b.ratio - TARGET_RATIO).abs())
    });
    Ok(points)
}
