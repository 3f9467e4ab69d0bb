//! Task arrivals and the mapping from (application, split) to container
//! fragments.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{AppKind, Container, ContainerStatus, SplitDecision, Task, TaskId};
use crate::error::{Error, Result};

/// Resource footprint of one split fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentSpec {
    /// Million instructions per 1000 batch inputs.
    pub work: f64,
    /// MB resident while placed.
    pub ram: f64,
    /// MB produced per 1000 batch inputs.
    pub output_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub app: AppKind,
    /// Ordered chain.
    pub layer: Vec<FragmentSpec>,
    /// Parallel branches.
    pub semantic: Vec<FragmentSpec>,
    pub layer_accuracy: f64,
    pub semantic_accuracy: f64,
    pub accuracy_jitter: f64,
    /// MB of raw input per 1000 batch inputs.
    pub input_size: f64,
    /// Container image size, distributed once at start-up.
    pub image_size_mb: f64,
}

impl WorkloadProfile {
    /// Calibrated defaults. Work scales with model size; CIFAR100 is the
    /// heaviest and least accurate application.
    pub fn default_for(app: AppKind) -> Self {
        let (scale, ram, inter, input, image, acc_l, acc_s) = match app {
            AppKind::Mnist => (0.6, 450.0, 1.5, 0.8, 11.0, 0.9712, 0.9408),
            AppKind::FashionMnist => (1.0, 800.0, 2.5, 2.4, 45.0, 0.9305, 0.8902),
            AppKind::Cifar100 => (1.4, 1200.0, 4.0, 3.1, 61.5, 0.8934, 0.8402),
        };
        let stages = 4;
        let layer = (0..stages)
            .map(|k| FragmentSpec {
                work: DEFAULT_LAYER_WORK * scale,
                ram,
                output_size: if k + 1 == stages { 0.05 } else { inter },
            })
            .collect();
        let semantic = (0..4)
            .map(|_| FragmentSpec {
                work: DEFAULT_SEMANTIC_WORK * scale,
                ram: ram * 0.85,
                output_size: 0.05,
            })
            .collect();
        Self {
            app,
            layer,
            semantic,
            layer_accuracy: acc_l,
            semantic_accuracy: acc_s,
            accuracy_jitter: 0.01,
            input_size: input,
            image_size_mb: image,
        }
    }

    pub fn fragments(&self, decision: SplitDecision) -> &[FragmentSpec] {
        match decision {
            SplitDecision::Layer => &self.layer,
            SplitDecision::Semantic => &self.semantic,
        }
    }

    pub fn base_accuracy(&self, decision: SplitDecision) -> f64 {
        match decision {
            SplitDecision::Layer => self.layer_accuracy,
            SplitDecision::Semantic => self.semantic_accuracy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("profile {}: {m}", self.app)));
        if self.layer.len() < 2 || self.semantic.len() < 2 {
            return bad("layer and semantic splits need at least two fragments");
        }
        if self.layer.len() + self.semantic.len() > MAX_FRAGMENTS {
            return bad("too many fragments");
        }
        let all_positive = self
            .layer
            .iter()
            .chain(&self.semantic)
            .all(|f| f.work > 0.0 && f.ram > 0.0 && f.output_size > 0.0);
        if !all_positive {
            return bad("fragment work, ram and output_size must be positive");
        }
        if !(self.layer_accuracy > self.semantic_accuracy) {
            return bad("layer accuracy must exceed semantic accuracy");
        }
        for a in [self.layer_accuracy, self.semantic_accuracy] {
            if !(0.0..=1.0).contains(&a) {
                return bad("accuracies must lie in [0, 1]");
            }
        }
        if self.accuracy_jitter < 0.0 || self.input_size <= 0.0 {
            return bad("jitter must be non-negative and input size positive");
        }
        Ok(())
    }
}

/// Per-fragment work defaults, MI per 1000 inputs before the app scale.
pub const DEFAULT_LAYER_WORK: f64 = 8_000.0;
pub const DEFAULT_SEMANTIC_WORK: f64 = 13_500.0;
const MAX_FRAGMENTS: usize = 64;

pub type ProfileSet = BTreeMap<AppKind, WorkloadProfile>;

pub fn default_profiles() -> ProfileSet {
    AppKind::ALL
        .iter()
        .map(|&a| (a, WorkloadProfile::default_for(a)))
        .collect()
}

/// Deadline distribution for one application: `base ± U(jitter)` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaSpec {
    pub base: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrivalConfig {
    /// Mean new tasks per interval.
    pub lambda: f64,
    pub batch_min: u32,
    pub batch_max: u32,
    /// Probabilities for mnist, fashionmnist, cifar100.
    pub app_mix: [f64; 3],
    pub sla: BTreeMap<AppKind, SlaSpec>,
    pub seed: u64,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        let sla = [
            (
                AppKind::Mnist,
                SlaSpec {
                    base: 6.0,
                    jitter: 5.0,
                },
            ),
            (
                AppKind::FashionMnist,
                SlaSpec {
                    base: 6.5,
                    jitter: 5.0,
                },
            ),
            (
                AppKind::Cifar100,
                SlaSpec {
                    base: 7.0,
                    jitter: 5.0,
                },
            ),
        ]
        .into_iter()
        .collect();
        Self {
            lambda: 3.0,
            batch_min: 16_000,
            batch_max: 64_000,
            app_mix: [1.0 / 3.0; 3],
            sla,
            seed: 0,
        }
    }
}

impl ArrivalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        let total: f64 = self.app_mix.iter().sum();
        if (total - 1.0).abs() > 1e-6 || self.app_mix.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "app_mix must be a probability vector, sums to {total}"
            )));
        }
        if self.batch_min == 0 || self.batch_min > self.batch_max {
            return Err(Error::InvalidConfig("invalid batch range".into()));
        }
        for app in AppKind::ALL {
            if self.app_mix[app.index()] > 0.0 && !self.sla.contains_key(&app) {
                return Err(Error::InvalidConfig(format!("no sla entry for {app}")));
            }
        }
        Ok(())
    }

    /// All arrivals drawn from a single application.
    pub fn single_app(mut self, app: AppKind) -> Self {
        self.app_mix = [0.0; 3];
        self.app_mix[app.index()] = 1.0;
        self
    }
}

/// Mixes a seed with a stream index into an independent 64-bit seed.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Task ids encode the arrival interval in the high bits.
pub fn task_id(t: u32, k: u32) -> TaskId {
    (u64::from(t) << 20) | u64::from(k)
}

/// Tasks created at the start of interval `t`; a pure function of `(cfg.seed, t)`.
pub fn generate_arrivals(cfg: &ArrivalConfig, t: u32) -> Vec<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::from(t)));
    let count = Poisson::new(cfg.lambda)
        .map(|p| p.sample(&mut rng) as u32)
        .unwrap_or(0);
    (0..count)
        .map(|k| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut app = AppKind::Cifar100;
            for a in AppKind::ALL {
                acc += cfg.app_mix[a.index()];
                if u < acc {
                    app = a;
                    break;
                }
            }
            let batch = rng.random_range(cfg.batch_min..=cfg.batch_max);
            let spec = cfg.sla.get(&app).copied().unwrap_or(SlaSpec {
                base: 5.0,
                jitter: 0.0,
            });
            let jitter = if spec.jitter > 0.0 {
                rng.random_range(-spec.jitter..=spec.jitter)
            } else {
                0.0
            };
            let sla = (spec.base + jitter).max(0.0);
            Task::new(task_id(t, k), app, batch, sla, t)
        })
        .collect()
}

/// Materializes the fragments of `task` under `decision`. Work and
/// transfer sizes scale linearly with the batch size.
pub fn realize_containers(
    task: &Task,
    decision: SplitDecision,
    profiles: &ProfileSet,
) -> Result<Vec<Container>> {
    let profile = profiles
        .get(&task.app)
        .ok_or_else(|| Error::UnknownApp(task.app.to_string()))?;
    let scale = f64::from(task.batch_size) / 1000.0;
    let fragments = profile.fragments(decision);
    let n = fragments.len();
    Ok(fragments
        .iter()
        .enumerate()
        .map(|(k, frag)| {
            let (stage, status, input) = match decision {
                SplitDecision::Layer if k == 0 => (0, ContainerStatus::Ready, profile.input_size),
                SplitDecision::Layer => (k, ContainerStatus::Waiting, fragments[k - 1].output_size),
                SplitDecision::Semantic => (0, ContainerStatus::Ready, profile.input_size),
            };
            Container {
                id: task.id * MAX_FRAGMENTS as u64 + k as u64,
                task_id: task.id,
                stage,
                stage_count: match decision {
                    SplitDecision::Layer => n,
                    SplitDecision::Semantic => 1,
                },
                decision,
                app: task.app,
                work_total: frag.work * scale,
                work_done: 0.0,
                ram_demand: frag.ram,
                input_size: input * scale,
                output_size: frag.output_size * scale,
                status,
            }
        })
        .collect())
}

/// Base accuracy for the split plus Gaussian jitter, clamped to [0, 1].
pub fn sample_accuracy<R: Rng + ?Sized>(
    decision: SplitDecision,
    profile: &WorkloadProfile,
    rng: &mut R,
) -> f64 {
    let base = profile.base_accuracy(decision);
    let noise = if profile.accuracy_jitter > 0.0 {
        Normal::new(0.0, profile.accuracy_jitter)
            .map(|n| n.sample(rng))
            .unwrap_or(0.0)
    } else {
        0.0
    };
    (base + noise).clamp(0.0, 1.0)
}
