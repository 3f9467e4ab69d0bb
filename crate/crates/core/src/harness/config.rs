//! TOML run configuration.
//!
//! ```toml
//! policy = "mab-daso"      # mab-daso | mab-gobi | random-daso | layer-gobi | semantic-gobi
//! mode = "infer"           # infer | train-mab
//! seed = 0
//! replications = 5
//! train_intervals = 200
//!
//! [env]
//! preset = "reference"     # reference (10 workers) | testbed (50 workers)
//! horizon = 100
//! constraint_mode = "none" # none | half_cores | half_net_bw | half_ram
//!
//! [arrivals]
//! lambda = 3.0
//!
//! [mab]
//! c = 0.5
//!
//! [placement]
//! alpha = 0.5
//! beta = 0.5
//!
//! [profiles.mnist]
//! layer_accuracy = 0.97
//! ```
//!
//! Every key is optional; omitted keys take the defaults of the
//! corresponding module config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PolicyKind, RunMode};
use crate::domain::{AppKind, WorkerSpec};
use crate::error::{Error, Result};
use crate::mab::MabConfig;
use crate::placement::PlacementConfig;
use crate::sim::{ConstraintMode, EnvConfig, MobilityModel};
use crate::workload::{default_profiles, ArrivalConfig, FragmentSpec, ProfileSet};

/// Validated configuration of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub arrivals: ArrivalConfig,
    pub mab: MabConfig,
    pub placement: PlacementConfig,
    pub profiles: ProfileSet,
    pub policy: PolicyKind,
    pub mode: RunMode,
    pub seed: u64,
    pub replications: usize,
    /// Length of the ε-greedy bandit training run.
    pub train_intervals: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::reference(),
            arrivals: ArrivalConfig::default(),
            mab: MabConfig::default(),
            placement: PlacementConfig::default(),
            profiles: default_profiles(),
            policy: PolicyKind::MabDaso,
            mode: RunMode::Infer,
            seed: 0,
            replications: 5,
            train_intervals: 200,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.arrivals.validate()?;
        self.mab.validate()?;
        self.placement.validate()?;
        for app in AppKind::ALL {
            if self.arrivals.app_mix[app.index()] > 0.0 {
                self.profiles
                    .get(&app)
                    .ok_or_else(|| Error::UnknownApp(app.to_string()))?
                    .validate()?;
            }
        }
        if self.mode == RunMode::TrainMab && !self.policy.uses_mab() {
            return Err(Error::InvalidConfig(format!(
                "train-mab mode needs a bandit policy, got {}",
                self.policy.name()
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        if self.train_intervals == 0 {
            return Err(Error::InvalidConfig(
                "train_intervals must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(s)?;
        file.into_run_config()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk layout; converted into a [`RunConfig`] by filling defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub policy: Option<PolicyKind>,
    pub mode: Option<RunMode>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub train_intervals: Option<u32>,
    pub env: EnvSection,
    pub arrivals: Option<ArrivalConfig>,
    pub mab: Option<MabConfig>,
    pub placement: Option<PlacementConfig>,
    pub profiles: std::collections::BTreeMap<String, ProfileOverride>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    /// `reference` or `testbed`; ignored when `workers` is given.
    pub preset: Option<String>,
    pub workers: Option<Vec<WorkerSpec>>,
    pub broker: Option<WorkerSpec>,
    pub interval_seconds: Option<f64>,
    pub horizon: Option<u32>,
    pub mobility: Option<MobilityModel>,
    pub constraint_mode: Option<ConstraintMode>,
    pub cloud_extra_ping_ms: Option<f64>,
    pub cloud_wan_bw: Option<f64>,
    pub link_efficiency: Option<f64>,
}

impl EnvSection {
    fn build(self) -> Result<EnvConfig> {
        let mut env = match self.preset.as_deref() {
            None | Some("reference") => EnvConfig::reference(),
            Some("testbed") => EnvConfig::full_testbed(),
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown env preset {other:?}"
                )))
            }
        };
        if let Some(w) = self.workers {
            env.workers = w;
        }
        if let Some(b) = self.broker {
            env.broker = b;
        }
        if let Some(v) = self.interval_seconds {
            env.interval_seconds = v;
        }
        if let Some(v) = self.horizon {
            env.horizon = v;
        }
        if let Some(v) = self.mobility {
            env.mobility = v;
        }
        if let Some(v) = self.constraint_mode {
            env.constraint_mode = v;
        }
        if self.cloud_extra_ping_ms.is_some() {
            env.cloud_extra_ping_ms = self.cloud_extra_ping_ms;
        }
        if let Some(v) = self.cloud_wan_bw {
            env.cloud_wan_bw = v;
        }
        if let Some(v) = self.link_efficiency {
            env.link_efficiency = v;
        }
        Ok(env)
    }
}

/// Partial override of one application's profile.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOverride {
    pub layer: Option<Vec<FragmentSpec>>,
    pub semantic: Option<Vec<FragmentSpec>>,
    pub layer_accuracy: Option<f64>,
    pub semantic_accuracy: Option<f64>,
    pub accuracy_jitter: Option<f64>,
    pub input_size: Option<f64>,
    pub image_size_mb: Option<f64>,
}

impl ConfigFile {
    pub fn into_run_config(self) -> Result<RunConfig> {
        let d = RunConfig::default();
        let mut profiles = default_profiles();
        for (name, o) in self.profiles {
            let app = AppKind::from_name(&name)?;
            let p = profiles
                .get_mut(&app)
                .expect("default profile for every app");
            if let Some(v) = o.layer {
                p.layer = v;
            }
            if let Some(v) = o.semantic {
                p.semantic = v;
            }
            if let Some(v) = o.layer_accuracy {
                p.layer_accuracy = v;
            }
            if let Some(v) = o.semantic_accuracy {
                p.semantic_accuracy = v;
            }
            if let Some(v) = o.accuracy_jitter {
                p.accuracy_jitter = v;
            }
            if let Some(v) = o.input_size {
                p.input_size = v;
            }
            if let Some(v) = o.image_size_mb {
                p.image_size_mb = v;
            }
        }
        let cfg = RunConfig {
            env: self.env.build()?,
            arrivals: self.arrivals.unwrap_or(d.arrivals),
            mab: self.mab.unwrap_or(d.mab),
            placement: self.placement.unwrap_or(d.placement),
            profiles,
            policy: self.policy.unwrap_or(d.policy),
            mode: self.mode.unwrap_or(d.mode),
            seed: self.seed.unwrap_or(d.seed),
            replications: self.replications.unwrap_or(d.replications),
            train_intervals: self.train_intervals.unwrap_or(d.train_intervals),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn sections_override_fields() {
        let cfg = RunConfig::from_toml_str(
            r#"
            policy = "layer-gobi"
            seed = 9
            [env]
            horizon = 7
            constraint_mode = "half_ram"
            [arrivals]
            lambda = 6.0
            [placement]
            alpha = 1.0
            beta = 0.0
            [profiles.cifar100]
            layer_accuracy = 0.95
            "#,
        )
        .unwrap();
        assert_eq!(cfg.policy, PolicyKind::LayerGobi);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.env.horizon, 7);
        assert_eq!(cfg.env.constraint_mode, ConstraintMode::HalfRam);
        assert_eq!(cfg.arrivals.lambda, 6.0);
        assert_eq!(cfg.arrivals.batch_min, ArrivalConfig::default().batch_min);
        assert_eq!(cfg.placement.alpha, 1.0);
        assert_eq!(cfg.profiles[&AppKind::Cifar100].layer_accuracy, 0.95);
        assert_eq!(
            cfg.profiles[&AppKind::Mnist],
            default_profiles()[&AppKind::Mnist]
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RunConfig::from_toml_str("mode = \"train-mab\"\npolicy = \"layer-gobi\"").is_err());
        assert!(RunConfig::from_toml_str("[placement]\nalpha = 0.9").is_err());
        assert!(RunConfig::from_toml_str("[env]\npreset = \"moon\"").is_err());
        assert!(RunConfig::from_toml_str("[profiles.imagenet]\nlayer_accuracy = 0.5").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("replications = 0").is_err());
    }
}
