//! Control loop, policy wiring, experiment pipeline and scenario suites.

pub mod calibrate;
pub mod config;
pub mod controller;
pub mod io;
pub mod pipeline;
pub mod study;
pub mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{ConfigFile, RunConfig};
pub use controller::{Call, Controller, IntervalRecord};
pub use pipeline::{
    pretrain_surrogates, run_policy, run_replication, run_scenario, train_mab, PolicyRun,
    ReplicationResult, ScenarioResult, Surrogates, TrainingOutcome,
};
pub use study::{split_vs_placement_study, StudyConfig, StudyResult};
pub use suite::{sweep, ScenarioSuite, SweepPoint, SweepRow};

use crate::error::{Error, Result};

/// The five compared policies: split decider plus placement method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    MabDaso,
    MabGobi,
    RandomDaso,
    LayerGobi,
    SemanticGobi,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::SemanticGobi,
        PolicyKind::LayerGobi,
        PolicyKind::RandomDaso,
        PolicyKind::MabGobi,
        PolicyKind::MabDaso,
    ];

    pub fn short(self) -> &'static str {
        match self {
            PolicyKind::MabDaso => "M+D",
            PolicyKind::MabGobi => "M+G",
            PolicyKind::RandomDaso => "R+D",
            PolicyKind::LayerGobi => "L+G",
            PolicyKind::SemanticGobi => "S+G",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::MabDaso => "mab-daso",
            PolicyKind::MabGobi => "mab-gobi",
            PolicyKind::RandomDaso => "random-daso",
            PolicyKind::LayerGobi => "layer-gobi",
            PolicyKind::SemanticGobi => "semantic-gobi",
        }
    }

    pub fn uses_mab(self) -> bool {
        matches!(self, PolicyKind::MabDaso | PolicyKind::MabGobi)
    }

    /// Whether the placement surrogate sees split decisions.
    pub fn decision_aware(self) -> bool {
        matches!(self, PolicyKind::MabDaso | PolicyKind::RandomDaso)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == norm || p.short().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// ε-greedy split decisions with random placement.
    TrainMab,
    /// UCB split decisions with surrogate placement.
    #[default]
    Infer,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_parse() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
            assert_eq!(p.short().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
