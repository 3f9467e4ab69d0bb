//! Interval-stepped edge environment.

mod engine;
pub mod mobility;
pub mod power;

use serde::{Deserialize, Serialize};

pub use engine::{Environment, StepOutcome};
pub use mobility::{MobilityModel, MobilityTrace};
pub use power::{energy_of_interval, power_at};

use crate::domain::WorkerSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    #[default]
    None,
    HalfCores,
    HalfNetBw,
    HalfRam,
}

/// Returns `specs` with the capacity named by `mode` halved. Halving cores
/// also halves aggregate MIPS.
pub fn apply_constraint_mode(specs: &[WorkerSpec], mode: ConstraintMode) -> Vec<WorkerSpec> {
    specs
        .iter()
        .cloned()
        .map(|mut s| {
            match mode {
                ConstraintMode::None => {}
                ConstraintMode::HalfCores => {
                    s.core_count = (s.core_count / 2).max(1);
                    s.mips /= 2.0;
                }
                ConstraintMode::HalfNetBw => s.net_bw /= 2.0,
                ConstraintMode::HalfRam => s.ram /= 2.0,
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub workers: Vec<WorkerSpec>,
    pub broker: WorkerSpec,
    pub interval_seconds: f64,
    pub horizon: u32,
    pub mobility: MobilityModel,
    pub constraint_mode: ConstraintMode,
    /// Extra one-way latency on broker links when workers sit in a remote cloud.
    pub cloud_extra_ping_ms: Option<f64>,
    /// Broker-to-worker bandwidth cap in the cloud setup, MB/s.
    pub cloud_wan_bw: f64,
    /// Fraction of nominal NIC bandwidth available to transfers.
    pub link_efficiency: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl EnvConfig {
    /// Ten workers in the 2:1:1:1 proportions of the full testbed.
    pub fn reference() -> Self {
        let mut workers = Vec::new();
        workers.extend(std::iter::repeat_n(WorkerSpec::b2ms(), 4));
        workers.extend(std::iter::repeat_n(WorkerSpec::e2asv4(), 2));
        workers.extend(std::iter::repeat_n(WorkerSpec::b4ms(), 2));
        workers.extend(std::iter::repeat_n(WorkerSpec::e4asv4(), 2));
        Self::with_workers(workers)
    }

    /// The 50-worker testbed.
    pub fn full_testbed() -> Self {
        let mut workers = Vec::new();
        workers.extend(std::iter::repeat_n(WorkerSpec::b2ms(), 20));
        workers.extend(std::iter::repeat_n(WorkerSpec::e2asv4(), 10));
        workers.extend(std::iter::repeat_n(WorkerSpec::b4ms(), 10));
        workers.extend(std::iter::repeat_n(WorkerSpec::e4asv4(), 10));
        Self::with_workers(workers)
    }

    pub fn with_workers(workers: Vec<WorkerSpec>) -> Self {
        Self {
            workers,
            broker: WorkerSpec::l8sv2(),
            interval_seconds: 300.0,
            horizon: 100,
            mobility: MobilityModel::default(),
            constraint_mode: ConstraintMode::None,
            cloud_extra_ping_ms: None,
            cloud_wan_bw: 2.0,
            link_efficiency: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one worker is required".into(),
            ));
        }
        for w in self.workers.iter().chain(std::iter::once(&self.broker)) {
            w.validate()?;
        }
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.interval_seconds > 0.0) {
            return Err(Error::InvalidConfig(
                "interval_seconds must be positive".into(),
            ));
        }
        if !(self.link_efficiency > 0.0) || !(self.cloud_wan_bw > 0.0) {
            return Err(Error::InvalidConfig(
                "link bandwidths must be positive".into(),
            ));
        }
        if let MobilityModel::RandomWalk {
            ping_range,
            bw_range,
            step,
        } = &self.mobility
        {
            if !(ping_range.0 > 0.0 && bw_range.0 > 0.0 && *step >= 0.0)
                || ping_range.0 > ping_range.1
                || bw_range.0 > bw_range.1
            {
                return Err(Error::InvalidConfig(
                    "mobility multipliers must be positive ranges".into(),
                ));
            }
        }
        if self.cloud_extra_ping_ms.is_some_and(|p| p < 0.0) {
            return Err(Error::InvalidConfig(
                "cloud ping must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_ram_b2ms() {
        let out = apply_constraint_mode(&[WorkerSpec::b2ms()], ConstraintMode::HalfRam);
        assert_eq!(out[0].ram, 2147.5);
    }

    #[test]
    fn none_is_identity() {
        let specs = EnvConfig::reference().workers;
        assert_eq!(apply_constraint_mode(&specs, ConstraintMode::None), specs);
    }

    #[test]
    fn half_cores_b4ms() {
        let out = apply_constraint_mode(&[WorkerSpec::b4ms()], ConstraintMode::HalfCores);
        assert_eq!(out[0].core_count, 2);
        assert_eq!(out[0].mips, 4051.0);
    }

    #[test]
    fn half_net_bw() {
        let out = apply_constraint_mode(&[WorkerSpec::e4asv4()], ConstraintMode::HalfNetBw);
        assert_eq!(out[0].net_bw, 1250.0);
        assert_eq!(out[0].ram, WorkerSpec::e4asv4().ram);
    }

    #[test]
    fn reference_has_ten_workers() {
        let cfg = EnvConfig::reference();
        assert_eq!(cfg.workers.len(), 10);
        cfg.validate().unwrap();
        assert_eq!(EnvConfig::full_testbed().workers.len(), 50);
    }
}
