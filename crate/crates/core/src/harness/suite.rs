//! Scenario suites: each expands to a list of run configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::run_scenario;
use super::{PolicyKind, RunConfig};
use crate::domain::AppKind;
use crate::error::{Error, Result};
use crate::sim::ConstraintMode;

/// Extra one-way latency to remote cloud workers.
pub const CLOUD_EXTRA_PING_MS: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioSuite {
    Reference,
    LambdaSweep,
    AlphaBetaSweep,
    ConstrainedEnv,
    SingleWorkload,
    EdgeVsCloud,
    SplitVsPlacementStudy,
}

impl ScenarioSuite {
    pub const ALL: [ScenarioSuite; 7] = [
        ScenarioSuite::Reference,
        ScenarioSuite::LambdaSweep,
        ScenarioSuite::AlphaBetaSweep,
        ScenarioSuite::ConstrainedEnv,
        ScenarioSuite::SingleWorkload,
        ScenarioSuite::EdgeVsCloud,
        ScenarioSuite::SplitVsPlacementStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioSuite::Reference => "reference",
            ScenarioSuite::LambdaSweep => "lambda-sweep",
            ScenarioSuite::AlphaBetaSweep => "alpha-beta-sweep",
            ScenarioSuite::ConstrainedEnv => "constrained-env",
            ScenarioSuite::SingleWorkload => "single-workload",
            ScenarioSuite::EdgeVsCloud => "edge-vs-cloud",
            ScenarioSuite::SplitVsPlacementStudy => "split-vs-placement",
        }
    }

    /// Default numeric points for the parametric suites.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            ScenarioSuite::LambdaSweep => vec![2.0, 6.0, 12.0, 24.0, 50.0],
            ScenarioSuite::AlphaBetaSweep => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            _ => Vec::new(),
        }
    }

    /// Expands the suite around `base`. `values` overrides the default
    /// points of the parametric suites and is ignored by the others.
    pub fn expand(self, base: &RunConfig, values: Option<&[f64]>) -> Vec<SweepPoint> {
        let point = |label: String, value: f64, cfg: RunConfig| SweepPoint { label, value, cfg };
        let defaults = self.default_values();
        let values = values.unwrap_or(&defaults);
        match self {
            ScenarioSuite::Reference | ScenarioSuite::SplitVsPlacementStudy => {
                vec![point("reference".into(), 0.0, base.clone())]
            }
            ScenarioSuite::LambdaSweep => values
                .iter()
                .map(|&l| {
                    let mut c = base.clone();
                    c.arrivals.lambda = l;
                    point(format!("lambda={l}"), l, c)
                })
                .collect(),
            ScenarioSuite::AlphaBetaSweep => values
                .iter()
                .map(|&a| {
                    let mut c = base.clone();
                    c.placement.alpha = a;
                    c.placement.beta = 1.0 - a;
                    point(format!("alpha={a}"), a, c)
                })
                .collect(),
            ScenarioSuite::ConstrainedEnv => [
                ("compute", ConstraintMode::HalfCores),
                ("network", ConstraintMode::HalfNetBw),
                ("memory", ConstraintMode::HalfRam),
            ]
            .into_iter()
            .enumerate()
            .map(|(i, (label, mode))| {
                let mut c = base.clone();
                c.env.constraint_mode = mode;
                point(label.into(), i as f64, c)
            })
            .collect(),
            ScenarioSuite::SingleWorkload => AppKind::ALL
                .into_iter()
                .map(|app| {
                    let mut c = base.clone();
                    c.arrivals = c.arrivals.single_app(app);
                    point(app.name().into(), app.index() as f64, c)
                })
                .collect(),
            ScenarioSuite::EdgeVsCloud => {
                let mut cloud = base.clone();
                cloud.env.cloud_extra_ping_ms = Some(CLOUD_EXTRA_PING_MS);
                vec![
                    point("edge".into(), 0.0, base.clone()),
                    point("cloud".into(), 1.0, cloud),
                ]
            }
        }
    }
}

impl fmt::Display for ScenarioSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        ScenarioSuite::ALL
            .into_iter()
            .find(|x| x.name() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub value: f64,
    pub cfg: RunConfig,
}

/// Aggregated result of one (point, policy) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub suite: String,
    pub point: String,
    pub value: f64,
    pub policy: PolicyKind,
    pub replications: usize,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    pub error: Option<String>,
}

/// Runs every point for every policy; points run concurrently. A failing
/// point yields error-tagged rows and does not stop the sweep.
pub fn sweep(
    suite: ScenarioSuite,
    base: &RunConfig,
    policies: &[PolicyKind],
    values: Option<&[f64]>,
) -> Vec<SweepRow> {
    suite
        .expand(base, values)
        .par_iter()
        .map(|pt| {
            let row = |policy: PolicyKind| SweepRow {
                suite: suite.name().into(),
                point: pt.label.clone(),
                value: pt.value,
                policy,
                replications: pt.cfg.replications,
                mean: BTreeMap::new(),
                std: BTreeMap::new(),
                error: None,
            };
            match run_scenario(&pt.cfg, policies) {
                Ok(res) => policies
                    .iter()
                    .map(|&p| {
                        let agg = res.aggregate(p);
                        SweepRow {
                            mean: agg.mean,
                            std: agg.std,
                            ..row(p)
                        }
                    })
                    .collect::<Vec<_>>(),
                Err(e) => policies
                    .iter()
                    .map(|&p| SweepRow {
                        error: Some(e.to_string()),
                        ..row(p)
                    })
                    .collect(),
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_expand_to_expected_points() {
        let base = RunConfig::default();
        assert_eq!(ScenarioSuite::Reference.expand(&base, None).len(), 1);
        let lam = ScenarioSuite::LambdaSweep.expand(&base, Some(&[2.0, 6.0]));
        assert_eq!(
            lam.iter()
                .map(|p| p.cfg.arrivals.lambda)
                .collect::<Vec<_>>(),
            vec![2.0, 6.0]
        );
        for p in ScenarioSuite::AlphaBetaSweep.expand(&base, None) {
            assert!((p.cfg.placement.alpha + p.cfg.placement.beta - 1.0).abs() < 1e-12);
            p.cfg.validate().unwrap();
        }
        assert_eq!(ScenarioSuite::ConstrainedEnv.expand(&base, None).len(), 3);
        let single = ScenarioSuite::SingleWorkload.expand(&base, None);
        assert_eq!(single[2].cfg.arrivals.app_mix, [0.0, 0.0, 1.0]);
        let evc = ScenarioSuite::EdgeVsCloud.expand(&base, None);
        assert_eq!(
            evc[1].cfg.env.cloud_extra_ping_ms,
            Some(CLOUD_EXTRA_PING_MS)
        );
        for s in ScenarioSuite::ALL {
            assert_eq!(s.name().parse::<ScenarioSuite>().unwrap(), s);
        }
    }

    #[test]
    fn failed_points_become_error_rows() {
        let mut base = RunConfig::default();
        base.arrivals.lambda = -1.0;
        let rows = sweep(
            ScenarioSuite::Reference,
            &base,
            &[PolicyKind::LayerGobi, PolicyKind::SemanticGobi],
            None,
        );
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.error.is_some()));
    }
}
