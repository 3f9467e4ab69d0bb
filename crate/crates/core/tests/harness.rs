//! End-to-end runs of the training, pre-training and inference pipeline on
//! small configurations.

use edgesplit_core::harness::{
    run_replication, run_scenario, sweep, PolicyKind, RunConfig, ScenarioSuite,
};

fn small() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.env.horizon = 12;
    cfg.train_intervals = 15;
    cfg.replications = 2;
    cfg.placement.pretrain_epochs = 2;
    cfg.placement.counterfactuals = 2;
    cfg.placement.max_iters = 10;
    cfg
}

#[test]
fn every_policy_yields_one_trace_row_per_interval() {
    let cfg = small();
    let rep = run_replication(&cfg, &PolicyKind::ALL, 4).unwrap();
    assert_eq!(rep.runs.len(), PolicyKind::ALL.len());
    for run in &rep.runs {
        assert_eq!(run.trace.len(), cfg.env.horizon as usize, "{}", run.policy);
        let ts: Vec<u32> = run.trace.iter().map(|m| m.t).collect();
        assert_eq!(ts, (0..cfg.env.horizon).collect::<Vec<_>>());
        assert_eq!(run.ram_overcommits, 0);
        assert_eq!(run.precedence_violations, 0);
        assert_eq!(run.invalid_rows, 0);
    }
    assert_eq!(rep.training.trace.len(), cfg.train_intervals as usize);
    assert!(!rep.training.dataset.is_empty());
}

#[test]
fn fixed_splits_set_the_layer_fraction() {
    let cfg = small();
    let rep = run_replication(&cfg, &[PolicyKind::LayerGobi, PolicyKind::SemanticGobi], 1).unwrap();
    assert_eq!(rep.runs[0].summary.layer_fraction, Some(1.0));
    assert_eq!(rep.runs[1].summary.layer_fraction, Some(0.0));
}

#[test]
fn scenario_is_reproducible() {
    let cfg = small();
    let a = run_scenario(&cfg, &[PolicyKind::MabDaso]).unwrap();
    let b = run_scenario(&cfg, &[PolicyKind::MabDaso]).unwrap();
    let summaries = |r: &edgesplit_core::harness::ScenarioResult| {
        r.runs(PolicyKind::MabDaso)
            .iter()
            .map(|p| p.summary.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(a.replications.len(), 2);
    assert_eq!(summaries(&a), summaries(&b));
    assert_eq!(
        a.aggregate(PolicyKind::MabDaso),
        b.aggregate(PolicyKind::MabDaso)
    );
}

#[test]
fn sweep_emits_a_row_per_point_and_policy() {
    let mut cfg = small();
    cfg.replications = 1;
    let policies = [PolicyKind::LayerGobi, PolicyKind::MabDaso];
    let rows = sweep(
        ScenarioSuite::LambdaSweep,
        &cfg,
        &policies,
        Some(&[2.0, 6.0]),
    );
    assert_eq!(rows.len(), 2 * policies.len());
    assert!(rows
        .iter()
        .all(|r| r.error.is_none() && r.replications == 1));
}
