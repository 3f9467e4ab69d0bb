//! Shared data model: applications, tasks, container fragments, worker
//! capacities, per-interval system state and placement matrices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TaskId = u64;
pub type ContainerId = u64;

/// DNN application served by a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppKind {
    Mnist,
    FashionMnist,
    Cifar100,
}

impl AppKind {
    pub const ALL: [AppKind; 3] = [AppKind::Mnist, AppKind::FashionMnist, AppKind::Cifar100];

    pub fn index(self) -> usize {
        match self {
            AppKind::Mnist => 0,
            AppKind::FashionMnist => 1,
            AppKind::Cifar100 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AppKind::Mnist => "mnist",
            AppKind::FashionMnist => "fashionmnist",
            AppKind::Cifar100 => "cifar100",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mnist" => Ok(AppKind::Mnist),
            "fashionmnist" | "fashion_mnist" | "fashion-mnist" => Ok(AppKind::FashionMnist),
            "cifar100" | "cifar-100" => Ok(AppKind::Cifar100),
            other => Err(Error::UnknownApp(other.to_string())),
        }
    }
}

impl fmt::Display for AppKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer-wise (sequential chain) or semantic (parallel branches) split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitDecision {
    Layer,
    Semantic,
}

impl SplitDecision {
    pub const ALL: [SplitDecision; 2] = [SplitDecision::Layer, SplitDecision::Semantic];

    pub fn index(self) -> usize {
        match self {
            SplitDecision::Layer => 0,
            SplitDecision::Semantic => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SplitDecision::Layer => SplitDecision::Semantic,
            SplitDecision::Semantic => SplitDecision::Layer,
        }
    }
}

/// A user job: one batch of inputs for one application, with a deadline.
///
/// Times (`sla`, `response_time`, `wait_time`) are measured in scheduling
/// intervals; `arrival` is the index of the interval the task was created in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub app: AppKind,
    pub batch_size: u32,
    pub sla: f64,
    pub arrival: u32,
    decision: Option<SplitDecision>,
    pub response_time: Option<f64>,
    pub wait_time: f64,
    pub accuracy: Option<f64>,
}

impl Task {
    pub fn new(id: TaskId, app: AppKind, batch_size: u32, sla: f64, arrival: u32) -> Self {
        Self {
            id,
            app,
            batch_size,
            sla,
            arrival,
            decision: None,
            response_time: None,
            wait_time: 0.0,
            accuracy: None,
        }
    }

    pub fn decision(&self) -> Option<SplitDecision> {
        self.decision
    }

    /// Records the split decision. A decision is immutable once taken.
    pub fn set_decision(&mut self, decision: SplitDecision) -> Result<()> {
        if self.decision.is_some() {
            return Err(Error::DecisionAlreadySet(self.id));
        }
        self.decision = Some(decision);
        Ok(())
    }

    pub fn with_decision(mut self, decision: SplitDecision) -> Self {
        self.decision = Some(decision);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContainerStatus {
    /// Blocked on an unfinished predecessor stage.
    Waiting,
    /// Eligible for placement.
    Ready,
    Running,
    Done,
}

/// One realized split fragment of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub id: ContainerId,
    pub task_id: TaskId,
    /// Precedence index. Layer chains use 0..n, semantic branches are all 0.
    pub stage: usize,
    pub stage_count: usize,
    pub decision: SplitDecision,
    pub app: AppKind,
    /// Million instructions.
    pub work_total: f64,
    pub work_done: f64,
    /// MB resident while placed.
    pub ram_demand: f64,
    /// MB read before computing (batch input or forwarded intermediate).
    pub input_size: f64,
    /// MB forwarded to the next stage or returned to the broker.
    pub output_size: f64,
    pub status: ContainerStatus,
}

impl Container {
    pub fn remaining_work(&self) -> f64 {
        (self.work_total - self.work_done).max(0.0)
    }

    pub fn is_final(&self) -> bool {
        self.decision == SplitDecision::Semantic || self.stage + 1 == self.stage_count
    }
}

/// Static worker capacities, cost and power model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub name: String,
    pub core_count: u32,
    /// Aggregate million instructions per second over all cores.
    pub mips: f64,
    /// MB.
    pub ram: f64,
    /// MB/s.
    pub ram_bw: f64,
    /// ms.
    pub base_ping: f64,
    /// MB/s.
    pub net_bw: f64,
    /// MB/s.
    pub disk_bw: f64,
    /// $/hr.
    pub cost_rate: f64,
    /// (cpu utilization, watts) knots, sorted by utilization.
    pub power_curve: Vec<(f64, f64)>,
}

fn spec_power_curve(idle: f64, max: f64) -> Vec<(f64, f64)> {
    // Mildly concave, as in published SPECpower measurements.
    const SHAPE: [f64; 11] = [
        0.0, 0.17, 0.30, 0.41, 0.51, 0.60, 0.69, 0.77, 0.85, 0.93, 1.0,
    ];
    SHAPE
        .iter()
        .enumerate()
        .map(|(i, s)| (i as f64 / 10.0, idle + (max - idle) * s))
        .collect()
}

impl WorkerSpec {
    pub fn b2ms() -> Self {
        Self {
            name: "B2ms".into(),
            core_count: 2,
            mips: 4029.0,
            ram: 4295.0,
            ram_bw: 372.0,
            base_ping: 2.0,
            net_bw: 1000.0,
            disk_bw: 13.4,
            cost_rate: 0.0944,
            power_curve: spec_power_curve(45.0, 90.0),
        }
    }

    pub fn e2asv4() -> Self {
        Self {
            name: "E2asv4".into(),
            core_count: 2,
            mips: 4019.0,
            ram: 4172.0,
            ram_bw: 412.0,
            base_ping: 2.0,
            net_bw: 1000.0,
            disk_bw: 10.3,
            cost_rate: 0.148,
            power_curve: spec_power_curve(48.0, 96.0),
        }
    }

    pub fn b4ms() -> Self {
        Self {
            name: "B4ms".into(),
            core_count: 4,
            mips: 8102.0,
            ram: 7962.0,
            ram_bw: 360.0,
            base_ping: 3.0,
            net_bw: 2500.0,
            disk_bw: 10.6,
            cost_rate: 0.189,
            power_curve: spec_power_curve(70.0, 152.0),
        }
    }

    pub fn e4asv4() -> Self {
        Self {
            name: "E4asv4".into(),
            core_count: 4,
            mips: 7962.0,
            ram: 7962.0,
            ram_bw: 476.0,
            base_ping: 3.0,
            net_bw: 2500.0,
            disk_bw: 11.64,
            cost_rate: 0.296,
            power_curve: spec_power_curve(74.0, 160.0),
        }
    }

    /// The broker node.
    pub fn l8sv2() -> Self {
        Self {
            name: "L8sv2".into(),
            core_count: 8,
            mips: 16182.0,
            ram: 17012.0,
            ram_bw: 945.0,
            base_ping: 1.0,
            net_bw: 4000.0,
            disk_bw: 17.6,
            cost_rate: 0.724,
            power_curve: spec_power_curve(120.0, 260.0),
        }
    }

    /// Peak power draw in watts.
    pub fn max_power(&self) -> f64 {
        self.power_curve.last().map(|&(_, w)| w).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("worker {}: {msg}", self.name)));
        let caps = [
            ("core_count", self.core_count as f64),
            ("mips", self.mips),
            ("ram", self.ram),
            ("ram_bw", self.ram_bw),
            ("base_ping", self.base_ping),
            ("net_bw", self.net_bw),
            ("disk_bw", self.disk_bw),
            ("cost_rate", self.cost_rate),
        ];
        for (name, value) in caps {
            if !(value > 0.0 && value.is_finite()) {
                return bad(format!("{name} must be positive, got {value}"));
            }
        }
        let curve = &self.power_curve;
        if curve.len() < 2 {
            return bad("power curve needs at least two knots".into());
        }
        if curve[0].0 != 0.0 || curve[curve.len() - 1].0 != 1.0 {
            return bad("power curve must cover utilization 0 and 1".into());
        }
        for pair in curve.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return bad("power curve utilizations must be strictly increasing".into());
            }
            if pair[1].1 < pair[0].1 {
                return bad("power curve must be non-decreasing".into());
            }
        }
        Ok(())
    }
}

/// Per-worker view at the start of an interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub cpu_util: f64,
    pub ram_util: f64,
    pub net_util: f64,
    pub disk_util: f64,
    pub current_ping_ms: f64,
    pub current_net_bw: f64,
}

/// Per-container view at the start of an interval. Demand fractions are
/// relative to the hosting worker, or to the fleet maximum when unplaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerDemand {
    pub container_id: ContainerId,
    pub task_id: TaskId,
    pub app: AppKind,
    pub decision: SplitDecision,
    pub stage: usize,
    pub stage_count: usize,
    pub host: Option<usize>,
    pub cpu: f64,
    pub ram: f64,
    pub net: f64,
    pub disk: f64,
    /// Remaining work over the fleet's fastest worker for one interval, capped at 1.
    pub work_norm: f64,
    /// RAM over the fleet's largest worker.
    pub ram_norm: f64,
    pub remaining_fraction: f64,
    /// Absolute RAM in MB, used for feasibility checks.
    pub ram_mb: f64,
}

/// Resource-monitor snapshot. Containers are listed in placement-row order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub workers: Vec<WorkerState>,
    pub containers: Vec<ContainerDemand>,
    /// Worker RAM capacities in MB.
    pub worker_ram: Vec<f64>,
}

/// Assignment of placement rows (containers) to workers. `None` rows are
/// wait-queued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementMatrix {
    rows: Vec<Option<usize>>,
    n_workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlacementViolation {
    WorkerOutOfRange {
        row: usize,
        worker: usize,
    },
    RamOvercommit {
        worker: usize,
        used: f64,
        capacity: f64,
    },
}

impl PlacementMatrix {
    pub fn empty(n_rows: usize, n_workers: usize) -> Self {
        Self {
            rows: vec![None; n_rows],
            n_workers,
        }
    }

    pub fn from_rows(rows: Vec<Option<usize>>, n_workers: usize) -> Self {
        Self { rows, n_workers }
    }

    pub fn rows(&self) -> &[Option<usize>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn get(&self, row: usize) -> Option<usize> {
        self.rows.get(row).copied().flatten()
    }

    pub fn set(&mut self, row: usize, worker: Option<usize>) {
        self.rows[row] = worker;
    }

    /// Row-major 0/1 matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.rows.len() * self.n_workers];
        for (r, w) in self.rows.iter().enumerate() {
            if let Some(w) = w {
                dense[r * self.n_workers + w] = 1.0;
            }
        }
        dense
    }

    /// Checks one-hot-or-zero rows and per-worker RAM feasibility.
    pub fn check(&self, ram: &[f64], capacity: &[f64]) -> Vec<PlacementViolation> {
        let mut used = vec![0.0; self.n_workers];
        let mut violations = Vec::new();
        for (r, w) in self.rows.iter().enumerate() {
            if let Some(w) = *w {
                if w >= self.n_workers {
                    violations.push(PlacementViolation::WorkerOutOfRange { row: r, worker: w });
                    continue;
                }
                used[w] += ram[r];
            }
        }
        for (w, (&u, &cap)) in used.iter().zip(capacity).enumerate() {
            if u > cap + 1e-9 {
                violations.push(PlacementViolation::RamOvercommit {
                    worker: w,
                    used: u,
                    capacity: cap,
                });
            }
        }
        violations
    }
}

/// A task that left the system, as reported by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedTask {
    pub task_id: TaskId,
    pub app: AppKind,
    pub decision: SplitDecision,
    pub response_time: f64,
    pub wait_time: f64,
    pub accuracy: f64,
    pub sla: f64,
    pub violated: bool,
}

impl CompletedTask {
    pub fn new(
        task_id: TaskId,
        app: AppKind,
        decision: SplitDecision,
        response_time: f64,
        wait_time: f64,
        accuracy: f64,
        sla: f64,
    ) -> Self {
        Self {
            task_id,
            app,
            decision,
            response_time,
            wait_time,
            accuracy,
            sla,
            violated: response_time > sla,
        }
    }

    pub fn met_deadline(&self) -> bool {
        !self.violated
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub t: u32,
    pub aec: f64,
    /// Mean response time of tasks leaving in this interval; 0 when none leave.
    pub art: f64,
    pub energy_wh: f64,
    pub completed: Vec<CompletedTask>,
    pub cost_usd: f64,
    pub objective: f64,
    pub migrations: u32,
    pub wait_queued: u32,
}

/// Whole-run QoS accounting over tasks completed within the horizon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub accuracy: Option<f64>,
    pub sla_violation_fraction: Option<f64>,
    pub avg_reward: Option<f64>,
    pub total_cost_usd: f64,
    pub cost_per_container_usd: Option<f64>,
    pub avg_wait: Option<f64>,
    pub avg_execution: Option<f64>,
    pub avg_response_time: Option<f64>,
    pub fairness_jain: Option<f64>,
    pub total_energy_wh: f64,
    pub completed_tasks: usize,
    pub incomplete_tasks: usize,
    pub completed_containers: usize,
    pub layer_fraction: Option<f64>,
    pub migrations: u64,
    pub image_distribution_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_is_set_once() {
        let mut task = Task::new(7, AppKind::Mnist, 16000, 4.0, 0);
        task.set_decision(SplitDecision::Layer).unwrap();
        assert!(matches!(
            task.set_decision(SplitDecision::Semantic),
            Err(Error::DecisionAlreadySet(7))
        ));
        assert_eq!(task.decision(), Some(SplitDecision::Layer));
    }

    #[test]
    fn table_workers_are_valid() {
        for w in [
            WorkerSpec::b2ms(),
            WorkerSpec::e2asv4(),
            WorkerSpec::b4ms(),
            WorkerSpec::e4asv4(),
            WorkerSpec::l8sv2(),
        ] {
            w.validate().unwrap();
        }
    }

    #[test]
    fn power_curve_must_be_monotone() {
        let mut w = WorkerSpec::b2ms();
        w.power_curve = vec![(0.0, 50.0), (0.5, 40.0), (1.0, 60.0)];
        assert!(w.validate().is_err());
        w.power_curve = vec![(0.0, 50.0), (0.9, 60.0)];
        assert!(w.validate().is_err());
    }

    #[test]
    fn placement_check_flags_overcommit() {
        let p = PlacementMatrix::from_rows(vec![Some(0), Some(0), None, Some(1)], 2);
        assert!(p
            .check(&[100.0, 100.0, 500.0, 50.0], &[200.0, 60.0])
            .is_empty());
        let v = p.check(&[150.0, 100.0, 0.0, 50.0], &[200.0, 60.0]);
        assert_eq!(v.len(), 1);
        assert!(matches!(
            v[0],
            PlacementViolation::RamOvercommit { worker: 0, .. }
        ));
    }

    #[test]
    fn dense_rows_are_one_hot_or_zero() {
        let p = PlacementMatrix::from_rows(vec![Some(2), None, Some(0)], 3);
        let d = p.to_dense();
        for row in d.chunks(3) {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || s == 1.0);
        }
        assert_eq!(d, vec![0., 0., 1., 0., 0., 0., 1., 0., 0.]);
    }

    #[test]
    fn violation_is_strict() {
        let on_time =
            CompletedTask::new(1, AppKind::Mnist, SplitDecision::Layer, 5.0, 0.0, 0.9, 5.0);
        assert!(!on_time.violated);
        let late = CompletedTask::new(1, AppKind::Mnist, SplitDecision::Layer, 5.01, 0.0, 0.9, 5.0);
        assert!(late.violated);
    }
}
