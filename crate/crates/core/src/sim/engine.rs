use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mobility::MobilityTrace;
use super::power::energy_of_interval;
use super::{apply_constraint_mode, EnvConfig};
use crate::domain::{
    CompletedTask, Container, ContainerDemand, ContainerId, ContainerStatus, IntervalMetrics,
    PlacementMatrix, SplitDecision, SystemState, Task, TaskId, WorkerSpec, WorkerState,
};
use crate::error::{Error, Result};
use crate::workload::{mix_seed, realize_containers, sample_accuracy, ProfileSet};

const WORK_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
struct ContainerRecord {
    c: Container,
    /// Worker placed on for the current interval.
    host: Option<usize>,
    /// Worker holding the container's memory image.
    resident_on: Option<usize>,
    /// Where the input must be fetched from. `None` is the broker.
    input_source: Option<usize>,
    input_loaded: bool,
    /// Seconds of transfer still owed before compute can start.
    delay_remaining: f64,
}

#[derive(Debug, Clone)]
struct TaskRecord {
    task: Task,
    decision: SplitDecision,
    open_containers: usize,
    /// Latest absolute finish time (seconds) over finished final fragments.
    finish_abs: f64,
}

/// Everything observed while executing one interval.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub metrics: IntervalMetrics,
    /// Rows whose placement was dropped for exceeding worker RAM.
    pub rejected_rows: Vec<usize>,
    /// Rows naming a container that was not eligible to run.
    pub precedence_violations: usize,
    /// Workers whose resident RAM exceeded capacity after enforcement.
    pub ram_overcommits: usize,
    /// Busy fraction of each worker over the interval.
    pub worker_util: Vec<f64>,
}

/// A single simulated edge cluster advancing one interval per `step`.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    specs: Vec<WorkerSpec>,
    profiles: ProfileSet,
    trace: MobilityTrace,
    seed: u64,
    t: u32,
    tasks: BTreeMap<TaskId, TaskRecord>,
    containers: BTreeMap<ContainerId, ContainerRecord>,
    last_cpu_util: Vec<f64>,
    last_net_util: Vec<f64>,
    last_disk_util: Vec<f64>,
    completed_per_worker: Vec<u64>,
    migrations: u64,
    image_distribution_seconds: f64,
}

#[derive(Clone, Copy)]
enum Node {
    Broker,
    Worker(usize),
}

impl Environment {
    pub fn new(cfg: EnvConfig, profiles: ProfileSet, seed: u64) -> Result<Self> {
        cfg.validate()?;
        for p in profiles.values() {
            p.validate()?;
        }
        let specs = apply_constraint_mode(&cfg.workers, cfg.constraint_mode);
        let trace = MobilityTrace::build(&cfg.mobility, &specs, cfg.horizon as usize, seed)?;
        if trace.n_workers() != specs.len() {
            return Err(Error::LengthMismatch {
                what: "mobility trace workers",
                got: trace.n_workers(),
                expected: specs.len(),
            });
        }
        let n = specs.len();
        let mut env = Self {
            cfg,
            specs,
            profiles,
            trace,
            seed,
            t: 0,
            tasks: BTreeMap::new(),
            containers: BTreeMap::new(),
            last_cpu_util: vec![0.0; n],
            last_net_util: vec![0.0; n],
            last_disk_util: vec![0.0; n],
            completed_per_worker: vec![0; n],
            migrations: 0,
            image_distribution_seconds: 0.0,
        };
        let images: f64 = env.profiles.values().map(|p| p.image_size_mb).sum();
        env.image_distribution_seconds = (0..n)
            .map(|w| env.transfer_seconds(Node::Broker, Node::Worker(w), images))
            .fold(0.0, f64::max);
        Ok(env)
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Worker specs after the constraint mode is applied.
    pub fn specs(&self) -> &[WorkerSpec] {
        &self.specs
    }

    pub fn n_workers(&self) -> usize {
        self.specs.len()
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.horizon
    }

    pub fn active_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn completed_per_worker(&self) -> &[u64] {
        &self.completed_per_worker
    }

    pub fn migrations(&self) -> u64 {
        self.migrations
    }

    pub fn image_distribution_seconds(&self) -> f64 {
        self.image_distribution_seconds
    }

    pub fn task_decision(&self, id: TaskId) -> Option<SplitDecision> {
        self.tasks.get(&id).map(|r| r.decision)
    }

    /// Creates the containers of newly arrived tasks. Each task must carry
    /// its split decision.
    pub fn admit(&mut self, tasks: Vec<Task>) -> Result<()> {
        for task in tasks {
            let decision = task.decision().ok_or(Error::MissingDecision(task.id))?;
            let containers = realize_containers(&task, decision, &self.profiles)?;
            for c in containers {
                self.containers.insert(
                    c.id,
                    ContainerRecord {
                        c,
                        host: None,
                        resident_on: None,
                        input_source: None,
                        input_loaded: false,
                        delay_remaining: 0.0,
                    },
                );
            }
            let open = self
                .containers
                .values()
                .filter(|r| r.c.task_id == task.id)
                .count();
            self.tasks.insert(
                task.id,
                TaskRecord {
                    task,
                    decision,
                    open_containers: open,
                    finish_abs: 0.0,
                },
            );
        }
        Ok(())
    }

    /// Containers eligible for placement this interval: those resident on
    /// a worker first, then ready ones, each group ordered by id.
    pub fn row_ids(&self) -> Vec<ContainerId> {
        let mut resident = Vec::new();
        let mut ready = Vec::new();
        for (id, r) in &self.containers {
            match r.c.status {
                ContainerStatus::Running if r.resident_on.is_some() => resident.push(*id),
                ContainerStatus::Running | ContainerStatus::Ready => ready.push(*id),
                _ => {}
            }
        }
        resident.extend(ready);
        resident
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.containers.get(&id).map(|r| &r.c)
    }

    /// The placement carried over from the previous interval, aligned with
    /// the current rows.
    pub fn previous_placement(&self) -> PlacementMatrix {
        let rows = self
            .row_ids()
            .iter()
            .map(|id| self.containers[id].resident_on)
            .collect();
        PlacementMatrix::from_rows(rows, self.n_workers())
    }

    fn worker_ping(&self, w: usize) -> f64 {
        self.trace.ping(w, self.t)
    }

    fn worker_bw(&self, w: usize) -> f64 {
        self.trace.bandwidth(w, self.t)
    }

    fn node_ping_bw(&self, n: Node) -> (f64, f64) {
        match n {
            Node::Broker => (self.cfg.broker.base_ping, self.cfg.broker.net_bw),
            Node::Worker(w) => (self.worker_ping(w), self.worker_bw(w)),
        }
    }

    /// Seconds to move `mb` megabytes between two nodes: latency plus size
    /// over the bottleneck link.
    fn transfer_seconds(&self, from: Node, to: Node, mb: f64) -> f64 {
        if let (Node::Worker(a), Node::Worker(b)) = (from, to) {
            if a == b {
                return 0.0;
            }
        }
        let (pa, ba) = self.node_ping_bw(from);
        let (pb, bb) = self.node_ping_bw(to);
        let mut ping_ms = pa + pb;
        let mut bw = ba.min(bb) * self.cfg.link_efficiency;
        if matches!(from, Node::Broker) || matches!(to, Node::Broker) {
            if let Some(extra) = self.cfg.cloud_extra_ping_ms {
                ping_ms += extra;
                bw = bw.min(self.cfg.cloud_wan_bw);
            }
        }
        ping_ms / 1000.0 + mb / bw
    }

    fn migration_seconds(&self, from: usize, to: usize, ram_mb: f64) -> f64 {
        let disk = self.specs[to].disk_bw.min(self.specs[from].disk_bw);
        let link = self.worker_bw(from).min(self.worker_bw(to)) * self.cfg.link_efficiency;
        (self.worker_ping(from) + self.worker_ping(to)) / 1000.0 + ram_mb / disk.min(link)
    }

    /// Resource-monitor view at the start of the current interval.
    pub fn snapshot_state(&self) -> SystemState {
        let n = self.n_workers();
        let interval = self.cfg.interval_seconds;
        let max_mips = self.specs.iter().map(|s| s.mips).fold(0.0, f64::max);
        let max_ram = self.specs.iter().map(|s| s.ram).fold(0.0, f64::max);
        let max_bw = self.specs.iter().map(|s| s.net_bw).fold(0.0, f64::max);
        let max_disk = self.specs.iter().map(|s| s.disk_bw).fold(0.0, f64::max);

        let mut ram_used = vec![0.0; n];
        for r in self.containers.values() {
            if let (Some(w), ContainerStatus::Running) = (r.resident_on, r.c.status) {
                ram_used[w] += r.c.ram_demand;
            }
        }
        let workers = (0..n)
            .map(|w| WorkerState {
                cpu_util: self.last_cpu_util[w].clamp(0.0, 1.0),
                ram_util: (ram_used[w] / self.specs[w].ram).clamp(0.0, 1.0),
                net_util: self.last_net_util[w].clamp(0.0, 1.0),
                disk_util: self.last_disk_util[w].clamp(0.0, 1.0),
                current_ping_ms: self.worker_ping(w),
                current_net_bw: self.worker_bw(w),
            })
            .collect();

        let containers = self
            .row_ids()
            .iter()
            .map(|id| {
                let r = &self.containers[id];
                let c = &r.c;
                let remaining = c.remaining_work();
                let (mips, ram, bw, disk) = match r.resident_on {
                    Some(w) => (
                        self.specs[w].mips,
                        self.specs[w].ram,
                        self.worker_bw(w),
                        self.specs[w].disk_bw,
                    ),
                    None => (max_mips, max_ram, max_bw, max_disk),
                };
                let pending_input = if r.input_loaded { 0.0 } else { c.input_size };
                ContainerDemand {
                    container_id: c.id,
                    task_id: c.task_id,
                    app: c.app,
                    decision: c.decision,
                    stage: c.stage,
                    stage_count: c.stage_count,
                    host: r.resident_on,
                    cpu: (remaining / (mips * interval)).clamp(0.0, 1.0),
                    ram: (c.ram_demand / ram).clamp(0.0, 1.0),
                    net: (pending_input / (bw * self.cfg.link_efficiency * interval))
                        .clamp(0.0, 1.0),
                    disk: (c.ram_demand / (disk * interval)).clamp(0.0, 1.0),
                    work_norm: (remaining / (max_mips * interval)).clamp(0.0, 1.0),
                    ram_norm: (c.ram_demand / max_ram).clamp(0.0, 1.0),
                    remaining_fraction: if c.work_total > 0.0 {
                        remaining / c.work_total
                    } else {
                        0.0
                    },
                    ram_mb: c.ram_demand,
                }
            })
            .collect();

        SystemState {
            workers,
            containers,
            worker_ram: self.specs.iter().map(|s| s.ram).collect(),
        }
    }

    /// Executes one interval under `placement`, whose rows follow `row_ids`.
    pub fn step(&mut self, placement: &PlacementMatrix) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::PastHorizon(self.t));
        }
        let rows = self.row_ids();
        if placement.n_rows() != rows.len() {
            return Err(Error::LengthMismatch {
                what: "placement rows",
                got: placement.n_rows(),
                expected: rows.len(),
            });
        }
        let n = self.n_workers();
        if placement.n_workers() != n {
            return Err(Error::LengthMismatch {
                what: "placement workers",
                got: placement.n_workers(),
                expected: n,
            });
        }
        let interval = self.cfg.interval_seconds;
        let t0 = f64::from(self.t) * interval;
        let mut outcome = StepOutcome::default();

        // Admission control: accept rows in order while RAM fits.
        let mut ram_used = vec![0.0; n];
        let mut assigned: Vec<Option<usize>> = vec![None; rows.len()];
        for (row, id) in rows.iter().enumerate() {
            let Some(w) = placement.get(row) else {
                continue;
            };
            let rec = &self.containers[id];
            if w >= n {
                outcome.rejected_rows.push(row);
                continue;
            }
            if !matches!(
                rec.c.status,
                ContainerStatus::Ready | ContainerStatus::Running
            ) {
                outcome.precedence_violations += 1;
                continue;
            }
            if ram_used[w] + rec.c.ram_demand > self.specs[w].ram + 1e-9 {
                outcome.rejected_rows.push(row);
                continue;
            }
            ram_used[w] += rec.c.ram_demand;
            assigned[row] = Some(w);
        }
        outcome.ram_overcommits = (0..n)
            .filter(|&w| ram_used[w] > self.specs[w].ram + 1e-9)
            .count();

        // Transfer delays for newly placed or moved containers.
        let mut net_seconds = vec![0.0; n];
        let mut disk_seconds = vec![0.0; n];
        let mut migrations = 0u32;
        let mut waiting_tasks: Vec<TaskId> = Vec::new();
        for (row, id) in rows.iter().enumerate() {
            let target = assigned[row];
            let (resident, loaded, source, ram, input, task_id) = {
                let r = &self.containers[id];
                (
                    r.resident_on,
                    r.input_loaded,
                    r.input_source,
                    r.c.ram_demand,
                    r.c.input_size,
                    r.c.task_id,
                )
            };
            let Some(w) = target else {
                waiting_tasks.push(task_id);
                let r = self.containers.get_mut(id).expect("row id");
                r.host = None;
                continue;
            };
            let mut delay = self.containers[id].delay_remaining;
            match resident {
                Some(prev) if prev != w => {
                    migrations += 1;
                    if loaded {
                        delay = self.migration_seconds(prev, w, ram);
                        disk_seconds[w] += delay;
                    } else {
                        let from = source.map_or(Node::Broker, Node::Worker);
                        delay = self.transfer_seconds(from, Node::Worker(w), input);
                        net_seconds[w] += delay;
                    }
                }
                Some(_) => {}
                None => {
                    let from = source.map_or(Node::Broker, Node::Worker);
                    delay = self.transfer_seconds(from, Node::Worker(w), input);
                    net_seconds[w] += delay;
                }
            }
            let r = self.containers.get_mut(id).expect("row id");
            r.host = Some(w);
            r.resident_on = Some(w);
            r.delay_remaining = delay;
            r.c.status = ContainerStatus::Running;
        }
        // Containers that lost their placement release their memory.
        for (row, id) in rows.iter().enumerate() {
            if assigned[row].is_none() {
                let r = self.containers.get_mut(id).expect("row id");
                if r.c.status == ContainerStatus::Running {
                    r.c.status = ContainerStatus::Ready;
                }
            }
        }
        waiting_tasks.sort_unstable();
        waiting_tasks.dedup();
        for id in &waiting_tasks {
            if let Some(t) = self.tasks.get_mut(id) {
                t.task.wait_time += 1.0;
            }
        }
        self.migrations += u64::from(migrations);

        // Per-worker processor sharing.
        let mut per_worker: Vec<Vec<(ContainerId, f64, f64)>> = vec![Vec::new(); n];
        for (row, id) in rows.iter().enumerate() {
            if let Some(w) = assigned[row] {
                let r = &self.containers[id];
                per_worker[w].push((*id, r.delay_remaining, r.c.remaining_work()));
            }
        }
        let mut busy = vec![0.0; n];
        let mut finished: Vec<(ContainerId, usize, f64)> = Vec::new();
        for (w, jobs) in per_worker.iter().enumerate() {
            if jobs.is_empty() {
                continue;
            }
            let starts: Vec<(f64, f64)> = jobs.iter().map(|&(_, s, work)| (s, work)).collect();
            let shared = processor_share(self.specs[w].mips, &starts, interval);
            busy[w] = shared.busy_seconds;
            for (k, &(id, start, _)) in jobs.iter().enumerate() {
                let r = self.containers.get_mut(&id).expect("job id");
                r.delay_remaining = (start - interval).max(0.0);
                if start < interval {
                    r.input_loaded = true;
                }
                r.c.work_done = (r.c.work_done + shared.work_done[k]).min(r.c.work_total);
                if let Some(f) = shared.finish[k] {
                    r.c.work_done = r.c.work_total;
                    finished.push((id, w, f));
                }
            }
        }

        // Completion, precedence release and result upload.
        let mut completed = Vec::new();
        for (id, w, f) in finished {
            let rec = self.containers.remove(&id).expect("finished id");
            self.completed_per_worker[w] += 1;
            let c = rec.c;
            if c.is_final() {
                let upload = self.transfer_seconds(Node::Worker(w), Node::Broker, c.output_size);
                let done_abs = t0 + f + upload;
                let task = self.tasks.get_mut(&c.task_id).expect("task of container");
                task.finish_abs = task.finish_abs.max(done_abs);
            } else {
                let next_id = c.id + 1;
                if let Some(next) = self.containers.get_mut(&next_id) {
                    next.c.status = ContainerStatus::Ready;
                    next.input_source = Some(w);
                }
            }
            let task = self.tasks.get_mut(&c.task_id).expect("task of container");
            task.open_containers -= 1;
            if task.open_containers == 0 {
                let rec = self.tasks.remove(&c.task_id).expect("task");
                completed.push(self.finish_task(rec));
            }
        }
        completed.sort_by_key(|c| c.task_id);

        // Energy, cost and interval accounting.
        let mut energy = 0.0;
        let mut energy_max = 0.0;
        let mut cost = 0.0;
        let mut worker_util = Vec::with_capacity(n);
        for (w, spec) in self.specs.iter().enumerate() {
            let u = (busy[w] / interval).clamp(0.0, 1.0);
            worker_util.push(u);
            energy += energy_of_interval(spec, u, interval);
            energy_max += spec.max_power() * interval / 3600.0;
            cost += spec.cost_rate * interval / 3600.0;
            self.last_cpu_util[w] = u;
            self.last_net_util[w] = net_seconds[w] / interval;
            self.last_disk_util[w] = disk_seconds[w] / interval;
        }
        let art = if completed.is_empty() {
            0.0
        } else {
            completed.iter().map(|c| c.response_time).sum::<f64>() / completed.len() as f64
        };
        outcome.metrics = IntervalMetrics {
            t: self.t,
            aec: if energy_max > 0.0 {
                energy / energy_max
            } else {
                0.0
            },
            art,
            energy_wh: energy,
            completed,
            cost_usd: cost,
            objective: 0.0,
            migrations,
            wait_queued: waiting_tasks.len() as u32,
        };
        outcome.worker_util = worker_util;
        for r in self.containers.values_mut() {
            r.host = None;
        }
        self.t += 1;
        Ok(outcome)
    }

    fn finish_task(&self, rec: TaskRecord) -> CompletedTask {
        let interval = self.cfg.interval_seconds;
        let arrival = f64::from(rec.task.arrival);
        let r = (rec.finish_abs / interval - arrival).max(rec.task.wait_time);
        let profile = &self.profiles[&rec.task.app];
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed ^ 0xACC0_0ACC, rec.task.id));
        let accuracy = sample_accuracy(rec.decision, profile, &mut rng);
        CompletedTask::new(
            rec.task.id,
            rec.task.app,
            rec.decision,
            r,
            rec.task.wait_time,
            accuracy,
            rec.task.sla,
        )
    }
}

/// Result of sharing one worker among several jobs for one interval.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Shared {
    /// Finish time within the interval, if reached.
    pub finish: Vec<Option<f64>>,
    /// Work completed by each job.
    pub work_done: Vec<f64>,
    pub busy_seconds: f64,
}

/// Egalitarian processor sharing: every started, unfinished job receives
/// `mips / active` until the horizon. `jobs` holds `(start, work)` pairs.
pub(crate) fn processor_share(mips: f64, jobs: &[(f64, f64)], horizon: f64) -> Shared {
    let n = jobs.len();
    let mut remaining: Vec<f64> = jobs.iter().map(|&(_, w)| w).collect();
    let mut finish = vec![None; n];
    let mut started = vec![false; n];
    let mut busy = 0.0;
    let mut now = 0.0f64;
    loop {
        for k in 0..n {
            if !started[k] && jobs[k].0 <= now && finish[k].is_none() {
                started[k] = true;
                if remaining[k] <= WORK_EPS {
                    finish[k] = Some(now.max(jobs[k].0));
                }
            }
        }
        let active: Vec<usize> = (0..n)
            .filter(|&k| started[k] && finish[k].is_none())
            .collect();
        let next_start = (0..n)
            .filter(|&k| !started[k])
            .map(|k| jobs[k].0)
            .fold(f64::INFINITY, f64::min);
        if active.is_empty() {
            if next_start >= horizon {
                break;
            }
            now = next_start;
            continue;
        }
        let rate = mips / active.len() as f64;
        let min_rem = active
            .iter()
            .map(|&k| remaining[k])
            .fold(f64::INFINITY, f64::min);
        let t_fin = now + min_rem / rate;
        let t_next = t_fin.min(next_start).min(horizon);
        let dt = t_next - now;
        busy += dt;
        for &k in &active {
            if t_next == t_fin && remaining[k] - min_rem <= WORK_EPS * remaining[k].max(1.0) {
                remaining[k] = 0.0;
                finish[k] = Some(t_fin);
            } else {
                remaining[k] = (remaining[k] - rate * dt).max(0.0);
            }
        }
        now = t_next;
        if now >= horizon {
            break;
        }
    }
    let work_done = jobs
        .iter()
        .zip(&remaining)
        .map(|(&(_, w), r)| w - r)
        .collect();
    Shared {
        finish,
        work_done,
        busy_seconds: busy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AppKind;
    use crate::sim::{ConstraintMode, MobilityModel};
    use crate::workload::{default_profiles, task_id};

    fn quiet_cfg(workers: Vec<WorkerSpec>, horizon: u32) -> EnvConfig {
        let mut cfg = EnvConfig::with_workers(workers);
        cfg.mobility = MobilityModel::Static;
        cfg.horizon = horizon;
        cfg
    }

    fn place_all(
        env: &Environment,
        f: impl Fn(usize, &Container) -> Option<usize>,
    ) -> PlacementMatrix {
        let rows = env
            .row_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| f(i, env.container(*id).unwrap()))
            .collect();
        PlacementMatrix::from_rows(rows, env.n_workers())
    }

    fn run_until_done(
        env: &mut Environment,
        f: impl Fn(usize, &Container) -> Option<usize>,
    ) -> Vec<CompletedTask> {
        let mut out = Vec::new();
        while !env.is_done() {
            let p = place_all(env, &f);
            let o = env.step(&p).unwrap();
            assert_eq!(o.ram_overcommits, 0);
            assert_eq!(o.precedence_violations, 0);
            out.extend(o.metrics.completed);
        }
        out
    }

    #[test]
    fn two_jobs_sharing_take_twice_as_long() {
        let solo = processor_share(1000.0, &[(5.0, 50_000.0)], 300.0);
        let pair = processor_share(1000.0, &[(5.0, 50_000.0), (5.0, 50_000.0)], 300.0);
        let solo_exec = solo.finish[0].unwrap() - 5.0;
        for f in &pair.finish {
            assert!((f.unwrap() - 5.0 - 2.0 * solo_exec).abs() < 1e-9);
        }
        assert!((pair.busy_seconds - 100.0).abs() < 1e-9);
    }

    #[test]
    fn staggered_sharing_matches_hand_computation() {
        // Job A alone for 10 s at 100/s, then shared with B at 50/s each.
        let s = processor_share(100.0, &[(0.0, 2000.0), (10.0, 500.0)], 300.0);
        // B needs 10 s at 50/s; A has 1000 left at t=10, 500 done by t=20, then 500 at 100/s.
        assert!((s.finish[1].unwrap() - 20.0).abs() < 1e-9);
        assert!((s.finish[0].unwrap() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn unfinished_work_is_partial() {
        let s = processor_share(100.0, &[(0.0, 1e6)], 300.0);
        assert!(s.finish[0].is_none());
        assert!((s.work_done[0] - 30_000.0).abs() < 1e-6);
        assert!((s.busy_seconds - 300.0).abs() < 1e-9);
        let late = processor_share(100.0, &[(400.0, 10.0)], 300.0);
        assert_eq!(late.work_done[0], 0.0);
        assert_eq!(late.busy_seconds, 0.0);
    }

    #[test]
    fn idle_snapshot_is_zero() {
        let env = Environment::new(
            quiet_cfg(EnvConfig::reference().workers, 10),
            default_profiles(),
            1,
        )
        .unwrap();
        let s = env.snapshot_state();
        assert!(s.containers.is_empty());
        for w in &s.workers {
            assert_eq!(
                (w.cpu_util, w.ram_util, w.net_util, w.disk_util),
                (0.0, 0.0, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn ping_multiplier_in_snapshot() {
        let mut cfg = quiet_cfg(vec![WorkerSpec::b2ms()], 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        MobilityTrace::constant(&cfg.workers, 3, 2.0, 1.0)
            .write_csv(&path)
            .unwrap();
        cfg.mobility = MobilityModel::Csv {
            path: path.to_string_lossy().into_owned(),
        };
        let env = Environment::new(cfg, default_profiles(), 0).unwrap();
        assert_eq!(env.snapshot_state().workers[0].current_ping_ms, 4.0);
    }

    #[test]
    fn half_ram_container_reports_half_utilization() {
        let mut profiles = default_profiles();
        let p = profiles.get_mut(&AppKind::Mnist).unwrap();
        for f in &mut p.layer {
            f.ram = WorkerSpec::b2ms().ram / 2.0;
            f.work = 1e6;
        }
        let mut env =
            Environment::new(quiet_cfg(vec![WorkerSpec::b2ms()], 5), profiles, 0).unwrap();
        let task = Task::new(task_id(0, 0), AppKind::Mnist, 16_000, 5.0, 0)
            .with_decision(SplitDecision::Layer);
        env.admit(vec![task]).unwrap();
        env.step(&PlacementMatrix::from_rows(vec![Some(0)], 1))
            .unwrap();
        let s = env.snapshot_state();
        assert!((s.workers[0].ram_util - 0.5).abs() < 1e-12);
    }

    #[test]
    fn semantic_branches_finish_together_on_identical_workers() {
        let workers = vec![WorkerSpec::b2ms(); 4];
        let mut env = Environment::new(quiet_cfg(workers, 5), default_profiles(), 0).unwrap();
        let task = Task::new(task_id(0, 0), AppKind::FashionMnist, 20_000, 5.0, 0)
            .with_decision(SplitDecision::Semantic);
        env.admit(vec![task]).unwrap();
        let p = place_all(&env, |i, _| Some(i));
        let o = env.step(&p).unwrap();
        assert_eq!(o.metrics.completed.len(), 1);
        let u = &o.worker_util;
        assert!(u.iter().all(|x| (x - u[0]).abs() < 1e-12));
        let profile = &env.profiles()[&AppKind::FashionMnist];
        let work = profile.semantic[0].work * 20.0;
        let compute = work / (WorkerSpec::b2ms().mips * 300.0);
        let r = o.metrics.completed[0].response_time;
        assert!(r > compute && r < compute + 0.1, "r {r} compute {compute}");
    }

    #[test]
    fn layer_chain_is_sequential() {
        let mut env = Environment::new(
            quiet_cfg(vec![WorkerSpec::b4ms()], 10),
            default_profiles(),
            0,
        )
        .unwrap();
        let task = Task::new(task_id(0, 0), AppKind::Cifar100, 40_000, 5.0, 0)
            .with_decision(SplitDecision::Layer);
        env.admit(vec![task]).unwrap();
        let mut stages_seen = Vec::new();
        let mut done = Vec::new();
        while !env.is_done() && done.is_empty() {
            let rows = env.row_ids();
            assert!(rows.len() <= 1, "only one stage may be eligible at a time");
            if let Some(id) = rows.first() {
                stages_seen.push(env.container(*id).unwrap().stage);
            }
            let p = place_all(&env, |_, _| Some(0));
            done = env.step(&p).unwrap().metrics.completed;
        }
        assert_eq!(stages_seen, vec![0, 1, 2, 3]);
        let profile = &env.profiles()[&AppKind::Cifar100];
        let stage_time = profile.layer[0].work * 40.0 / (WorkerSpec::b4ms().mips * 300.0);
        let r = done[0].response_time;
        assert!(r > 3.0 + stage_time, "r {r}");
    }

    #[test]
    fn ram_rejection_wait_queues_rows() {
        let mut env = Environment::new(
            quiet_cfg(vec![WorkerSpec::e2asv4()], 5),
            default_profiles(),
            0,
        )
        .unwrap();
        let tasks = (0..4)
            .map(|k| {
                Task::new(task_id(0, k), AppKind::Cifar100, 16_000, 5.0, 0)
                    .with_decision(SplitDecision::Layer)
            })
            .collect();
        env.admit(tasks).unwrap();
        let p = place_all(&env, |_, _| Some(0));
        let o = env.step(&p).unwrap();
        // Three 1200 MB fragments fit in 4172 MB, the fourth does not.
        assert_eq!(o.rejected_rows, vec![3]);
        assert_eq!(o.ram_overcommits, 0);
        assert_eq!(o.metrics.wait_queued, 1);
    }

    #[test]
    fn placement_shape_is_checked() {
        let mut env = Environment::new(
            quiet_cfg(vec![WorkerSpec::b2ms()], 5),
            default_profiles(),
            0,
        )
        .unwrap();
        let task = Task::new(1, AppKind::Mnist, 16_000, 5.0, 0).with_decision(SplitDecision::Layer);
        env.admit(vec![task]).unwrap();
        assert!(env.step(&PlacementMatrix::empty(2, 1)).is_err());
        assert!(env
            .admit(vec![Task::new(2, AppKind::Mnist, 16_000, 5.0, 0)])
            .is_err());
    }

    #[test]
    fn migration_is_counted_and_delays() {
        let workers = vec![WorkerSpec::b2ms(), WorkerSpec::b2ms()];
        let mut profiles = default_profiles();
        for f in &mut profiles.get_mut(&AppKind::Mnist).unwrap().layer {
            f.work = 3e6;
        }
        let run = |migrate: bool| {
            let mut env =
                Environment::new(quiet_cfg(workers.clone(), 10), profiles.clone(), 0).unwrap();
            let task = Task::new(task_id(0, 0), AppKind::Mnist, 1000, 9.0, 0)
                .with_decision(SplitDecision::Layer);
            env.admit(vec![task]).unwrap();
            env.step(&place_all(&env, |_, _| Some(0))).unwrap();
            let target = if migrate { 1 } else { 0 };
            env.step(&place_all(&env, |_, _| Some(target))).unwrap();
            (
                env.migrations(),
                env.container(env.row_ids()[0]).unwrap().work_done,
            )
        };
        let (m0, w0) = run(false);
        let (m1, w1) = run(true);
        assert_eq!((m0, m1), (0, 1));
        assert!(w1 < w0);
    }

    fn random_stream(seed: u64, cfg: EnvConfig) -> Vec<CompletedTask> {
        use crate::workload::{generate_arrivals, ArrivalConfig};
        let arrivals = ArrivalConfig {
            seed,
            lambda: 2.0,
            ..Default::default()
        };
        let mut env = Environment::new(cfg, default_profiles(), seed).unwrap();
        let mut out = Vec::new();
        while !env.is_done() {
            let tasks = generate_arrivals(&arrivals, env.t())
                .into_iter()
                .map(|t| {
                    let d = if t.id % 2 == 0 {
                        SplitDecision::Layer
                    } else {
                        SplitDecision::Semantic
                    };
                    t.with_decision(d)
                })
                .collect();
            env.admit(tasks).unwrap();
            let n = env.n_workers();
            let p = place_all(&env, |_, c| Some((c.id as usize / 7) % n));
            let o = env.step(&p).unwrap();
            assert_eq!(o.ram_overcommits, 0);
            out.extend(o.metrics.completed);
        }
        out
    }

    #[test]
    fn identical_inputs_give_identical_runs() {
        let cfg = EnvConfig {
            horizon: 30,
            ..EnvConfig::reference()
        };
        assert_eq!(random_stream(3, cfg.clone()), random_stream(3, cfg));
    }

    #[test]
    fn work_is_conserved() {
        let cfg = quiet_cfg(EnvConfig::reference().workers, 20);
        let capacity: f64 = cfg.workers.iter().map(|w| w.mips * 300.0).sum();
        let arrivals = crate::workload::ArrivalConfig {
            seed: 5,
            lambda: 6.0,
            ..Default::default()
        };
        let mut env = Environment::new(cfg, default_profiles(), 5).unwrap();
        let mut done_work = 0.0;
        let mut prev_remaining = 0.0;
        for t in 0..20 {
            let tasks: Vec<Task> = crate::workload::generate_arrivals(&arrivals, t)
                .into_iter()
                .map(|t| t.with_decision(SplitDecision::Semantic))
                .collect();
            let added: f64 = tasks
                .iter()
                .flat_map(|t| {
                    realize_containers(t, SplitDecision::Semantic, env.profiles()).unwrap()
                })
                .map(|c| c.work_total)
                .sum();
            env.admit(tasks).unwrap();
            let before = prev_remaining + added;
            let n = env.n_workers();
            env.step(&place_all(&env, |i, _| Some(i % n))).unwrap();
            let after: f64 = env.containers.values().map(|r| r.c.remaining_work()).sum();
            done_work += before - after;
            prev_remaining = after;
            assert!(done_work <= capacity * f64::from(t + 1) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn half_cores_never_speeds_up_isolated_tasks() {
        // One task every fourth interval on a fleet large enough that no two
        // tasks share a worker.
        let workers = vec![WorkerSpec::b4ms(); 8];
        let run = |mode: ConstraintMode| {
            let mut cfg = quiet_cfg(workers.clone(), 40);
            cfg.constraint_mode = mode;
            let mut env = Environment::new(cfg, default_profiles(), 0).unwrap();
            let mut out = BTreeMap::new();
            while !env.is_done() {
                let t = env.t();
                if t % 4 == 0 && t < 32 {
                    let k = t / 4;
                    let app = AppKind::ALL[(k % 3) as usize];
                    let d = SplitDecision::ALL[(k % 2) as usize];
                    env.admit(vec![Task::new(
                        task_id(t, 0),
                        app,
                        30_000 + 4000 * k,
                        10.0,
                        t,
                    )
                    .with_decision(d)])
                        .unwrap();
                }
                let p = place_all(&env, |_, c| {
                    Some(((c.task_id >> 20) as usize % 2) * 4 + (c.id % 4) as usize)
                });
                for c in env.step(&p).unwrap().metrics.completed {
                    out.insert(c.task_id, c.response_time);
                }
            }
            out
        };
        let full = run(ConstraintMode::None);
        let half = run(ConstraintMode::HalfCores);
        assert_eq!(full.len(), 8);
        for (id, r) in &full {
            let h = half.get(id).copied().unwrap_or(f64::INFINITY);
            assert!(h >= r - 1e-9, "task {id}: {h} < {r}");
        }
    }

    #[test]
    fn response_covers_wait_time() {
        let mut env = Environment::new(
            quiet_cfg(vec![WorkerSpec::b2ms()], 12),
            default_profiles(),
            0,
        )
        .unwrap();
        let task = Task::new(task_id(0, 0), AppKind::Mnist, 16_000, 5.0, 0)
            .with_decision(SplitDecision::Semantic);
        env.admit(vec![task]).unwrap();
        // Hold everything back for two intervals.
        env.step(&PlacementMatrix::empty(4, 1)).unwrap();
        env.step(&PlacementMatrix::empty(4, 1)).unwrap();
        let done = run_until_done(&mut env, |_, _| Some(0));
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].wait_time, 2.0);
        assert!(done[0].response_time >= done[0].wait_time);
    }

    #[test]
    fn image_distribution_is_positive() {
        let env = Environment::new(EnvConfig::reference(), default_profiles(), 0).unwrap();
        assert!(env.image_distribution_seconds() > 0.0);
    }
}
