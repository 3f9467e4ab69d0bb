//! Per-worker, per-interval network conditions.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::WorkerSpec;
use crate::error::{Error, Result};
use crate::workload::mix_seed;

/// How the mobility trace is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MobilityModel {
    /// Nominal ping and bandwidth for every interval.
    Static,
    /// Bounded random walk on ping and bandwidth multipliers.
    RandomWalk {
        ping_range: (f64, f64),
        bw_range: (f64, f64),
        step: f64,
    },
    /// CSV with columns `worker_id, interval, ping_ms, net_bw_mbps`.
    Csv { path: String },
}

impl Default for MobilityModel {
    fn default() -> Self {
        MobilityModel::RandomWalk {
            ping_range: (0.5, 2.0),
            bw_range: (0.5, 1.0),
            step: 0.1,
        }
    }
}

/// Absolute ping (ms) and bandwidth (MB/s) per worker per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    ping_ms: Vec<Vec<f64>>,
    net_bw: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    worker_id: usize,
    interval: usize,
    ping_ms: f64,
    net_bw_mbps: f64,
}

impl MobilityTrace {
    pub fn build(
        model: &MobilityModel,
        workers: &[WorkerSpec],
        len: usize,
        seed: u64,
    ) -> Result<Self> {
        match model {
            MobilityModel::Static => Ok(Self::constant(workers, len, 1.0, 1.0)),
            MobilityModel::RandomWalk {
                ping_range,
                bw_range,
                step,
            } => Ok(Self::random_walk(
                workers,
                len,
                *ping_range,
                *bw_range,
                *step,
                seed,
            )),
            MobilityModel::Csv { path } => Self::from_csv(path, workers.len(), len),
        }
    }

    pub fn constant(workers: &[WorkerSpec], len: usize, ping_mult: f64, bw_mult: f64) -> Self {
        Self {
            ping_ms: workers
                .iter()
                .map(|w| vec![w.base_ping * ping_mult; len])
                .collect(),
            net_bw: workers
                .iter()
                .map(|w| vec![w.net_bw * bw_mult; len])
                .collect(),
        }
    }

    pub fn random_walk(
        workers: &[WorkerSpec],
        len: usize,
        ping_range: (f64, f64),
        bw_range: (f64, f64),
        step: f64,
        seed: u64,
    ) -> Self {
        let mut ping_ms = Vec::with_capacity(workers.len());
        let mut net_bw = Vec::with_capacity(workers.len());
        for (i, w) in workers.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xB0B0 + i as u64));
            let mut pm = 1.0f64.clamp(ping_range.0, ping_range.1);
            let mut bm = 1.0f64.clamp(bw_range.0, bw_range.1);
            let mut pings = Vec::with_capacity(len);
            let mut bws = Vec::with_capacity(len);
            for _ in 0..len {
                pings.push(w.base_ping * pm);
                bws.push(w.net_bw * bm);
                if step > 0.0 {
                    pm = (pm + rng.random_range(-step..=step) * 1.5)
                        .clamp(ping_range.0, ping_range.1);
                    bm = (bm + rng.random_range(-step..=step)).clamp(bw_range.0, bw_range.1);
                }
            }
            ping_ms.push(pings);
            net_bw.push(bws);
        }
        Self { ping_ms, net_bw }
    }

    pub fn from_csv(path: impl AsRef<Path>, n_workers: usize, len: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut ping_ms = vec![vec![f64::NAN; len]; n_workers];
        let mut net_bw = vec![vec![f64::NAN; len]; n_workers];
        for row in reader.deserialize::<TraceRow>() {
            let row = row?;
            if row.worker_id >= n_workers || row.interval >= len {
                continue;
            }
            if !(row.ping_ms > 0.0 && row.net_bw_mbps > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "mobility trace values must be positive (worker {}, interval {})",
                    row.worker_id, row.interval
                )));
            }
            ping_ms[row.worker_id][row.interval] = row.ping_ms;
            net_bw[row.worker_id][row.interval] = row.net_bw_mbps;
        }
        for (w, (p, b)) in ping_ms.iter().zip(&net_bw).enumerate() {
            if let Some(t) = p.iter().zip(b).position(|(x, y)| x.is_nan() || y.is_nan()) {
                return Err(Error::InvalidConfig(format!(
                    "mobility trace missing worker {w} interval {t} (needs {len} intervals)"
                )));
            }
        }
        Ok(Self { ping_ms, net_bw })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["worker_id", "interval", "ping_ms", "net_bw_mbps"])?;
        for (wid, (p, b)) in self.ping_ms.iter().zip(&self.net_bw).enumerate() {
            for (t, (pv, bv)) in p.iter().zip(b).enumerate() {
                w.write_record([
                    wid.to_string(),
                    t.to_string(),
                    pv.to_string(),
                    bv.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_workers(&self) -> usize {
        self.ping_ms.len()
    }

    pub fn len(&self) -> usize {
        self.ping_ms.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Intervals past the end of the trace reuse the last entry.
    pub fn ping(&self, worker: usize, t: u32) -> f64 {
        let row = &self.ping_ms[worker];
        row[(t as usize).min(row.len() - 1)]
    }

    pub fn bandwidth(&self, worker: usize, t: u32) -> f64 {
        let row = &self.net_bw[worker];
        row[(t as usize).min(row.len() - 1)]
    }

    /// Scales every worker's bandwidth, used by bandwidth-constrained setups.
    pub fn scale_bandwidth(&mut self, factor: f64) {
        for row in &mut self.net_bw {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
    }
}
