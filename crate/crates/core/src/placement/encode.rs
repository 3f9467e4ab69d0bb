//! Fixed-width feature vector over (state, placement, split decisions).

use std::ops::Range;

use crate::domain::{PlacementMatrix, SplitDecision, SystemState};
use crate::error::{Error, Result};

/// Features per container slot: app one-hot (3), layer flag, stage
/// fraction, compute demand, RAM demand, remaining-work fraction.
pub const SLOT_FEATURES: usize = 8;
/// Utilization features per worker.
pub const WORKER_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoder {
    pub n_workers: usize,
    pub max_containers: usize,
    /// When false the split flag is always zero.
    pub decision_aware: bool,
}

impl Encoder {
    pub fn new(n_workers: usize, max_containers: usize, decision_aware: bool) -> Self {
        Self {
            n_workers,
            max_containers,
            decision_aware,
        }
    }

    pub fn dim(&self) -> usize {
        WORKER_FEATURES * self.n_workers
            + SLOT_FEATURES * self.max_containers
            + self.max_containers * self.n_workers
    }

    fn slot_offset(&self) -> usize {
        WORKER_FEATURES * self.n_workers
    }

    pub fn placement_offset(&self) -> usize {
        self.slot_offset() + SLOT_FEATURES * self.max_containers
    }

    /// Coordinates of the placement block covering the first `rows` rows.
    pub fn placement_range(&self, rows: usize) -> Range<usize> {
        let start = self.placement_offset();
        start..start + rows * self.n_workers
    }

    /// Index of the split flag of container slot `row`.
    pub fn decision_index(&self, row: usize) -> usize {
        self.slot_offset() + row * SLOT_FEATURES + 3
    }

    /// Encodes state and decisions with an all-zero placement block.
    pub fn encode_base(&self, state: &SystemState) -> Result<Vec<f64>> {
        let rows = state.containers.len();
        if rows > self.max_containers {
            return Err(Error::ContainerOverflow {
                count: rows,
                cap: self.max_containers,
            });
        }
        if state.workers.len() != self.n_workers {
            return Err(Error::LengthMismatch {
                what: "state workers",
                got: state.workers.len(),
                expected: self.n_workers,
            });
        }
        let mut x = vec![0.0; self.dim()];
        for (w, ws) in state.workers.iter().enumerate() {
            let base = w * WORKER_FEATURES;
            x[base] = ws.cpu_util;
            x[base + 1] = ws.ram_util;
            x[base + 2] = ws.net_util;
            x[base + 3] = ws.disk_util;
        }
        for (row, c) in state.containers.iter().enumerate() {
            let base = self.slot_offset() + row * SLOT_FEATURES;
            x[base + c.app.index()] = 1.0;
            if self.decision_aware && c.decision == SplitDecision::Layer {
                x[base + 3] = 1.0;
            }
            x[base + 4] = if c.stage_count > 0 {
                c.stage as f64 / c.stage_count as f64
            } else {
                0.0
            };
            x[base + 5] = c.work_norm;
            x[base + 6] = c.ram_norm;
            x[base + 7] = c.remaining_fraction;
        }
        Ok(x)
    }

    /// Writes a row-major `rows × n_workers` relaxed placement into `x`.
    pub fn write_placement(&self, x: &mut [f64], relaxed: &[f64]) {
        let range = self.placement_range(relaxed.len() / self.n_workers.max(1));
        x[range].copy_from_slice(relaxed);
    }

    pub fn encode(&self, state: &SystemState, placement: &PlacementMatrix) -> Result<Vec<f64>> {
        let mut x = self.encode_base(state)?;
        if placement.n_rows() != state.containers.len() {
            return Err(Error::LengthMismatch {
                what: "placement rows",
                got: placement.n_rows(),
                expected: state.containers.len(),
            });
        }
        let off = self.placement_offset();
        for (row, w) in placement.rows().iter().enumerate() {
            if let Some(w) = *w {
                if w < self.n_workers {
                    x[off + row * self.n_workers + w] = 1.0;
                }
            }
        }
        Ok(x)
    }
}
