//! Experience dataset for the surrogate.

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};

/// One encoded interval, stored sparsely, with the objective components it
/// produced so the target can be rebuilt for any energy/latency weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
    pub o_mab: f64,
    pub aec: f64,
    pub art_norm: f64,
}

impl Sample {
    pub fn from_dense(x: &[f64], o_mab: f64, aec: f64, art_norm: f64) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                idx.push(i as u32);
                val.push(v);
            }
        }
        Self {
            idx,
            val,
            o_mab,
            aec,
            art_norm,
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            x[i as usize] = v;
        }
        x
    }

    /// Placement objective: bandit reward minus weighted energy and latency.
    pub fn objective(&self, alpha: f64, beta: f64) -> f64 {
        super::reward_placement(self.o_mab, self.aec, self.art_norm, alpha, beta)
    }
}

/// Bounded FIFO of samples; the oldest is evicted when full.
#[derive(Debug, Clone, Default)]
pub struct TrainingBuffer {
    samples: VecDeque<Sample>,
    capacity: usize,
}

impl TrainingBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity.min(4096)),
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, sample: Sample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = Sample>) {
        for s in samples {
            self.push(s);
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    /// Writes `o_mab, aec, art_norm, x0..x{dim-1}` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>, dim: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["o_mab".to_string(), "aec".into(), "art_norm".into()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![
                s.o_mab.to_string(),
                s.aec.to_string(),
                s.art_norm.to_string(),
            ];
            row.extend(s.to_dense(dim).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a buffer written by `write_csv`; returns it with the encoding width.
    pub fn read_csv(path: impl AsRef<Path>, capacity: usize) -> Result<(Self, usize)> {
        let mut r = csv::Reader::from_path(path)?;
        let dim = r.headers()?.len().saturating_sub(3);
        let mut buf = Self::new(capacity);
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidConfig(format!("buffer csv: {e}")))?;
            if vals.len() != dim + 3 || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("buffer csv: malformed row".into()));
            }
            buf.push(Sample::from_dense(&vals[3..], vals[0], vals[1], vals[2]));
        }
        Ok((buf, dim))
    }
}
