//! Fully connected objective regressor with exact input gradients.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::{Sample, TrainingBuffer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ESNN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Softplus,
    /// Makes the network linear; used to check gradients in closed form.
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-2,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

/// `[input_dim, hidden, hidden, 1]` network. All parameters live in one
/// flat vector: W1 (input-major), b1, W2 (input-major), b2, w3, b3.
#[derive(Debug, Clone)]
pub struct SurrogateNet {
    input_dim: usize,
    hidden: usize,
    activation: Activation,
    params: Vec<f64>,
    adam: AdamState,
    train_steps: usize,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

struct Activations {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    out: f64,
}

impl SurrogateNet {
    /// He-style random initialization.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden, Activation::Softplus);
        let o = net.offsets();
        let fan_in_1 = Normal::new(0.0, (2.0 / input_dim.max(1) as f64).sqrt()).expect("valid std");
        let fan_in_2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid std");
        for p in &mut net.params[o.w1..o.b1] {
            *p = fan_in_1.sample(rng);
        }
        for p in &mut net.params[o.w2..o.b2] {
            *p = fan_in_2.sample(rng);
        }
        for p in &mut net.params[o.w3..o.b3] {
            *p = fan_in_2.sample(rng) * 0.1;
        }
        net
    }

    pub fn zeros(input_dim: usize, hidden: usize, activation: Activation) -> Self {
        let len = input_dim * hidden + hidden + hidden * hidden + hidden + hidden + 1;
        Self {
            input_dim,
            hidden,
            activation,
            params: vec![0.0; len],
            adam: AdamState::default(),
            train_steps: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> Offsets {
        let (d, h) = (self.input_dim, self.hidden);
        let w1 = 0;
        let b1 = w1 + d * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + h;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            len: b3 + 1,
        }
    }

    /// Sets the output bias, the only parameter seen when all weights are zero.
    pub fn set_output_bias(&mut self, b: f64) {
        let o = self.offsets();
        self.params[o.b3] = b;
    }

    fn forward_sparse(&self, idx: &[u32], val: &[f64]) -> Activations {
        let o = self.offsets();
        let h = self.hidden;
        let p = &self.params;
        let mut z1 = p[o.b1..o.w2].to_vec();
        for (&i, &x) in idx.iter().zip(val) {
            let row = &p[o.w1 + i as usize * h..o.w1 + (i as usize + 1) * h];
            for (z, w) in z1.iter_mut().zip(row) {
                *z += x * w;
            }
        }
        let h1: Vec<f64> = z1.iter().map(|&z| self.activation.apply(z)).collect();
        let mut z2 = p[o.b2..o.w3].to_vec();
        for (j, &a) in h1.iter().enumerate() {
            let row = &p[o.w2 + j * h..o.w2 + (j + 1) * h];
            for (z, w) in z2.iter_mut().zip(row) {
                *z += a * w;
            }
        }
        let h2: Vec<f64> = z2.iter().map(|&z| self.activation.apply(z)).collect();
        let out = p[o.b3]
            + h2.iter()
                .zip(&p[o.w3..o.b3])
                .map(|(a, w)| a * w)
                .sum::<f64>();
        Activations {
            z1,
            h1,
            z2,
            h2,
            out,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                got: x.len(),
                expected: self.input_dim,
            });
        }
        Ok(())
    }

    fn sparsify(x: &[f64]) -> (Vec<u32>, Vec<f64>) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                idx.push(i as u32);
                val.push(v);
            }
        }
        (idx, val)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let (idx, val) = Self::sparsify(x);
        Ok(self.forward_sparse(&idx, &val).out)
    }

    /// Hidden-layer sensitivities `d out / d z1`.
    fn backprop_hidden(&self, a: &Activations) -> (Vec<f64>, Vec<f64>) {
        let o = self.offsets();
        let h = self.hidden;
        let p = &self.params;
        let dz2: Vec<f64> = (0..h)
            .map(|k| p[o.w3 + k] * self.activation.derivative(a.z2[k]))
            .collect();
        let dz1: Vec<f64> = (0..h)
            .map(|j| {
                let row = &p[o.w2 + j * h..o.w2 + (j + 1) * h];
                let dh1: f64 = row.iter().zip(&dz2).map(|(w, d)| w * d).sum();
                dh1 * self.activation.derivative(a.z1[j])
            })
            .collect();
        (dz1, dz2)
    }

    /// Value and exact gradient with respect to `x[range]`.
    pub fn input_gradient(&self, x: &[f64], range: Range<usize>) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        if range.end > self.input_dim || range.start > range.end {
            return Err(Error::DimensionMismatch {
                got: range.end,
                expected: self.input_dim,
            });
        }
        let (idx, val) = Self::sparsify(x);
        let a = self.forward_sparse(&idx, &val);
        let (dz1, _) = self.backprop_hidden(&a);
        let o = self.offsets();
        let h = self.hidden;
        let grad = range
            .map(|i| {
                let row = &self.params[o.w1 + i * h..o.w1 + (i + 1) * h];
                row.iter().zip(&dz1).map(|(w, d)| w * d).sum()
            })
            .collect();
        Ok((a.out, grad))
    }

    /// Accumulates the gradient of `0.5 (f(x) - y)^2` into `grad`; returns the
    /// squared error.
    fn accumulate(&self, sample: &Sample, y: f64, grad: &mut [f64]) -> f64 {
        let a = self.forward_sparse(&sample.idx, &sample.val);
        let err = a.out - y;
        let (dz1, dz2) = self.backprop_hidden(&a);
        let o = self.offsets();
        let h = self.hidden;
        grad[o.b3] += err;
        for k in 0..h {
            grad[o.w3 + k] += err * a.h2[k];
            grad[o.b2 + k] += err * dz2[k];
        }
        for j in 0..h {
            let g = &mut grad[o.w2 + j * h..o.w2 + (j + 1) * h];
            let hj = a.h1[j];
            for (gk, d) in g.iter_mut().zip(&dz2) {
                *gk += err * hj * d;
            }
            grad[o.b1 + j] += err * dz1[j];
        }
        for (&i, &x) in sample.idx.iter().zip(&sample.val) {
            let g = &mut grad[o.w1 + i as usize * h..o.w1 + (i as usize + 1) * h];
            for (gj, d) in g.iter_mut().zip(&dz1) {
                *gj += err * x * d;
            }
        }
        err * err
    }

    fn adamw_step(&mut self, grad: &[f64], opt: &OptimizerConfig) -> Result<()> {
        let n = self.params.len();
        if self.adam.m.len() != n {
            self.adam = AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                steps: 0,
            };
        }
        self.adam.steps += 1;
        let t = self.adam.steps as i32;
        let bc1 = 1.0 - opt.beta1.powi(t);
        let bc2 = 1.0 - opt.beta2.powi(t);
        for i in 0..n {
            let g = grad[i];
            let m = &mut self.adam.m[i];
            let v = &mut self.adam.v[i];
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            let p = &mut self.params[i];
            *p -= opt.lr * (opt.weight_decay * *p + (*m / bc1) / ((*v / bc2).sqrt() + opt.eps));
        }
        self.train_steps += 1;
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteParameters(self.train_steps));
        }
        Ok(())
    }

    /// One AdamW step on the mean squared error over `batch`; returns the
    /// batch MSE before the step.
    pub fn train_batch(&mut self, batch: &[(&Sample, f64)], opt: &OptimizerConfig) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let o = self.offsets();
        let mut grad = vec![0.0; o.len];
        let mut sse = 0.0;
        for (s, y) in batch {
            if s.idx.last().is_some_and(|&i| i as usize >= self.input_dim) {
                return Err(Error::DimensionMismatch {
                    got: s.idx.last().map_or(0, |&i| i as usize + 1),
                    expected: self.input_dim,
                });
            }
            sse += self.accumulate(s, *y, &mut grad);
        }
        // d/dθ of mean (f - y)^2 is (2/b) Σ (f - y) df/dθ.
        let scale = 2.0 / batch.len() as f64;
        for g in &mut grad {
            *g *= scale;
        }
        self.adamw_step(&grad, opt)?;
        Ok(sse / batch.len() as f64)
    }

    pub fn mse(&self, samples: &[(&Sample, f64)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples
            .iter()
            .map(|(s, y)| {
                let e = self.forward_sparse(&s.idx, &s.val).out - y;
                e * e
            })
            .sum::<f64>()
            / samples.len() as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(self.input_dim as u32).to_le_bytes())?;
        f.write_all(&(self.hidden as u32).to_le_bytes())?;
        let act: u32 = match self.activation {
            Activation::Softplus => 0,
            Activation::Identity => 1,
        };
        f.write_all(&act.to_le_bytes())?;
        for p in &self.params {
            f.write_all(&p.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(Error::BadCheckpoint("missing header".into()));
        }
        let word =
            |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes"));
        if word(0) != VERSION {
            return Err(Error::BadCheckpoint(format!(
                "unsupported version {}",
                word(0)
            )));
        }
        let (d, h) = (word(1) as usize, word(2) as usize);
        let activation = match word(3) {
            0 => Activation::Softplus,
            1 => Activation::Identity,
            other => return Err(Error::BadCheckpoint(format!("unknown activation {other}"))),
        };
        let mut net = Self::zeros(d, h, activation);
        let body = &bytes[20..];
        if body.len() != net.params.len() * 8 {
            return Err(Error::BadCheckpoint(format!(
                "expected {} parameters, found {} bytes",
                net.params.len(),
                body.len()
            )));
        }
        for (p, chunk) in net.params.iter_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::BadCheckpoint("non-finite parameter".into()));
        }
        Ok(net)
    }
}

/// Mini-batch AdamW over the buffer for `epochs` passes, targets taken from
/// `target`. Returns the mean training loss of each epoch.
pub fn train_surrogate<R: Rng + ?Sized>(
    net: &mut SurrogateNet,
    buffer: &TrainingBuffer,
    epochs: usize,
    opt: &OptimizerConfig,
    target: impl Fn(&Sample) -> f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let samples: Vec<(&Sample, f64)> = buffer.iter().map(|s| (s, target(s))).collect();
    if samples.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::InvalidConfig("non-finite training target".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    let bs = opt.batch_size.max(1);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(bs) {
            let batch: Vec<(&Sample, f64)> = chunk.iter().map(|&i| samples[i]).collect();
            total += net.train_batch(&batch, opt)? * batch.len() as f64;
        }
        history.push(total / samples.len() as f64);
    }
    Ok(history)
}

/// A few random mini-batches, used to fine-tune between intervals.
pub fn fine_tune<R: Rng + ?Sized>(
    net: &mut SurrogateNet,
    buffer: &TrainingBuffer,
    batches: usize,
    opt: &OptimizerConfig,
    target: impl Fn(&Sample) -> f64,
    rng: &mut R,
) -> Result<()> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let all: Vec<&Sample> = buffer.iter().collect();
    let newest = all[all.len() - 1];
    for _ in 0..batches {
        let mut batch: Vec<(&Sample, f64)> = vec![(newest, target(newest))];
        for _ in 1..opt.batch_size.min(all.len()) {
            let s = all[rng.random_range(0..all.len())];
            batch.push((s, target(s)));
        }
        net.train_batch(&batch, opt)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(x: &[f64]) -> Sample {
        Sample::from_dense(x, 0.0, 0.0, 0.0)
    }

    /// Central-difference gradient of `net` on `x[range]`.
    pub(crate) fn fd_gradient(
        net: &SurrogateNet,
        x: &[f64],
        range: Range<usize>,
        h: f64,
    ) -> Vec<f64> {
        let mut xp = x.to_vec();
        range
            .map(|i| {
                let orig = xp[i];
                xp[i] = orig + h;
                let up = net.predict(&xp).unwrap();
                xp[i] = orig - h;
                let down = net.predict(&xp).unwrap();
                xp[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = SurrogateNet::zeros(7, 4, Activation::Softplus);
        net.set_output_bias(0.37);
        assert_eq!(
            net.predict(&[1.0, 2.0, 0.0, 0.0, -1.0, 0.5, 3.0]).unwrap(),
            0.37
        );
        let (_, g) = net.input_gradient(&[1.0; 7], 0..7).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_is_deterministic_and_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = SurrogateNet::new(10, 8, &mut rng);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert!(matches!(
            net.predict(&x[..9]),
            Err(Error::DimensionMismatch {
                got: 9,
                expected: 10
            })
        ));
    }

    #[test]
    fn linear_net_gradient_is_weight_slice() {
        let (d, h) = (6, 3);
        let mut net = SurrogateNet::zeros(d, h, Activation::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        // Collapse the linear layers into one weight vector.
        let p = net.params().to_vec();
        let o = net.offsets();
        let w: Vec<f64> = (0..d)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..h {
                    for k in 0..h {
                        s += p[o.w1 + i * h + j] * p[o.w2 + j * h + k] * p[o.w3 + k];
                    }
                }
                s
            })
            .collect();
        let x = vec![0.3; d];
        let (_, g) = net.input_gradient(&x, 2..6).unwrap();
        for (a, b) in g.iter().zip(&w[2..6]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let d = rng.random_range(5..40);
            let net = SurrogateNet::new(d, 16, &mut rng);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let start = rng.random_range(0..d / 2);
            let (_, g) = net.input_gradient(&x, start..d).unwrap();
            let fd = fd_gradient(&net, &x, start..d, 1e-5);
            let num: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
            assert!(num / den < 1e-4, "relative error {}", num / den);
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = SurrogateNet::new(12, 16, &mut rng);
        let mut buf = TrainingBuffer::new(10);
        buf.push(Sample::from_dense(&[0.5; 12], 0.8, 0.1, 0.2));
        let opt = OptimizerConfig {
            lr: 1e-2,
            weight_decay: 0.0,
            ..Default::default()
        };
        let hist = train_surrogate(&mut net, &buf, 2000, &opt, |s| s.o_mab, &mut rng).unwrap();
        assert!(*hist.last().unwrap() < 1e-6, "{}", hist.last().unwrap());
    }

    #[test]
    fn constant_target_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = SurrogateNet::new(8, 16, &mut rng);
        let mut buf = TrainingBuffer::new(200);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
            buf.push(Sample::from_dense(&x, -0.4, 0.0, 0.0));
        }
        let opt = OptimizerConfig {
            lr: 3e-3,
            ..Default::default()
        };
        train_surrogate(&mut net, &buf, 300, &opt, |s| s.o_mab, &mut rng).unwrap();
        let probe: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        assert!((net.predict(&probe).unwrap() + 0.4).abs() < 0.02);
    }

    #[test]
    fn linear_target_beats_variance_like_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 10;
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let draw = |rng: &mut ChaCha8Rng| -> (Vec<f64>, f64) {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            (x, y)
        };
        let mut buf = TrainingBuffer::new(1000);
        for _ in 0..500 {
            let (x, y) = draw(&mut rng);
            buf.push(Sample::from_dense(&x, y, 0.0, 0.0));
        }
        let test: Vec<(Vec<f64>, f64)> = (0..200).map(|_| draw(&mut rng)).collect();
        let mean = test.iter().map(|t| t.1).sum::<f64>() / test.len() as f64;
        let var = test.iter().map(|t| (t.1 - mean).powi(2)).sum::<f64>() / test.len() as f64;
        let mut net = SurrogateNet::new(d, 32, &mut rng);
        let opt = OptimizerConfig {
            lr: 3e-3,
            ..Default::default()
        };
        train_surrogate(&mut net, &buf, 200, &opt, |s| s.o_mab, &mut rng).unwrap();
        let held: Vec<(Sample, f64)> = test.iter().map(|(x, y)| (sample(x), *y)).collect();
        let refs: Vec<(&Sample, f64)> = held.iter().map(|(s, y)| (s, *y)).collect();
        let mse = net.mse(&refs);
        // The generating map is exactly linear, so least squares is exact;
        // the network must land within a tenth of the variance of it.
        assert!(mse < 0.1 * var, "mse {mse} var {var}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = SurrogateNet::new(20, 8, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surrogate.bin");
        net.save(&path).unwrap();
        let back = SurrogateNet::load(&path).unwrap();
        assert_eq!(back.params(), net.params());
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(
            SurrogateNet::load(&path),
            Err(Error::BadCheckpoint(_))
        ));
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = SurrogateNet::new(4, 4, &mut rng);
        let buf = TrainingBuffer::new(4);
        let r = train_surrogate(
            &mut net,
            &buf,
            1,
            &OptimizerConfig::default(),
            |s| s.o_mab,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::EmptyBuffer)));
    }
}
