//! Surrogate-gradient placement with feasibility repair.

use super::encode::Encoder;
use super::surrogate::SurrogateNet;
use super::PlacementConfig;
use crate::domain::{PlacementMatrix, SystemState};
use crate::error::{Error, Result};

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Projected gradient descent on the listed rows of `relaxed`. Stops when
/// one step moves the rows by less than `tol` in L2 norm.
fn descend(
    net: &SurrogateNet,
    enc: &Encoder,
    base: &[f64],
    relaxed: &mut [f64],
    rows: &[usize],
    cfg: &PlacementConfig,
) -> Result<()> {
    let h = enc.n_workers;
    let m = relaxed.len() / h;
    let range = enc.placement_range(m);
    let mut x = base.to_vec();
    for _ in 0..cfg.max_iters {
        enc.write_placement(&mut x, relaxed);
        let (_, grad) = net.input_gradient(&x, range.clone())?;
        let mut moved = 0.0;
        for &r in rows {
            let row = &mut relaxed[r * h..(r + 1) * h];
            let before = row.to_vec();
            for (v, g) in row.iter_mut().zip(&grad[r * h..(r + 1) * h]) {
                *v -= cfg.eta * g;
            }
            project_simplex(row);
            moved += row
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        if moved.sqrt() < cfg.tol {
            break;
        }
    }
    Ok(())
}

/// Refines `p_init` by descending the surrogate, which predicts the negated
/// placement objective, so lower outputs are better.
///
/// Rows placed in `p_init` are relaxed jointly; the remaining rows start
/// uniform and are settled one at a time in row order so each sees the
/// choices before it. A row whose choice does not fit in RAM moves to the
/// feasible worker with the best predicted objective, or is left unplaced
/// when no worker fits. Rows beyond the encoder's container cap stay unplaced.
pub fn optimize_placement(
    net: &SurrogateNet,
    enc: &Encoder,
    state: &SystemState,
    p_init: &PlacementMatrix,
    cfg: &PlacementConfig,
) -> Result<PlacementMatrix> {
    let h = enc.n_workers;
    let total_rows = state.containers.len();
    if p_init.n_rows() != total_rows {
        return Err(Error::LengthMismatch {
            what: "initial placement rows",
            got: p_init.n_rows(),
            expected: total_rows,
        });
    }
    if net.input_dim() != enc.dim() {
        return Err(Error::DimensionMismatch {
            got: enc.dim(),
            expected: net.input_dim(),
        });
    }
    let m = total_rows.min(enc.max_containers);
    let view = SystemState {
        workers: state.workers.clone(),
        containers: state.containers[..m].to_vec(),
        worker_ram: state.worker_ram.clone(),
    };
    let base = enc.encode_base(&view)?;
    let ram: Vec<f64> = view.containers.iter().map(|c| c.ram_mb).collect();
    let mut used = vec![0.0; h];
    let mut relaxed = vec![0.0; m * h];
    let mut out: Vec<Option<usize>> = vec![None; total_rows];

    let warm: Vec<usize> = (0..m)
        .filter(|&r| p_init.get(r).is_some_and(|w| w < h))
        .collect();
    for &r in &warm {
        relaxed[r * h + p_init.get(r).expect("warm row")] = 1.0;
    }
    if !warm.is_empty() {
        descend(net, enc, &base, &mut relaxed, &warm, cfg)?;
        for &r in &warm {
            let w = argmax(&relaxed[r * h..(r + 1) * h]);
            set_one_hot(&mut relaxed, r, h, Some(w));
        }
        for &r in &warm {
            let choice = argmax(&relaxed[r * h..(r + 1) * h]);
            let settled = settle(
                net,
                enc,
                &base,
                &mut relaxed,
                r,
                choice,
                &ram,
                &mut used,
                &view.worker_ram,
            )?;
            out[r] = settled;
        }
    }
    for r in (0..m).filter(|r| !warm.contains(r)) {
        relaxed[r * h..(r + 1) * h].fill(1.0 / h as f64);
        descend(net, enc, &base, &mut relaxed, &[r], cfg)?;
        let choice = argmax(&relaxed[r * h..(r + 1) * h]);
        out[r] = settle(
            net,
            enc,
            &base,
            &mut relaxed,
            r,
            choice,
            &ram,
            &mut used,
            &view.worker_ram,
        )?;
    }
    Ok(PlacementMatrix::from_rows(out, h))
}

fn set_one_hot(relaxed: &mut [f64], r: usize, h: usize, w: Option<usize>) {
    let row = &mut relaxed[r * h..(r + 1) * h];
    row.fill(0.0);
    if let Some(w) = w {
        row[w] = 1.0;
    }
}

/// Commits row `r` to `choice` if it fits, otherwise to the feasible worker
/// with the lowest prediction; updates `used` and the relaxed matrix.
#[allow(clippy::too_many_arguments)]
fn settle(
    net: &SurrogateNet,
    enc: &Encoder,
    base: &[f64],
    relaxed: &mut [f64],
    r: usize,
    choice: usize,
    ram: &[f64],
    used: &mut [f64],
    capacity: &[f64],
) -> Result<Option<usize>> {
    let h = enc.n_workers;
    let fits = |w: usize, used: &[f64]| used[w] + ram[r] <= capacity[w] + 1e-9;
    let pick = if fits(choice, used) {
        Some(choice)
    } else {
        let mut best: Option<(usize, f64)> = None;
        let mut x = base.to_vec();
        for w in (0..h).filter(|&w| fits(w, used)) {
            set_one_hot(relaxed, r, h, Some(w));
            enc.write_placement(&mut x, relaxed);
            let f = net.predict(&x)?;
            if best.is_none_or(|(_, bf)| f < bf) {
                best = Some((w, f));
            }
        }
        best.map(|(w, _)| w)
    };
    set_one_hot(relaxed, r, h, pick);
    if let Some(w) = pick {
        used[w] += ram[r];
    }
    Ok(pick)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AppKind, ContainerDemand, SplitDecision, WorkerState};
    use crate::placement::buffer::{Sample, TrainingBuffer};
    use crate::placement::surrogate::{train_surrogate, Activation, OptimizerConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn demand(id: u64, decision: SplitDecision, ram_mb: f64) -> ContainerDemand {
        ContainerDemand {
            container_id: id,
            task_id: id,
            app: AppKind::Mnist,
            decision,
            stage: 0,
            stage_count: if decision == SplitDecision::Layer {
                4
            } else {
                1
            },
            host: None,
            cpu: 0.2,
            ram: 0.1,
            net: 0.0,
            disk: 0.0,
            work_norm: 0.3,
            ram_norm: ram_mb / 4000.0,
            remaining_fraction: 1.0,
            ram_mb,
        }
    }

    fn state(h: usize, containers: Vec<ContainerDemand>) -> SystemState {
        SystemState {
            workers: vec![WorkerState::default(); h],
            containers,
            worker_ram: vec![4000.0; h],
        }
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.5, 0.5];
        project_simplex(&mut v);
        assert!(v.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        let mut v = vec![2.0, 0.0];
        project_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0]);
        let mut v = vec![0.2, 0.3, 0.5];
        project_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v[2] - 0.5).abs() < 1e-12);
    }

    /// Trains a net whose objective is best when every container sits on
    /// worker 0.
    fn worker_zero_net(enc: &Encoder, rng: &mut ChaCha8Rng) -> SurrogateNet {
        let mut buf = TrainingBuffer::new(2000);
        for _ in 0..400 {
            let s = state(enc.n_workers, vec![demand(1, SplitDecision::Layer, 500.0)]);
            let w = rng.random_range(0..enc.n_workers);
            let p = PlacementMatrix::from_rows(vec![Some(w)], enc.n_workers);
            let x = enc.encode(&s, &p).unwrap();
            // Target is the negated objective: 0 on worker 0, 1 elsewhere.
            let y = if w == 0 { 0.0 } else { 1.0 };
            buf.push(Sample::from_dense(&x, y, 0.0, 0.0));
        }
        let mut net = SurrogateNet::new(enc.dim(), 16, rng);
        let opt = OptimizerConfig {
            lr: 3e-3,
            ..Default::default()
        };
        train_surrogate(&mut net, &buf, 150, &opt, |s| s.o_mab, rng).unwrap();
        net
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = Encoder::new(4, 3, true);
        let net = worker_zero_net(&enc, &mut rng);
        let s = state(4, vec![demand(1, SplitDecision::Layer, 500.0)]);
        let cfg = PlacementConfig::default();
        let p = optimize_placement(&net, &enc, &s, &PlacementMatrix::empty(1, 4), &cfg).unwrap();
        let oracle = (0..4)
            .map(|w| {
                let x = enc
                    .encode(&s, &PlacementMatrix::from_rows(vec![Some(w)], 4))
                    .unwrap();
                (w, net.predict(&x).unwrap())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(oracle, 0);
        assert_eq!(p.get(0), Some(oracle));
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let enc = Encoder::new(3, 4, true);
        let mut net = SurrogateNet::zeros(enc.dim(), 8, Activation::Softplus);
        net.set_output_bias(0.3);
        let s = state(
            3,
            vec![
                demand(1, SplitDecision::Layer, 500.0),
                demand(2, SplitDecision::Semantic, 400.0),
            ],
        );
        let p0 = PlacementMatrix::from_rows(vec![Some(2), Some(1)], 3);
        let p = optimize_placement(&net, &enc, &s, &p0, &PlacementConfig::default()).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn oversized_container_is_wait_queued() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(3, 4, true);
        let net = SurrogateNet::new(enc.dim(), 8, &mut rng);
        let s = state(3, vec![demand(1, SplitDecision::Layer, 5000.0)]);
        let p = optimize_placement(
            &net,
            &enc,
            &s,
            &PlacementMatrix::empty(1, 3),
            &PlacementConfig::default(),
        )
        .unwrap();
        assert_eq!(p.get(0), None);
    }

    #[test]
    fn decision_awareness_can_change_placement() {
        // Layer containers do best on worker 0, semantic ones on worker 2.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = Encoder::new(3, 2, true);
        let mut buf = TrainingBuffer::new(2000);
        for _ in 0..600 {
            let d = if rng.random::<bool>() {
                SplitDecision::Layer
            } else {
                SplitDecision::Semantic
            };
            let w = rng.random_range(0..3);
            let s = state(3, vec![demand(1, d, 500.0)]);
            let x = enc
                .encode(&s, &PlacementMatrix::from_rows(vec![Some(w)], 3))
                .unwrap();
            let best = if d == SplitDecision::Layer { 0 } else { 2 };
            buf.push(Sample::from_dense(
                &x,
                if w == best { 0.0 } else { 1.0 },
                0.0,
                0.0,
            ));
        }
        let mut net = SurrogateNet::new(enc.dim(), 16, &mut rng);
        let opt = OptimizerConfig {
            lr: 3e-3,
            ..Default::default()
        };
        train_surrogate(&mut net, &buf, 200, &opt, |s| s.o_mab, &mut rng).unwrap();
        let cfg = PlacementConfig::default();
        let pick = |d| {
            let s = state(3, vec![demand(1, d, 500.0)]);
            optimize_placement(&net, &enc, &s, &PlacementMatrix::empty(1, 3), &cfg)
                .unwrap()
                .get(0)
        };
        assert_eq!(pick(SplitDecision::Layer), Some(0));
        assert_eq!(pick(SplitDecision::Semantic), Some(2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn output_is_feasible_and_idempotent(
            seed in any::<u64>(),
            rams in prop::collection::vec(100.0..3000.0f64, 1..10),
            init in prop::collection::vec(prop::option::of(0usize..4), 10),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let enc = Encoder::new(4, 8, true);
            let net = SurrogateNet::new(enc.dim(), 8, &mut rng);
            let cs: Vec<ContainerDemand> = rams
                .iter()
                .enumerate()
                .map(|(i, &r)| demand(i as u64, if i % 2 == 0 { SplitDecision::Layer } else { SplitDecision::Semantic }, r))
                .collect();
            let n = cs.len();
            let s = state(4, cs);
            let p0 = PlacementMatrix::from_rows(init[..n].to_vec(), 4);
            let cfg = PlacementConfig::default();
            let p1 = optimize_placement(&net, &enc, &s, &p0, &cfg).unwrap();
            prop_assert!(p1.check(&rams, &s.worker_ram).is_empty());
            for row in 8..n {
                prop_assert_eq!(p1.get(row), None);
            }
            let p2 = optimize_placement(&net, &enc, &s, &p1, &cfg).unwrap();
            prop_assert_eq!(p1, p2);
        }
    }
}
