//! Uniform and weighted random placements.

use rand::Rng;

use crate::domain::{PlacementMatrix, SystemState};

fn pick_weighted<R: Rng + ?Sized>(
    candidates: &[usize],
    weights: Option<&[f64]>,
    rng: &mut R,
) -> usize {
    match weights {
        None => candidates[rng.random_range(0..candidates.len())],
        Some(w) => {
            let total: f64 = candidates.iter().map(|&c| w[c]).sum();
            if !(total > 0.0) {
                return candidates[rng.random_range(0..candidates.len())];
            }
            let mut u = rng.random::<f64>() * total;
            for &c in candidates {
                u -= w[c];
                if u <= 0.0 {
                    return c;
                }
            }
            candidates[candidates.len() - 1]
        }
    }
}

/// Assigns each row, in order, to a uniformly chosen worker that still has
/// room for it; rows with no such worker stay unplaced.
pub fn random_placement<R: Rng + ?Sized>(
    ram: &[f64],
    capacity: &[f64],
    rng: &mut R,
) -> PlacementMatrix {
    let mut used = vec![0.0; capacity.len()];
    let rows = ram
        .iter()
        .map(|&r| {
            let feasible: Vec<usize> = (0..capacity.len())
                .filter(|&w| used[w] + r <= capacity[w] + 1e-9)
                .collect();
            if feasible.is_empty() {
                return None;
            }
            let w = pick_weighted(&feasible, None, rng);
            used[w] += r;
            Some(w)
        })
        .collect();
    PlacementMatrix::from_rows(rows, capacity.len())
}

/// Keeps the feasible rows of `keep` and places the rest at random, with
/// worker probabilities proportional to `weights` when given.
pub fn random_fill<R: Rng + ?Sized>(
    state: &SystemState,
    keep: &PlacementMatrix,
    weights: Option<&[f64]>,
    rng: &mut R,
) -> PlacementMatrix {
    let h = state.worker_ram.len();
    let mut used = vec![0.0; h];
    let mut rows: Vec<Option<usize>> = vec![None; state.containers.len()];
    for (r, c) in state.containers.iter().enumerate() {
        if let Some(w) = keep.get(r).filter(|&w| w < h) {
            if used[w] + c.ram_mb <= state.worker_ram[w] + 1e-9 {
                used[w] += c.ram_mb;
                rows[r] = Some(w);
            }
        }
    }
    for (r, c) in state.containers.iter().enumerate() {
        if rows[r].is_some() {
            continue;
        }
        let feasible: Vec<usize> = (0..h)
            .filter(|&w| used[w] + c.ram_mb <= state.worker_ram[w] + 1e-9)
            .collect();
        if feasible.is_empty() {
            continue;
        }
        let w = pick_weighted(&feasible, weights, rng);
        used[w] += c.ram_mb;
        rows[r] = Some(w);
    }
    PlacementMatrix::from_rows(rows, h)
}
