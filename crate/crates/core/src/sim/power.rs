//! Piecewise-linear power model over SPEC-style utilization knots.

use crate::domain::WorkerSpec;

/// Interpolates the power curve at `utilization`, clamped to [0, 1].
pub fn power_at(curve: &[(f64, f64)], utilization: f64) -> f64 {
    let u = utilization.clamp(0.0, 1.0);
    match curve {
        [] => 0.0,
        [(_, w)] => *w,
        _ => {
            let idx = curve.partition_point(|&(x, _)| x < u);
            if idx == 0 {
                return curve[0].1;
            }
            if idx >= curve.len() {
                return curve[curve.len() - 1].1;
            }
            let (x0, w0) = curve[idx - 1];
            let (x1, w1) = curve[idx];
            if x1 == u {
                return w1;
            }
            w0 + (w1 - w0) * (u - x0) / (x1 - x0)
        }
    }
}

/// Watt-hours drawn over one interval at mean CPU utilization `utilization`.
pub fn energy_of_interval(spec: &WorkerSpec, utilization: f64, interval_seconds: f64) -> f64 {
    power_at(&spec.power_curve, utilization) * interval_seconds / 3600.0
}
