//! Run-level QoS metrics over completed tasks.

use crate::domain::{CompletedTask, WorkerSpec};
use crate::error::{Error, Result};

fn non_empty(completed: &[CompletedTask]) -> Result<f64> {
    if completed.is_empty() {
        Err(Error::NoCompletedTasks)
    } else {
        Ok(completed.len() as f64)
    }
}

/// Mean inference accuracy.
pub fn metric_accuracy(completed: &[CompletedTask]) -> Result<f64> {
    let n = non_empty(completed)?;
    Ok(completed.iter().map(|c| c.accuracy).sum::<f64>() / n)
}

/// Fraction of tasks whose response time strictly exceeded the deadline.
pub fn metric_sla_violations(completed: &[CompletedTask]) -> Result<f64> {
    let n = non_empty(completed)?;
    Ok(completed.iter().filter(|c| c.violated).count() as f64 / n)
}

/// Mean of deadline hit and accuracy, halved into [0, 1].
pub fn metric_reward(completed: &[CompletedTask]) -> Result<f64> {
    let n = non_empty(completed)?;
    let total: f64 = completed
        .iter()
        .map(|c| f64::from(u8::from(c.met_deadline())) + c.accuracy)
        .sum();
    Ok(total / (2.0 * n))
}

/// Total billed cost for constant per-worker hourly rates.
pub fn metric_cost(worker_hours: &[f64], specs: &[WorkerSpec]) -> Result<f64> {
    if worker_hours.len() != specs.len() {
        return Err(Error::LengthMismatch {
            what: "worker_hours",
            got: worker_hours.len(),
            expected: specs.len(),
        });
    }
    Ok(worker_hours
        .iter()
        .zip(specs)
        .map(|(h, s)| h * s.cost_rate)
        .sum())
}

/// Jain's fairness index `(Σx)² / (n·Σx²)`.
pub fn metric_fairness(counts: &[f64]) -> Result<f64> {
    let sum: f64 = counts.iter().sum();
    let sum_sq: f64 = counts.iter().map(|x| x * x).sum();
    if sum_sq == 0.0 {
        return Err(Error::AllZeroCounts);
    }
    Ok(sum * sum / (counts.len() as f64 * sum_sq))
}

pub fn mean_response_time(completed: &[CompletedTask]) -> Result<f64> {
    let n = non_empty(completed)?;
    Ok(completed.iter().map(|c| c.response_time).sum::<f64>() / n)
}

pub fn mean_wait_time(completed: &[CompletedTask]) -> Result<f64> {
    let n = non_empty(completed)?;
    Ok(completed.iter().map(|c| c.wait_time).sum::<f64>() / n)
}

/// Response time minus wait time, averaged.
pub fn mean_execution_time(completed: &[CompletedTask]) -> Result<f64> {
    let n = non_empty(completed)?;
    Ok(completed
        .iter()
        .map(|c| c.response_time - c.wait_time)
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AppKind, SplitDecision};
    use proptest::prelude::*;

    fn task(r: f64, sla: f64, p: f64) -> CompletedTask {
        CompletedTask::new(0, AppKind::Mnist, SplitDecision::Layer, r, 0.0, p, sla)
    }

    #[test]
    fn accuracy_examples() {
        let ts = [task(1.0, 2.0, 0.9), task(1.0, 2.0, 0.8)];
        assert!((metric_accuracy(&ts).unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(metric_accuracy(&[task(1.0, 2.0, 1.0)]).unwrap(), 1.0);
        assert!(matches!(metric_accuracy(&[]), Err(Error::NoCompletedTasks)));
    }

    #[test]
    fn sla_examples() {
        let ts = [task(3.0, 5.0, 0.9), task(7.0, 5.0, 0.9)];
        assert_eq!(metric_sla_violations(&ts).unwrap(), 0.5);
        let ts = [task(5.0, 5.0, 0.9), task(2.0, 2.0, 0.9)];
        assert_eq!(metric_sla_violations(&ts).unwrap(), 0.0);
        let ts = [
            task(6.0, 5.0, 0.9),
            task(9.0, 5.0, 0.9),
            task(2.0, 5.0, 0.9),
        ];
        assert!((metric_sla_violations(&ts).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(metric_sla_violations(&[]).is_err());
    }

    #[test]
    fn reward_examples() {
        assert!((metric_reward(&[task(1.0, 2.0, 0.9)]).unwrap() - 0.95).abs() < 1e-12);
        assert!((metric_reward(&[task(3.0, 2.0, 1.0)]).unwrap() - 0.5).abs() < 1e-12);
        let ts = [task(1.0, 2.0, 0.8), task(3.0, 2.0, 0.6)];
        assert!((metric_reward(&ts).unwrap() - 0.6).abs() < 1e-12);
        assert!(metric_reward(&[]).is_err());
    }

    #[test]
    fn cost_examples() {
        let b2 = WorkerSpec::b2ms();
        assert!((metric_cost(&[1.0], &[b2.clone()]).unwrap() - 0.0944).abs() < 1e-12);
        assert_eq!(metric_cost(&[0.0], &[b2.clone()]).unwrap(), 0.0);
        assert!((metric_cost(&[2.0], &[WorkerSpec::e4asv4()]).unwrap() - 0.592).abs() < 1e-12);
        assert!(metric_cost(&[1.0, 2.0], &[b2]).is_err());
    }

    #[test]
    fn fairness_examples() {
        assert_eq!(metric_fairness(&[3.0, 3.0, 3.0, 3.0]).unwrap(), 1.0);
        assert_eq!(metric_fairness(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!((metric_fairness(&[2.0, 1.0, 1.0]).unwrap() - 16.0 / 18.0).abs() < 1e-12);
        assert!(matches!(
            metric_fairness(&[0.0, 0.0]),
            Err(Error::AllZeroCounts)
        ));
    }

    fn arb_task() -> impl Strategy<Value = CompletedTask> {
        (0.0..20.0f64, 0.0..20.0f64, 0.0..=1.0f64).prop_map(|(r, s, p)| task(r, s, p))
    }

    proptest! {
        #[test]
        fn reward_decomposes(ts in prop::collection::vec(arb_task(), 1..40)) {
            let reward = metric_reward(&ts).unwrap();
            let rebuilt = (1.0 - metric_sla_violations(&ts).unwrap() + metric_accuracy(&ts).unwrap()) / 2.0;
            prop_assert!((0.0..=1.0).contains(&reward));
            prop_assert!((reward - rebuilt).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_permutation_invariant(ts in prop::collection::vec(arb_task(), 1..30), seed in any::<u64>()) {
            let mut shuffled = ts.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert!((metric_accuracy(&ts).unwrap() - metric_accuracy(&shuffled).unwrap()).abs() < 1e-12);
            prop_assert_eq!(metric_sla_violations(&ts).unwrap(), metric_sla_violations(&shuffled).unwrap());
            prop_assert!((metric_reward(&ts).unwrap() - metric_reward(&shuffled).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn fairness_is_scale_invariant(xs in prop::collection::vec(0.0..100.0f64, 1..20), k in 0.01..100.0f64) {
            prop_assume!(xs.iter().any(|&x| x > 0.0));
            let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
            let a = metric_fairness(&xs).unwrap();
            let b = metric_fairness(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!(a >= 1.0 / xs.len() as f64 - 1e-12 && a <= 1.0 + 1e-12);
        }
    }
}
