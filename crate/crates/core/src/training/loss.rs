//! Mean absolute error per task, summed over tasks, and its subgradient.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_TASKS};

/// Per-task MAE (task units) and their unweighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub per_task: [f64; NUM_TASKS],
    pub total: f64,
}

impl LossBreakdown {
    /// From per-task sums of absolute errors over `count` samples.
    pub(crate) fn from_abs_sums(sums: [f64; NUM_TASKS], count: usize) -> Self {
        let per_task = sums.map(|s| s / count as f64);
        Self {
            per_task,
            total: per_task.iter().sum(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.per_task.iter().all(|v| v.is_finite())
    }
}

/// `(1/B) Σ |y_i − ŷ_i|`.
pub fn mae(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} targets vs {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Argument("mae of an empty batch".to_string()));
    }
    if targets.iter().chain(predictions).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite value in mae input".to_string()));
    }
    let sum: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p).abs())
        .sum();
    Ok(sum / targets.len() as f64)
}

fn check_shapes(targets: &[[f64; NUM_TASKS]], predictions: &[[f64; NUM_TASKS]]) -> Result<()> {
    if targets.len() != predictions.len() {
        return Err(Error::Argument(format!(
            "batch mismatch: {} target rows vs {} prediction rows",
            targets.len(),
            predictions.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Argument("empty batch".to_string()));
    }
    Ok(())
}

/// Column-wise MAE over a `(B, 5)` batch plus the sum over tasks.
pub fn multitask_loss(
    targets: &[[f64; NUM_TASKS]],
    predictions: &[[f64; NUM_TASKS]],
) -> Result<LossBreakdown> {
    check_shapes(targets, predictions)?;
    if targets.iter().chain(predictions).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite value in loss input".to_string()));
    }
    let mut sums = [0.0; NUM_TASKS];
    for (y, p) in targets.iter().zip(predictions) {
        for k in 0..NUM_TASKS {
            sums[k] += (y[k] - p[k]).abs();
        }
    }
    Ok(LossBreakdown::from_abs_sums(sums, targets.len()))
}

/// Subgradient of [`multitask_loss`]'s total with respect to the
/// predictions: `sign(ŷ − y) / B`, taken as 0 where the residual is 0.
pub fn loss_gradient(
    targets: &[[f64; NUM_TASKS]],
    predictions: &[[f64; NUM_TASKS]],
) -> Result<Vec<[f64; NUM_TASKS]>> {
    check_shapes(targets, predictions)?;
    let b = targets.len() as f64;
    Ok(targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| {
            std::array::from_fn(|k| {
                let r = p[k] - y[k];
                if r > 0.0 {
                    1.0 / b
                } else if r < 0.0 {
                    -1.0 / b
                } else {
                    0.0
                }
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[3.0, -1.0, 7.5], &[3.0, -1.0, 7.5]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap(), 1.0);
        assert_eq!(mae(&[10.0, 20.0, 30.0], &[20.0, 20.0, 50.0]).unwrap(), 10.0);
    }

    #[test]
    fn mae_errors() {
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[f64::NAN], &[1.0]).is_err());
        assert!(mae(&[1.0], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn single_row_breakdown() {
        let l = multitask_loss(&[[120.0, 40.0, 12.0, 5.0, 30.0]], &[[100.0, 50.0, 10.0, 5.0, 20.0]])
            .unwrap();
        assert_eq!(l.per_task, [20.0, 10.0, 2.0, 0.0, 10.0]);
        assert_eq!(l.total, 42.0);
    }

    #[test]
    fn identity_is_zero() {
        let y = [[1.0, 2.0, 3.0, 4.0, 5.0], [6.0, 7.0, 8.0, 9.0, 10.0]];
        let l = multitask_loss(&y, &y).unwrap();
        assert_eq!(l.per_task, [0.0; 5]);
        assert_eq!(l.total, 0.0);
        assert_eq!(loss_gradient(&y, &y).unwrap(), vec![[0.0; 5]; 2]);
    }

    #[test]
    fn gradient_sign_rule() {
        let y = [[0.0; 5]];
        let p = [[1.0, -2.0, 0.0, 3.0, -0.5]];
        assert_eq!(loss_gradient(&y, &p).unwrap(), vec![[1.0, -1.0, 0.0, 1.0, -1.0]]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(multitask_loss(&[[0.0; 5]], &[]).is_err());
        assert!(loss_gradient(&[[0.0; 5]; 2], &[[0.0; 5]]).is_err());
    }

    fn rows(max: usize) -> impl Strategy<Value = Vec<[f64; 5]>> {
        proptest::collection::vec(proptest::array::uniform5(-1e3f64..1e3), 1..=max)
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pair in rows(16).prop_flat_map(|y| {
                let n = y.len();
                (Just(y), proptest::collection::vec(proptest::array::uniform5(-1e3f64..1e3), n))
            }),
            rot in 0usize..16,
        ) {
            let (y, p) = pair;
            let r = rot % y.len();
            let mut y2 = y.clone();
            let mut p2 = p.clone();
            y2.rotate_left(r);
            p2.rotate_left(r);
            let a = multitask_loss(&y, &p).unwrap();
            let b = multitask_loss(&y2, &p2).unwrap();
            for k in 0..5 {
                prop_assert!((a.per_task[k] - b.per_task[k]).abs() <= 1e-9 * a.per_task[k].max(1.0));
            }
        }

        #[test]
        fn total_bounds_components_and_homogeneous(
            pair in rows(16).prop_flat_map(|y| {
                let n = y.len();
                (Just(y), proptest::collection::vec(proptest::array::uniform5(-1e3f64..1e3), n))
            }),
            c in 0.01f64..100.0,
        ) {
            let (y, p) = pair;
            let l = multitask_loss(&y, &p).unwrap();
            prop_assert!(l.per_task.iter().all(|&v| v >= 0.0 && v <= l.total + 1e-12));
            let ys: Vec<[f64; 5]> = y.iter().map(|r| r.map(|v| v * c)).collect();
            let ps: Vec<[f64; 5]> = p.iter().map(|r| r.map(|v| v * c)).collect();
            let s = multitask_loss(&ys, &ps).unwrap();
            prop_assert!((s.total - c * l.total).abs() <= 1e-9 * (c * l.total).max(1.0));
            for k in 0..5 {
                prop_assert!((s.per_task[k] - c * l.per_task[k]).abs() <= 1e-9 * (c * l.per_task[k]).max(1.0));
            }
        }
    }
}
