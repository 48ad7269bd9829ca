//! Accuracy metrics, the normalized Ω score, efficiency scores and the
//! scheduled streaming evaluation loop.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureBank;
use crate::error::{Error, Result};
use crate::learner::{Predictor, StreamLearner};
use crate::orderings::StreamPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Top1,
    Top5,
}

impl MetricKind {
    pub fn k(&self) -> usize {
        match self {
            MetricKind::Top1 => 1,
            MetricKind::Top5 => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScope {
    AllTestData,
    SeenClassesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub position: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    pub metric: MetricKind,
    pub scope: EvalScope,
}

impl LearningCurve {
    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.accuracy).collect()
    }

    pub fn positions(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Fraction of rows whose truth is among the first `k` ranked labels.
pub fn topk_accuracy(predictions: &[Vec<usize>], truths: &[usize], k: usize) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if truths.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(ranked, truth)| ranked.iter().take(k).any(|l| l == *truth))
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Mean over evaluation points of `alpha[t] / alpha_offline[t]`.
pub fn omega_all(alpha: &[f64], alpha_offline: &[f64]) -> Result<f64> {
    if alpha.len() != alpha_offline.len() {
        return Err(Error::LengthMismatch {
            left: alpha.len(),
            right: alpha_offline.len(),
        });
    }
    if alpha.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    if let Some((index, &value)) = alpha_offline.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        return Err(Error::ZeroOffline { index, value });
    }
    let total: f64 = alpha.iter().zip(alpha_offline).map(|(a, o)| a / o).sum();
    Ok(total / alpha.len() as f64)
}

/// `(CE, ME) = (1 - time/max_time, 1 - mem/max_mem)`, each clamped to `[0, 1]`.
pub fn efficiency_scores(time_seconds: f64, max_time_seconds: f64, mem_bytes: f64, max_mem_bytes: f64) -> (f64, f64) {
    let ce = (1.0 - time_seconds / max_time_seconds).clamp(0.0, 1.0);
    let me = (1.0 - mem_bytes / max_mem_bytes).clamp(0.0, 1.0);
    (ce, me)
}

/// Accuracy of `predictor` over `test`, optionally restricted to `seen` labels.
pub fn evaluate(
    predictor: &dyn Predictor,
    test: &FeatureBank,
    metric: MetricKind,
    seen: Option<&[bool]>,
) -> f64 {
    let k = metric.k();
    let (hits, total) = (0..test.len())
        .into_par_iter()
        .filter(|&i| seen.is_none_or(|s| s.get(test.label(i)).copied().unwrap_or(false)))
        .map(|i| {
            let truth = test.label(i);
            let hit = predictor
                .rank(&test.row_f64(i), k)
                .iter()
                .any(|r| r.label == truth);
            (usize::from(hit), 1usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRun {
    pub curve: LearningCurve,
    /// Base fit, streaming updates and snapshot preparation; test-set
    /// evaluation excluded.
    pub train_seconds: f64,
    pub memory_bytes: u64,
}

/// Streams `plan` through `learner`: base fit on the prefix, then one sample
/// at a time, evaluating on `test` at every scheduled position.
pub fn run_streaming_eval(
    train: &FeatureBank,
    test: &FeatureBank,
    plan: &StreamPlan,
    learner: &mut dyn StreamLearner,
    metric: MetricKind,
    scope: EvalScope,
) -> Result<StreamRun> {
    if plan.order.len() != train.len() {
        return Err(Error::InvalidPlan(format!(
            "plan covers {} samples, bank has {}",
            plan.order.len(),
            train.len()
        )));
    }
    if test.dim != train.dim {
        return Err(Error::DimensionMismatch {
            expected: train.dim,
            got: test.dim,
        });
    }
    let mut seen = vec![false; train.num_classes.max(test.num_classes)];
    let mut train_seconds = 0.0;
    let mut points = Vec::with_capacity(plan.eval_points.len());

    let clock = Instant::now();
    let base = train.labelled_rows(&plan.order[..plan.base_init_len]);
    learner.base_fit(&base)?;
    for (_, y) in &base {
        seen[*y] = true;
    }
    train_seconds += clock.elapsed().as_secs_f64();

    let mut position = plan.base_init_len;
    for &point in &plan.eval_points {
        let clock = Instant::now();
        while position < point {
            let i = plan.order[position];
            learner.learn(&train.row_f64(i), train.label(i))?;
            seen[train.label(i)] = true;
            position += 1;
        }
        let predictor = learner.snapshot()?;
        train_seconds += clock.elapsed().as_secs_f64();

        let mask = match scope {
            EvalScope::AllTestData => None,
            EvalScope::SeenClassesOnly => Some(seen.as_slice()),
        };
        points.push(CurvePoint {
            position: point,
            accuracy: evaluate(predictor.as_ref(), test, metric, mask),
        });
    }
    Ok(StreamRun {
        curve: LearningCurve {
            points,
            metric,
            scope,
        },
        train_seconds,
        memory_bytes: learner.memory_bytes(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_counts() {
        let preds = vec![vec![0, 1], vec![1, 0], vec![2, 0], vec![0, 2]];
        assert_eq!(topk_accuracy(&preds, &[0, 1, 2, 0], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&preds, &[0, 1, 2, 2], 1).unwrap(), 0.75);
        let at_rank3 = vec![vec![4, 5, 9, 1, 2]; 3];
        assert_eq!(topk_accuracy(&at_rank3, &[9, 9, 9], 5).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&at_rank3, &[9, 9, 9], 1).unwrap(), 0.0);
        assert!(matches!(
            topk_accuracy(&preds, &[0], 1),
            Err(Error::LengthMismatch { left: 4, right: 1 })
        ));
    }

    #[test]
    fn omega_examples() {
        let a = [0.7, 0.8, 0.9];
        assert_eq!(omega_all(&a, &a).unwrap(), 1.0);
        let w = omega_all(&[0.4, 0.6], &[0.8, 0.9]).unwrap();
        assert!((w - (0.5 + 0.6 / 0.9) / 2.0).abs() < 1e-15);
        assert!((w - 0.58335).abs() < 1e-4);
        let over = omega_all(&[1.0], &[0.9]).unwrap();
        assert!(over > 1.0 && (over - 1.0 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn omega_rejects_zero_offline() {
        assert!(matches!(
            omega_all(&[0.5, 0.5], &[0.5, 0.0]),
            Err(Error::ZeroOffline { index: 1, .. })
        ));
        assert!(omega_all(&[], &[]).is_err());
        assert!(omega_all(&[0.1], &[0.2, 0.3]).is_err());
    }

    #[test]
    fn efficiency_examples() {
        let (ce, _) = efficiency_scores(27.0 * 60.0, 72.0 * 3600.0, 0.0, 1.0);
        assert_eq!(ce, 1.0 - 1620.0 / 259_200.0);
        assert!((ce - 0.99375).abs() < 1e-15);
        let (_, me) = efficiency_scores(0.0, 1.0, 0.003, 5.0);
        assert!((me - 0.9994).abs() < 1e-15);
        let (ce, me) = efficiency_scores(10.0, 10.0, 20.0, 10.0);
        assert_eq!((ce, me), (0.0, 0.0));
    }
}
