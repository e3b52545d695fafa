//! Greedy stepwise forward feature selection scored by leave-one-out RMSE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loocv::loocv_regress;
use super::metrics::rmse;
use super::{Dataset, LearnError};

/// Minimum LOOCV-RMSE improvement required to accept another feature.
pub const DEFAULT_MIN_IMPROVEMENT: f64 = 1e-4;

/// One accepted selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub feature: String,
    /// 1-based insertion rank.
    pub rank: usize,
    /// LOOCV RMSE of the model after this feature was added.
    pub loocv_rmse: f64,
}

/// Ordered outcome of a stepwise search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// LOOCV RMSE of the intercept-only model the search starts from.
    pub baseline_rmse: f64,
    pub steps: Vec<SelectionStep>,
}

impl SelectionResult {
    /// Selected feature names in insertion order.
    pub fn selected_names(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.feature.clone()).collect()
    }

    /// The first `k` insertion ranks (or fewer if the search stopped early).
    pub fn top(&self, k: usize) -> Vec<String> {
        self.steps
            .iter()
            .take(k)
            .map(|s| s.feature.clone())
            .collect()
    }
}

/// Leave-one-out RMSE of the intercept-only model: each held-out subject is
/// predicted by the mean of the others.
fn intercept_only_rmse(y: &[f64]) -> f64 {
    let n = y.len();
    let sum: f64 = y.iter().sum();
    let preds: Vec<f64> = y.iter().map(|&v| (sum - v) / (n - 1) as f64).collect();
    rmse(y, &preds)
}

/// Forward selection: starting from the intercept-only model, repeatedly add
/// the feature whose OLS model attains the lowest LOOCV RMSE. Stops when the
/// best candidate improves by less than `min_improvement`, when
/// `max_features` is reached, or when every remaining candidate fails to
/// fit (such candidates are skipped). Ties go to the earlier feature in
/// canonical column order.
pub fn stepwise_select(
    ds: &Dataset,
    y: &[f64],
    max_features: usize,
    min_improvement: f64,
) -> Result<SelectionResult, LearnError> {
    ds.validate()?;
    let n = ds.x.nrows();
    let p = ds.x.ncols();
    if y.len() != n {
        return Err(LearnError::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if n < 3 {
        return Err(LearnError::TooFewSamples { n, min: 3 });
    }
    if p == 0 {
        return Err(LearnError::BadParameter {
            message: "stepwise selection needs at least one feature".to_string(),
        });
    }
    if !(min_improvement >= 0.0 && min_improvement.is_finite()) {
        return Err(LearnError::BadParameter {
            message: format!("min_improvement must be finite and non-negative, got {min_improvement}"),
        });
    }

    let baseline_rmse = intercept_only_rmse(y);
    let mut current_rmse = baseline_rmse;
    let mut selected: Vec<usize> = Vec::new();
    let mut steps: Vec<SelectionStep> = Vec::new();

    while selected.len() < max_features.min(p) {
        let candidates: Vec<usize> = (0..p).filter(|j| !selected.contains(j)).collect();
        let scored: Vec<(usize, Option<f64>)> = candidates
            .par_iter()
            .map(|&j| {
                let mut cols = selected.clone();
                cols.push(j);
                let x_sub = ds.x.select_columns(cols.iter());
                let score = loocv_regress(&x_sub, y).ok().map(|pred| rmse(y, &pred));
                (j, score)
            })
            .collect();

        // Deterministic winner: strict improvement scan in column order.
        let mut best: Option<(usize, f64)> = None;
        for (j, score) in scored {
            if let Some(s) = score {
                if best.map_or(true, |(_, b)| s < b) {
                    best = Some((j, s));
                }
            }
        }
        let Some((j, best_rmse)) = best else {
            break;
        };
        if current_rmse - best_rmse < min_improvement {
            break;
        }
        selected.push(j);
        current_rmse = best_rmse;
        steps.push(SelectionStep {
            feature: ds.feature_names[j].clone(),
            rank: steps.len() + 1,
            loocv_rmse: best_rmse,
        });
    }

    Ok(SelectionResult {
        baseline_rmse,
        steps,
    })
}
