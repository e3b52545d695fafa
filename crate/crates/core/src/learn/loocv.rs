//! Leave-one-out cross-validation for regression and classification.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::logistic::logistic_fit;
use super::naive_bayes::nb_fit;
use super::ols::ols_fit;
use super::{check_labels, drop_row, LearnError};

/// Explicit leave-one-out: refit the model n times, each time predicting the
/// held-out row. Works for any ridge setting.
pub fn loocv_regress_explicit(
    x: &DMatrix<f64>,
    y: &[f64],
    ridge: f64,
) -> Result<Vec<f64>, LearnError> {
    let n = x.nrows();
    if n < 3 {
        return Err(LearnError::TooFewSamples { n, min: 3 });
    }
    if y.len() != n {
        return Err(LearnError::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let x_train = drop_row(x, i);
            let mut y_train = y.to_vec();
            y_train.remove(i);
            let model = ols_fit(&x_train, &y_train, ridge).map_err(|e| LearnError::Fold {
                fold: i,
                source: Box::new(e),
            })?;
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            Ok(model.predict_row(&row))
        })
        .collect()
}

/// Leave-one-out for pure OLS via the hat-matrix shortcut: one fit, then
/// pred_i = y_i − e_i / (1 − h_ii). Agrees with the explicit path to high
/// precision and is what the stepwise search leans on.
pub fn loocv_regress(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>, LearnError> {
    let n = x.nrows();
    if n < 3 {
        return Err(LearnError::TooFewSamples { n, min: 3 });
    }
    let model = ols_fit(x, y, 0.0)?;
    let hat = model.hat_diag.as_ref().expect("ridge-free fit retains hat");
    let fitted = model.fitted.as_ref().expect("ridge-free fit retains fits");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let denom = 1.0 - hat[i];
        if denom <= 1e-10 {
            return Err(LearnError::FullLeverage { fold: i });
        }
        let e = y[i] - fitted[i];
        out.push(y[i] - e / denom);
    }
    Ok(out)
}

/// Classifier family to cross-validate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Logistic,
    NaiveBayes,
}

/// Per-subject LOOCV scores and 0.5-threshold labels, plus any fold-level
/// warnings (for example logistic non-convergence).
#[derive(Debug, Clone)]
pub struct ClassifyOutput {
    pub scores: Vec<f64>,
    pub predicted: Vec<u8>,
    pub warnings: Vec<String>,
}

/// Leave-one-out classification. `ridge` applies to the logistic model only.
pub fn loocv_classify(
    x: &DMatrix<f64>,
    labels: &[u8],
    kind: ClassifierKind,
    ridge: f64,
) -> Result<ClassifyOutput, LearnError> {
    let n = x.nrows();
    if n < 4 {
        return Err(LearnError::TooFewSamples { n, min: 4 });
    }
    if labels.len() != n {
        return Err(LearnError::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    check_labels(labels)?;

    // Every training fold must retain both classes; report the first
    // offending fold deterministically before any fitting starts.
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = n - pos;
    for (i, &l) in labels.iter().enumerate() {
        let lost = (l == 1 && pos == 1) || (l == 0 && neg == 1);
        if lost {
            return Err(LearnError::FoldLostClass { fold: i, label: l });
        }
    }

    let folds: Result<Vec<(f64, Option<String>)>, LearnError> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x_train = drop_row(x, i);
            let mut y_train = labels.to_vec();
            y_train.remove(i);
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            match kind {
                ClassifierKind::Logistic => {
                    let model =
                        logistic_fit(&x_train, &y_train, ridge).map_err(|e| LearnError::Fold {
                            fold: i,
                            source: Box::new(e),
                        })?;
                    let warning = (!model.converged).then(|| {
                        format!("fold {i}: logistic regression did not converge within 100 iterations")
                    });
                    Ok((model.predict_proba(&row), warning))
                }
                ClassifierKind::NaiveBayes => {
                    let model = nb_fit(&x_train, &y_train).map_err(|e| LearnError::Fold {
                        fold: i,
                        source: Box::new(e),
                    })?;
                    Ok((model.predict_proba(&row), None))
                }
            }
        })
        .collect();
    let folds = folds?;

    let scores: Vec<f64> = folds.iter().map(|(s, _)| *s).collect();
    let predicted: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    let warnings: Vec<String> = folds.into_iter().filter_map(|(_, w)| w).collect();
    Ok(ClassifyOutput {
        scores,
        predicted,
        warnings,
    })
}
