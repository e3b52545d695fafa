//! Statistical learning core: OLS regression, LOOCV, stepwise forward
//! selection, logistic regression, Gaussian naive Bayes, and evaluation
//! metrics.

mod logistic;
mod loocv;
mod metrics;
mod naive_bayes;
mod ols;
pub mod report;
mod stepwise;

pub use logistic::{logistic_fit, LogisticModel, LOGISTIC_DEFAULT_RIDGE};
pub use loocv::{loocv_classify, loocv_regress, loocv_regress_explicit, ClassifierKind, ClassifyOutput};
pub use metrics::{confusion, metrics_regress, rmse, roc_auc, trapezoid_auc, Confusion, RegressMetrics, RocPoint};
pub use naive_bayes::{nb_fit, NbModel};
pub use ols::{ols_fit, OlsModel};
pub use report::{
    ClassificationReport, InputDigest, Provenance, RegressionReport, SelectionReport,
    SubjectPrediction, SubjectScore,
};
pub use stepwise::{stepwise_select, SelectionResult, SelectionStep, DEFAULT_MIN_IMPROVEMENT};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("length mismatch: {left} rows vs {right} targets")]
    LengthMismatch { left: usize, right: usize },
    #[error("singular system; supply a positive ridge penalty to regularize")]
    Singular,
    #[error("leave-one-out prediction undefined for fold {fold} (leverage is 1)")]
    FullLeverage { fold: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<LearnError>,
    },
    #[error("labels must be 0 or 1, found {value}")]
    BadLabel { value: u8 },
    #[error("both classes must be present")]
    OneClass,
    #[error("training fold {fold} lost class {label} entirely")]
    FoldLostClass { fold: usize, label: u8 },
    #[error("class {label} has {count} sample(s); Gaussian estimates need at least 2")]
    ClassTooSmall { label: u8, count: usize },
    #[error("{what} has zero variance; Pearson correlation is undefined")]
    ZeroVariance { what: String },
    #[error("{message}")]
    BadParameter { message: String },
}

/// Feature matrix plus the names/ids that make rows and columns addressable.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n subjects × p features, columns in canonical feature order.
    pub x: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub subject_ids: Vec<String>,
}

impl Dataset {
    /// Checks shape agreement and rejects non-finite entries.
    pub fn validate(&self) -> Result<(), LearnError> {
        assert_eq!(self.x.ncols(), self.feature_names.len(), "column/name count");
        assert_eq!(self.x.nrows(), self.subject_ids.len(), "row/id count");
        check_finite(&self.x)?;
        Ok(())
    }

    /// Column index of a named feature.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// New dataset restricted to the named columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset, LearnError> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let idx = self.column(name).ok_or_else(|| LearnError::BadParameter {
                message: format!("unknown feature '{name}'"),
            })?;
            cols.push(idx);
        }
        Ok(Dataset {
            x: self.x.select_columns(&cols),
            feature_names: names.to_vec(),
            subject_ids: self.subject_ids.clone(),
        })
    }
}

pub(crate) fn check_finite(x: &DMatrix<f64>) -> Result<(), LearnError> {
    for col in 0..x.ncols() {
        for row in 0..x.nrows() {
            if !x[(row, col)].is_finite() {
                return Err(LearnError::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_labels(labels: &[u8]) -> Result<(), LearnError> {
    for &l in labels {
        if l > 1 {
            return Err(LearnError::BadLabel { value: l });
        }
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(LearnError::OneClass);
    }
    Ok(())
}

/// Removes row `i`, returning the remaining rows in order.
pub(crate) fn drop_row(x: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    x.clone().remove_row(i)
}
