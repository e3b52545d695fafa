//! Ordinary least squares with an optional ridge penalty, solved by QR
//! factorization of the intercept-augmented design matrix.

use nalgebra::{DMatrix, DVector};

use super::{check_finite, LearnError};

/// A fitted linear model. When fitted without ridge, the training-data hat
/// diagonal and fitted values are retained for the leave-one-out shortcut.
#[derive(Debug, Clone)]
pub struct OlsModel {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub(crate) hat_diag: Option<Vec<f64>>,
    pub(crate) fitted: Option<Vec<f64>>,
}

impl OlsModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.weights.len());
        self.weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.intercept
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect()
    }
}

/// Minimizes ‖y − Xw − b‖² + ridge·‖w‖² (intercept unpenalized). The ridge
/// rows are appended to the design matrix so one QR factorization covers
/// both cases.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<OlsModel, LearnError> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(LearnError::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LearnError::BadParameter {
            message: format!("ridge must be finite and non-negative, got {ridge}"),
        });
    }
    if ridge == 0.0 && n <= p {
        return Err(LearnError::TooFewSamples { n, min: p + 1 });
    }
    check_finite(x)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite { row: i, col: 0 });
    }

    let m = p + 1;
    let rows = if ridge > 0.0 { n + p } else { n };
    let mut a = DMatrix::zeros(rows, m);
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = x[(i, j)];
        }
        a[(i, p)] = 1.0;
    }
    if ridge > 0.0 {
        let s = ridge.sqrt();
        for j in 0..p {
            a[(n + j, j)] = s;
        }
    }
    let mut b = DVector::zeros(rows);
    for i in 0..n {
        b[i] = y[i];
    }

    let qr = a.qr();
    let q = qr.q();
    let r = qr.r();

    let r_max = (0..m).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let tol = f64::EPSILON * rows.max(m) as f64 * r_max;
    if (0..m).any(|i| r[(i, i)].abs() <= tol) {
        return Err(LearnError::Singular);
    }

    let qtb = q.transpose() * &b;
    let mut z = DVector::zeros(m);
    for i in (0..m).rev() {
        let mut s = qtb[i];
        for j in i + 1..m {
            s -= r[(i, j)] * z[j];
        }
        z[i] = s / r[(i, i)];
    }

    let weights = DVector::from_iterator(p, (0..p).map(|j| z[j]));
    let intercept = z[p];

    let (hat_diag, fitted) = if ridge == 0.0 {
        // Thin-Q rows give the hat diagonal: H = QQᵀ, h_ii = ‖q_i‖².
        let hat: Vec<f64> = (0..n)
            .map(|i| (0..m).map(|j| q[(i, j)] * q[(i, j)]).sum())
            .collect();
        let fit: Vec<f64> = (0..n)
            .map(|i| {
                (0..p).map(|j| x[(i, j)] * weights[j]).sum::<f64>() + intercept
            })
            .collect();
        (Some(hat), Some(fit))
    } else {
        (None, None)
    };

    Ok(OlsModel {
        weights,
        intercept,
        hat_diag,
        fitted,
    })
}
