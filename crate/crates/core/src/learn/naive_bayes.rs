//! Gaussian naive Bayes with empirical priors and a per-feature variance
//! floor tied to the feature's global variance.

use nalgebra::DMatrix;

use super::{check_finite, check_labels, LearnError};

const FLOOR_FACTOR: f64 = 1e-9;
const FLOOR_EPS: f64 = 1e-12;

/// Per-class Gaussian parameters; index 0 = negative class, 1 = positive.
#[derive(Debug, Clone)]
pub struct NbModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

impl NbModel {
    fn class_log_posterior(&self, row: &[f64], class: usize) -> f64 {
        let mut lp = self.priors[class].ln();
        for j in 0..row.len() {
            let mu = self.means[class][j];
            let var = self.variances[class][j];
            let d = row[j] - mu;
            lp += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
        }
        lp
    }

    /// P(label = 1 | row), accumulated in log space.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let lp0 = self.class_log_posterior(row, 0);
        let lp1 = self.class_log_posterior(row, 1);
        // sigmoid(lp1 − lp0) without overflow.
        let d = lp1 - lp0;
        if d >= 0.0 {
            1.0 / (1.0 + (-d).exp())
        } else {
            let e = d.exp();
            e / (1.0 + e)
        }
    }
}

/// Estimates priors and per-class per-feature sample mean/variance. Each
/// variance is floored at 1e-9 × (global feature variance + 1e-12) so a
/// zero-spread feature cannot produce a division error.
pub fn nb_fit(x: &DMatrix<f64>, labels: &[u8]) -> Result<NbModel, LearnError> {
    let n = x.nrows();
    let p = x.ncols();
    if labels.len() != n {
        return Err(LearnError::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    check_labels(labels)?;
    check_finite(x)?;
    for class in [0u8, 1u8] {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count < 2 {
            return Err(LearnError::ClassTooSmall {
                label: class,
                count,
            });
        }
    }

    let mut means = [vec![0.0; p], vec![0.0; p]];
    let mut variances = [vec![0.0; p], vec![0.0; p]];
    let counts = [
        labels.iter().filter(|&&l| l == 0).count(),
        labels.iter().filter(|&&l| l == 1).count(),
    ];
    for class in 0..2 {
        for j in 0..p {
            let values: Vec<f64> = (0..n)
                .filter(|&i| usize::from(labels[i]) == class)
                .map(|i| x[(i, j)])
                .collect();
            let mean = values.iter().sum::<f64>() / counts[class] as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (counts[class] - 1) as f64;
            means[class][j] = mean;
            variances[class][j] = var;
        }
    }

    // Global per-feature sample variance sets the floor scale.
    for j in 0..p {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let global_var = (0..n)
            .map(|i| (x[(i, j)] - mean) * (x[(i, j)] - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        let floor = FLOOR_FACTOR * (global_var + FLOOR_EPS);
        for class_vars in &mut variances {
            if class_vars[j] < floor {
                class_vars[j] = floor;
            }
        }
    }

    Ok(NbModel {
        priors: [
            counts[0] as f64 / n as f64,
            counts[1] as f64 / n as f64,
        ],
        means,
        variances,
    })
}
