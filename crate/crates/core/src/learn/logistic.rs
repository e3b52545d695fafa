//! Ridge-penalized logistic regression fit by iteratively reweighted least
//! squares with step halving.
//!
//! Features are standardized internally (training mean, population standard
//! deviation), the ridge penalizes standardized weights only, and the
//! intercept is never penalized.

use nalgebra::{DMatrix, DVector};

use super::{check_finite, check_labels, LearnError};

/// Default ridge stabilizer for the logistic solver.
pub const LOGISTIC_DEFAULT_RIDGE: f64 = 1e-8;

const MAX_ITERATIONS: usize = 100;
const PARAM_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;
const WEIGHT_FLOOR: f64 = 1e-10;

/// A fitted logistic model; weights live in standardized feature space.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    /// Linear decision value wᵀz + b on the standardized row.
    pub fn decision(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.weights.len());
        let mut acc = self.intercept;
        for j in 0..row.len() {
            acc += self.weights[j] * (row[j] - self.means[j]) / self.scales[j];
        }
        acc
    }

    /// P(label = 1 | row).
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^eta) without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood of parameters `beta` (weights then
/// intercept) on standardized design `z`.
fn penalized_nll(z: &DMatrix<f64>, labels: &[u8], beta: &DVector<f64>, ridge: f64) -> f64 {
    let p = z.ncols() - 1;
    let mut nll = 0.0;
    for i in 0..z.nrows() {
        let eta: f64 = (0..z.ncols()).map(|j| z[(i, j)] * beta[j]).sum();
        nll += log1p_exp(eta) - f64::from(labels[i]) * eta;
    }
    let w2: f64 = (0..p).map(|j| beta[j] * beta[j]).sum();
    nll + 0.5 * ridge * w2
}

/// Maximizes the ridge-penalized log-likelihood. A model that fails to
/// converge within 100 iterations is still returned, flagged through
/// `converged` so callers can warn.
pub fn logistic_fit(
    x: &DMatrix<f64>,
    labels: &[u8],
    ridge: f64,
) -> Result<LogisticModel, LearnError> {
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
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LearnError::BadParameter {
            message: format!("ridge must be finite and non-negative, got {ridge}"),
        });
    }

    // Population (1/n) standard deviation keeps the standardization — and so
    // the decision function — invariant under dataset duplication.
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for j in 0..p {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (x[(i, j)] - mean) * (x[(i, j)] - mean))
            .sum::<f64>()
            / n as f64;
        means[j] = mean;
        if var > 0.0 {
            scales[j] = var.sqrt();
        }
    }

    let mut z = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = (x[(i, j)] - means[j]) / scales[j];
        }
        z[(i, p)] = 1.0;
    }

    let mut beta = DVector::zeros(p + 1);
    let mut nll = penalized_nll(&z, labels, &beta, ridge);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        // Gradient of the penalized NLL: Zᵀ(p − y) + ridge·w (intercept
        // unpenalized). Newton direction solves H d = −g.
        let mut grad = DVector::zeros(p + 1);
        let mut probs = vec![0.0; n];
        for i in 0..n {
            let eta: f64 = (0..=p).map(|j| z[(i, j)] * beta[j]).sum();
            probs[i] = sigmoid(eta);
            let diff = probs[i] - f64::from(labels[i]);
            for j in 0..=p {
                grad[j] += z[(i, j)] * diff;
            }
        }
        for j in 0..p {
            grad[j] += ridge * beta[j];
        }

        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let w = (probs[i] * (1.0 - probs[i])).max(WEIGHT_FLOOR);
            for a in 0..=p {
                let za = z[(i, a)] * w;
                for b in a..=p {
                    hess[(a, b)] += za * z[(i, b)];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for j in 0..p {
            hess[(j, j)] += ridge;
        }

        let direction = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => match hess.qr().solve(&(-&grad)) {
                Some(d) => d,
                None => break,
            },
        };

        // Step halving on the penalized objective.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta + &direction * step;
            let candidate_nll = penalized_nll(&z, labels, &candidate, ridge);
            if candidate_nll <= nll {
                let delta = (&candidate - &beta).abs().max();
                beta = candidate;
                nll = candidate_nll;
                accepted = true;
                if delta < PARAM_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No step improves the objective; declare convergence only if
            // the gradient is already negligible.
            converged = grad.abs().max() < 1e-6;
            break;
        }
        if converged {
            break;
        }
    }

    Ok(LogisticModel {
        means,
        scales,
        weights: (0..p).map(|j| beta[j]).collect(),
        intercept: beta[p],
        converged,
        iterations,
    })
}
