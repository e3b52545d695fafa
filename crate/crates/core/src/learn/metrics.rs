//! Evaluation metrics: Pearson correlation, MAE, RMSE, confusion counts,
//! ROC sweep, and rank-statistic AUC.

use serde::{Deserialize, Serialize};

use super::{check_labels, LearnError};

/// Regression agreement metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressMetrics {
    pub r: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Pearson r, mean absolute error, and root-mean-square error between
/// targets and predictions.
pub fn metrics_regress(y: &[f64], pred: &[f64]) -> Result<RegressMetrics, LearnError> {
    if y.len() != pred.len() {
        return Err(LearnError::LengthMismatch {
            left: y.len(),
            right: pred.len(),
        });
    }
    let n = y.len();
    if n < 2 {
        return Err(LearnError::TooFewSamples { n, min: 2 });
    }
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mean_p = pred.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_y = 0.0;
    let mut var_p = 0.0;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for i in 0..n {
        let dy = y[i] - mean_y;
        let dp = pred[i] - mean_p;
        cov += dy * dp;
        var_y += dy * dy;
        var_p += dp * dp;
        let e = y[i] - pred[i];
        abs_sum += e.abs();
        sq_sum += e * e;
    }
    if var_y == 0.0 {
        return Err(LearnError::ZeroVariance {
            what: "targets".to_string(),
        });
    }
    if var_p == 0.0 {
        return Err(LearnError::ZeroVariance {
            what: "predictions".to_string(),
        });
    }
    Ok(RegressMetrics {
        r: cov / (var_y.sqrt() * var_p.sqrt()),
        mae: abs_sum / n as f64,
        rmse: (sq_sum / n as f64).sqrt(),
    })
}

/// Root-mean-square error alone (used by the stepwise objective).
pub fn rmse(y: &[f64], pred: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), pred.len());
    let sq: f64 = y
        .iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sq / y.len() as f64).sqrt()
}

/// 2×2 classification counts with the positive class = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

/// Counts outcomes by (true label, predicted label).
pub fn confusion(labels: &[u8], predicted: &[u8]) -> Result<Confusion, LearnError> {
    if labels.len() != predicted.len() {
        return Err(LearnError::LengthMismatch {
            left: labels.len(),
            right: predicted.len(),
        });
    }
    if let Some(&bad) = labels.iter().chain(predicted).find(|&&l| l > 1) {
        return Err(LearnError::BadLabel { value: bad });
    }
    let mut c = Confusion {
        true_positive: 0,
        false_positive: 0,
        false_negative: 0,
        true_negative: 0,
    };
    for (&t, &p) in labels.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => c.true_positive += 1,
            (0, 1) => c.false_positive += 1,
            (1, 0) => c.false_negative += 1,
            (0, 0) => c.true_negative += 1,
            _ => unreachable!("labels validated"),
        }
    }
    Ok(c)
}

/// One operating point of the ROC sweep. `threshold` is `None` for the
/// initial predict-nothing point (conceptually +∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: Option<f64>,
}

/// ROC points over all distinct score thresholds (descending) and the AUC by
/// the Mann–Whitney rank statistic with ties counted half. The rank form
/// equals trapezoidal integration of the swept curve.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<(Vec<RocPoint>, f64), LearnError> {
    if labels.len() != scores.len() {
        return Err(LearnError::LengthMismatch {
            left: labels.len(),
            right: scores.len(),
        });
    }
    check_labels(labels)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(LearnError::NonFinite { row: i, col: 0 });
    }

    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;

    // Sweep: predict positive where score ≥ threshold, thresholds at each
    // distinct score from high to low.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores checked finite")
            .then(a.cmp(&b))
    });
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: Some(t),
        });
    }

    // Rank statistic with average ranks for ties.
    let mut asc: Vec<usize> = (0..labels.len()).collect();
    asc.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("scores checked finite")
            .then(a.cmp(&b))
    });
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < asc.len() {
        let t = scores[asc[i]];
        let start = i;
        while i < asc.len() && scores[asc[i]] == t {
            i += 1;
        }
        // 1-based ranks start+1 ..= i share the average rank.
        let avg_rank = (start + 1 + i) as f64 / 2.0;
        for &idx in &asc[start..i] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let auc = u / (n_pos as f64 * n_neg as f64);

    Ok((points, auc))
}

/// Trapezoidal area under a swept ROC point list.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}
