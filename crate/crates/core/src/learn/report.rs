//! Serializable report payloads shared by the command-line tools.

use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, RegressMetrics, RocPoint};
use super::stepwise::SelectionStep;

/// How a report came to be: tool identity, invocation, and input digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub args: Vec<String>,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub provenance: Provenance,
    pub features_used: Vec<String>,
    pub metrics: RegressMetrics,
    pub per_subject: Vec<SubjectPrediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject_id: String,
    pub label: u8,
    pub score: f64,
    pub predicted: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub provenance: Provenance,
    pub task: String,
    pub model: String,
    pub features_used: Vec<String>,
    pub confusion: Confusion,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub per_subject: Vec<SubjectScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub provenance: Provenance,
    pub baseline_rmse: f64,
    pub steps: Vec<SelectionStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}
