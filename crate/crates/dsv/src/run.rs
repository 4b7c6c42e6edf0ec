//! Task instances: the train and test embeddings and the candidates to rank.

use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};
use crate::geometry::EmbeddingSet;

/// One augmentation-hyperparameter setting.
///
/// Retraining the encoder for a new setting changes every embedding, so a
/// candidate may carry its own train and test embeddings; when absent the
/// run-level sets are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub hp_value: f64,
    pub aug: EmbeddingSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trn: Option<EmbeddingSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<EmbeddingSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl CandidateModel {
    pub fn new(hp_value: f64, aug: EmbeddingSet) -> Self {
        Self {
            hp_value,
            aug,
            trn: None,
            test: None,
            scores: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRun {
    pub task_id: String,
    pub trn: EmbeddingSet,
    pub test: EmbeddingSet,
    /// `true` marks an anomaly.
    pub labels: Option<Vec<bool>>,
    pub candidates: Vec<CandidateModel>,
}

impl SelectionRun {
    pub fn dim(&self) -> usize {
        self.trn.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(DsvError::Empty("candidate list"));
        }
        let dim = self.dim();
        let check = |what: String, set: &EmbeddingSet| -> Result<()> {
            if set.dim() != dim {
                return Err(DsvError::Precondition(format!(
                    "{what} has dimension {}, run dimension is {dim}",
                    set.dim()
                )));
            }
            Ok(())
        };
        check("test set".into(), &self.test)?;
        let n_test = self.test.len();
        if let Some(labels) = &self.labels {
            if labels.len() != n_test {
                return Err(DsvError::Precondition(format!(
                    "{} labels for {n_test} test vectors",
                    labels.len()
                )));
            }
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if !(c.hp_value.is_finite() && c.hp_value > 0.0) {
                return Err(DsvError::Precondition(format!(
                    "candidate {i}: hyperparameter {} is not a positive finite number",
                    c.hp_value
                )));
            }
            check(format!("candidate {i} augmented set"), &c.aug)?;
            if let Some(t) = &c.trn {
                check(format!("candidate {i} train set"), t)?;
            }
            if let Some(t) = &c.test {
                check(format!("candidate {i} test set"), t)?;
                if t.len() != n_test {
                    return Err(DsvError::Precondition(format!(
                        "candidate {i} test set has {} vectors, run has {n_test}",
                        t.len()
                    )));
                }
            }
            if let Some(s) = &c.scores {
                if s.len() != n_test {
                    return Err(DsvError::Precondition(format!(
                        "candidate {i} has {} scores for {n_test} test vectors",
                        s.len()
                    )));
                }
                if let Some(j) = s.iter().position(|v| !v.is_finite()) {
                    return Err(DsvError::Precondition(format!("candidate {i}: score {j} is not finite")));
                }
            }
        }
        Ok(())
    }

    /// The label-free view handed to selectors.
    pub fn view(&self) -> RunView<'_> {
        RunView {
            task_id: &self.task_id,
            trn: &self.trn,
            test: &self.test,
            candidates: &self.candidates,
        }
    }

    pub fn hp_grid(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.hp_value).collect()
    }
}

/// Everything a selector may look at. There is deliberately no way to reach
/// the labels from here.
#[derive(Debug, Clone, Copy)]
pub struct RunView<'a> {
    pub task_id: &'a str,
    pub trn: &'a EmbeddingSet,
    pub test: &'a EmbeddingSet,
    pub candidates: &'a [CandidateModel],
}

impl<'a> RunView<'a> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn trn_for(&self, i: usize) -> &'a EmbeddingSet {
        self.candidates[i].trn.as_ref().unwrap_or(self.trn)
    }

    pub fn test_for(&self, i: usize) -> &'a EmbeddingSet {
        self.candidates[i].test.as_ref().unwrap_or(self.test)
    }
}
