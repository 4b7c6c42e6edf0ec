use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};

/// Methods × tasks AUC values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub methods: Vec<String>,
    pub tasks: Vec<String>,
    /// `auc[m][t]` for method `m` on task `t`.
    pub auc: Vec<Vec<f64>>,
}

impl EvaluationTable {
    pub fn new(methods: Vec<String>, tasks: Vec<String>, auc: Vec<Vec<f64>>) -> Result<Self> {
        if methods.is_empty() || tasks.is_empty() {
            return Err(DsvError::Empty("evaluation table"));
        }
        if auc.len() != methods.len() {
            return Err(DsvError::Precondition(format!(
                "{} AUC rows for {} methods",
                auc.len(),
                methods.len()
            )));
        }
        for (m, row) in auc.iter().enumerate() {
            if row.len() != tasks.len() {
                return Err(DsvError::Precondition(format!(
                    "method {} has {} values for {} tasks",
                    methods[m],
                    row.len(),
                    tasks.len()
                )));
            }
            if let Some(t) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(DsvError::Precondition(format!(
                    "method {} task {}: AUC {} outside [0, 1]",
                    methods[m], tasks[t], row[t]
                )));
            }
        }
        Ok(Self { methods, tasks, auc })
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    pub fn column(&self, method: &str) -> Option<&[f64]> {
        self.method_index(method).map(|i| self.auc[i].as_slice())
    }
}

/// Ranks (1-based, ascending values) with ties sharing their mean position.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney AUC: the probability that a random anomaly outscores a
/// random normal, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(DsvError::Precondition(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DsvError::SingleClass);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(DsvError::NonFinite { index: i, component: 0 });
    }
    let ranks = average_ranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean rank of each method over tasks; rank 1 is the highest AUC.
pub fn average_rank(table: &EvaluationTable) -> Vec<f64> {
    let m = table.methods.len();
    let mut sums = vec![0.0; m];
    for t in 0..table.tasks.len() {
        let negated: Vec<f64> = (0..m).map(|i| -table.auc[i][t]).collect();
        for (s, r) in sums.iter_mut().zip(average_ranks(&negated)) {
            *s += r;
        }
    }
    sums.iter().map(|s| s / table.tasks.len() as f64).collect()
}

/// Mean AUC of each method over tasks.
pub fn aggregate_results(table: &EvaluationTable) -> Vec<f64> {
    table
        .auc
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect()
}

/// Spearman rank correlation with tie-averaged ranks; zero when either side
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(DsvError::Precondition(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(DsvError::Precondition("at least two values are required".into()));
    }
    Ok(crate::baselines::pearson(&average_ranks(x), &average_ranks(y)))
}
