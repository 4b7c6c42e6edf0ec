//! Aggregate statistics over per-task AUC tables: mean AUC, average rank,
//! and signed-rank tests of one method against every other.

use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};
use crate::harness::metrics::{aggregate_results, average_rank, EvaluationTable};
use crate::harness::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub name: String,
    pub tasks: usize,
    pub methods: Vec<String>,
    pub mean_auc: Vec<f64>,
    pub average_rank: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `None` for the pooled test over all tables.
    pub table: Option<String>,
    pub baseline: String,
    pub pairs: usize,
    pub result: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub reference: String,
    pub tables: Vec<TableSummary>,
    pub comparisons: Vec<Comparison>,
}

pub fn summarize(name: &str, table: &EvaluationTable) -> TableSummary {
    TableSummary {
        name: name.to_string(),
        tasks: table.tasks.len(),
        methods: table.methods.clone(),
        mean_auc: aggregate_results(table),
        average_rank: average_rank(table),
    }
}

fn column<'t>(table: &'t EvaluationTable, method: &str, name: &str) -> Result<&'t [f64]> {
    table
        .column(method)
        .ok_or_else(|| DsvError::Precondition(format!("table {name} has no column '{method}'")))
}

/// Summaries of every table plus one-sided signed-rank tests of `reference`
/// against each other method, pooled over all tables and, if asked, per
/// table.
pub fn evaluate_tables(tables: &[(String, EvaluationTable)], reference: &str, per_table: bool) -> Result<EvaluationReport> {
    let (_, first) = tables.first().ok_or(DsvError::Empty("fixture table list"))?;
    let methods = &first.methods;
    for (name, t) in tables {
        if &t.methods != methods {
            return Err(DsvError::Precondition(format!("table {name} has a different method list")));
        }
    }
    column(first, reference, &tables[0].0)?;

    let summaries = tables.iter().map(|(n, t)| summarize(n, t)).collect();
    let mut comparisons = Vec::new();
    for baseline in methods.iter().filter(|m| *m != reference) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (name, t) in tables {
            let xs = column(t, reference, name)?;
            let ys = column(t, baseline, name)?;
            if per_table {
                comparisons.push(Comparison {
                    table: Some(name.clone()),
                    baseline: baseline.clone(),
                    pairs: xs.len(),
                    result: wilcoxon_signed_rank(xs, ys)?,
                });
            }
            x.extend_from_slice(xs);
            y.extend_from_slice(ys);
        }
        comparisons.push(Comparison {
            table: None,
            baseline: baseline.clone(),
            pairs: x.len(),
            result: wilcoxon_signed_rank(&x, &y)?,
        });
    }
    Ok(EvaluationReport {
        reference: reference.to_string(),
        tables: summaries,
        comparisons,
    })
}
