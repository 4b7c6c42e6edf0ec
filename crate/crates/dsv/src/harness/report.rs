//! Report envelope and plain-text rendering.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::harness::evaluate::EvaluationReport;
use crate::harness::selection::SelectionReport;
use crate::theory::VerifyReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Selection(SelectionReport),
    Evaluation(EvaluationReport),
    Verify(VerifyReport),
}

/// A report together with the schema version it was written with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: Report,
}

impl Envelope {
    pub fn new(report: Report) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            report,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:.prec$}"),
        None => "-".to_string(),
    }
}

/// Left-aligned first column, right-aligned rest, two-space gutters.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let mut first = true;
        let mut buf = String::new();
        for (i, c) in cells.enumerate() {
            if first {
                let _ = write!(buf, "{c:<w$}", w = widths[i]);
                first = false;
            } else {
                let _ = write!(buf, "  {c:>w$}", w = widths[i]);
            }
        }
        out.push_str(buf.trim_end());
        out.push('\n');
    };
    line(&mut out, &mut header.iter().copied());
    for r in rows {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    out
}

pub fn render_text(report: &Report) -> String {
    match report {
        Report::Selection(r) => render_selection(r),
        Report::Evaluation(r) => render_evaluation(r),
        Report::Verify(r) => render_verify(r),
    }
}

fn render_selection(r: &SelectionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "task {}  seed {}  clamp {}  components {}  labeled {}",
        r.task_id, r.seed, r.sep_clamp, r.components, r.labeled
    );
    out.push('\n');
    let rows: Vec<Vec<String>> = r
        .methods
        .iter()
        .map(|m| {
            vec![
                m.method.to_string(),
                m.chosen_index.map_or("-".into(), |i| i.to_string()),
                m.chosen_hp.map_or("-".into(), |h| h.to_string()),
                opt(m.realized_auc, 4),
            ]
        })
        .collect();
    out.push_str(&table(&["method", "chosen", "hp", "auc"], &rows));
    out.push('\n');
    let rows: Vec<Vec<String>> = r
        .candidates
        .iter()
        .map(|c| {
            vec![
                c.index.to_string(),
                c.hp.to_string(),
                opt(c.l_dis, 6),
                opt(c.l_sep, 6),
                opt(c.l_val, 6),
                opt(c.alignment, 4),
                opt(c.auc, 4),
                c.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.push_str(&table(
        &["index", "hp", "l_dis", "l_sep", "l_val", "alignment", "auc", "error"],
        &rows,
    ));
    for n in &r.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

fn render_evaluation(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let Some(first) = r.tables.first() else {
        return out;
    };
    let mut header: Vec<&str> = vec!["table"];
    header.extend(first.methods.iter().map(String::as_str));
    let _ = writeln!(out, "mean AUC");
    let rows: Vec<Vec<String>> = r
        .tables
        .iter()
        .map(|t| std::iter::once(t.name.clone()).chain(t.mean_auc.iter().map(|v| format!("{v:.4}"))).collect())
        .collect();
    out.push_str(&table(&header, &rows));
    let _ = writeln!(out, "\naverage rank (1 = best)");
    let rows: Vec<Vec<String>> = r
        .tables
        .iter()
        .map(|t| std::iter::once(t.name.clone()).chain(t.average_rank.iter().map(|v| format!("{v:.3}"))).collect())
        .collect();
    out.push_str(&table(&header, &rows));
    let _ = writeln!(out, "\none-sided signed-rank test, {} > baseline", r.reference);
    let rows: Vec<Vec<String>> = r
        .comparisons
        .iter()
        .map(|c| {
            vec![
                c.table.clone().unwrap_or_else(|| "pooled".into()),
                c.baseline.clone(),
                c.pairs.to_string(),
                c.result.n.to_string(),
                format!("{}", c.result.statistic),
                format!("{:.3e}", c.result.p_value),
            ]
        })
        .collect();
    out.push_str(&table(&["table", "baseline", "pairs", "nonzero", "w_plus", "p_value"], &rows));
    out
}

fn render_verify(r: &VerifyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed {}  instances {}", r.seed, r.instances);
    let rows: Vec<Vec<String>> = r
        .families
        .iter()
        .map(|f| {
            vec![
                f.family.clone(),
                if f.certified { "yes" } else { "info" }.into(),
                f.instances.to_string(),
                f.passed.to_string(),
                f.failed.to_string(),
                format!("{:.3e}", f.max_violation),
            ]
        })
        .collect();
    out.push_str(&table(&["family", "certified", "instances", "passed", "failed", "max_violation"], &rows));
    for f in r.families.iter().filter(|f| !f.counterexamples.is_empty()) {
        let _ = writeln!(out, "\n{}: {}", f.family, f.statement);
        for c in &f.counterexamples {
            let _ = writeln!(out, "  {c}");
        }
    }
    let _ = writeln!(
        out,
        "\nverdict: {}",
        if r.all_certified_pass { "all certified families pass" } else { "FAILED" }
    );
    out
}
