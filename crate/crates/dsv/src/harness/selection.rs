//! Running every selector on one task and assembling the report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    evaluate_average, extreme, select_base, select_hits, select_mc, select_mmd, select_random, select_sel, select_std,
    Direction, Method, ScoreMatrix, SelectorResult,
};
use crate::error::{DsvError, Result};
use crate::harness::metrics::auc;
use crate::harness::scoring::score_candidates;
use crate::loss::{alignment_loss, l_val_with, LossBreakdown, SepClamp};
use crate::run::{RunView, SelectionRun};
use crate::theory::split_by_labels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub seed: u64,
    pub sep_clamp: SepClamp,
    /// Gaussian components for likelihood scoring when candidates carry no
    /// scores of their own.
    pub components: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            sep_clamp: SepClamp::Max,
            components: 1,
        }
    }
}

/// Label-free part of a selection: what the selectors decided.
#[derive(Debug)]
pub struct Selection {
    pub losses: Vec<Result<LossBreakdown>>,
    pub results: Vec<SelectorResult>,
    pub scores: Option<ScoreMatrix>,
}

fn dsv_losses(view: &RunView<'_>, clamp: SepClamp) -> Vec<Result<LossBreakdown>> {
    (0..view.len())
        .into_par_iter()
        .map(|i| l_val_with(view.trn_for(i), &view.candidates[i].aug, view.test_for(i), clamp))
        .collect()
}

/// Runs the requested selectors. Only the label-free view is consulted.
pub fn select(view: &RunView<'_>, methods: &[Method], opts: &SelectionOptions) -> Result<Selection> {
    if view.is_empty() {
        return Err(DsvError::Empty("candidate list"));
    }
    let losses = dsv_losses(view, opts.sep_clamp);
    let needs_scores = methods.iter().any(|m| m.uses_scores());
    let scores = if needs_scores {
        Some(score_candidates(view, opts.components)?)
    } else {
        None
    };
    let single = view.len() == 1;
    let mut results = Vec::new();
    for &m in methods {
        let r = match m {
            Method::Avg => continue,
            Method::Dsv => {
                let crit: Vec<Option<f64>> = losses.iter().map(|l| l.as_ref().ok().map(|b| b.l_val)).collect();
                if crit.iter().all(Option::is_none) {
                    let reasons = losses
                        .iter()
                        .enumerate()
                        .filter_map(|(i, l)| l.as_ref().err().map(|e| format!("candidate {i}: {e}")))
                        .collect();
                    return Err(DsvError::NoValidCandidate(reasons));
                }
                SelectorResult {
                    method: Method::Dsv,
                    chosen_index: extreme(&crit, Direction::Minimize),
                    per_candidate_criterion: crit,
                    direction: Direction::Minimize,
                }
            }
            Method::Base => select_base(view)?,
            Method::Mmd => select_mmd(view)?,
            Method::Std => select_std(view)?,
            Method::Rand => select_random(view.len(), opts.seed)?,
            Method::Mc | Method::Sel if single => trivial(m),
            Method::Mc => select_mc(scores.as_ref().expect("scores computed"))?,
            Method::Sel => select_sel(scores.as_ref().expect("scores computed"))?,
            Method::Hits => select_hits(scores.as_ref().expect("scores computed"))?,
        };
        results.push(r);
    }
    Ok(Selection { losses, results, scores })
}

/// With one candidate there is nothing to compare; it is selected.
fn trivial(method: Method) -> SelectorResult {
    SelectorResult {
        method,
        chosen_index: Some(0),
        per_candidate_criterion: vec![None],
        direction: Direction::Maximize,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: Method,
    pub direction: Option<Direction>,
    pub chosen_index: Option<usize>,
    pub chosen_hp: Option<f64>,
    /// AUC of the chosen candidate, or the mean over candidates for `avg`.
    pub realized_auc: Option<f64>,
    pub criterion: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub hp: f64,
    pub l_dis: Option<f64>,
    pub l_sep: Option<f64>,
    pub l_val: Option<f64>,
    pub alignment: Option<f64>,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub task_id: String,
    pub seed: u64,
    pub sep_clamp: SepClamp,
    pub components: usize,
    pub labeled: bool,
    pub methods: Vec<MethodRecord>,
    pub candidates: Vec<CandidateRecord>,
    pub notes: Vec<String>,
}

pub const RANDOM_NOTE: &str =
    "rand draws one candidate uniformly with a seeded generator instead of resampling the hyperparameter per inference";

/// Selects with every requested method, then (if labels are present)
/// attaches realized AUCs and alignment values for evaluation.
pub fn run_selection(run: &SelectionRun, methods: &[Method], opts: &SelectionOptions) -> Result<SelectionReport> {
    run.validate()?;
    let view = run.view();
    let mut wanted: Vec<Method> = methods.to_vec();
    let labels = run.labels.as_deref();
    if labels.is_none() {
        wanted.retain(|m| *m != Method::Avg);
    }
    // scores are needed for AUCs even when no score-based selector runs
    let mut sel = select(&view, &wanted, opts)?;
    if labels.is_some() && sel.scores.is_none() {
        sel.scores = Some(score_candidates(&view, opts.components)?);
    }

    let aucs: Option<Vec<f64>> = match (labels, &sel.scores) {
        (Some(l), Some(s)) => Some(s.scores.iter().map(|row| auc(row, l)).collect::<Result<_>>()?),
        _ => None,
    };

    let mut candidates = Vec::with_capacity(view.len());
    for (i, c) in run.candidates.iter().enumerate() {
        let loss = &sel.losses[i];
        let alignment = match labels {
            Some(l) => {
                let (_, anomalies) = split_by_labels(view.test_for(i), l)?;
                anomalies.map(|a| alignment_loss(&c.aug, &a)).transpose()?
            }
            None => None,
        };
        candidates.push(CandidateRecord {
            index: i,
            hp: c.hp_value,
            l_dis: loss.as_ref().ok().map(|b| b.l_dis),
            l_sep: loss.as_ref().ok().map(|b| b.l_sep),
            l_val: loss.as_ref().ok().map(|b| b.l_val),
            alignment,
            auc: aucs.as_ref().map(|a| a[i]),
            error: loss.as_ref().err().map(ToString::to_string),
        });
    }

    let mut records = Vec::new();
    let mut results = sel.results.into_iter();
    for &m in &wanted {
        if m == Method::Avg {
            let mean = aucs.as_deref().map(evaluate_average).transpose()?;
            records.push(MethodRecord {
                method: m,
                direction: None,
                chosen_index: None,
                chosen_hp: None,
                realized_auc: mean,
                criterion: Vec::new(),
            });
            continue;
        }
        let r = results.next().expect("one result per non-avg method");
        records.push(MethodRecord {
            method: r.method,
            direction: Some(r.direction),
            chosen_index: r.chosen_index,
            chosen_hp: r.chosen_index.map(|i| run.candidates[i].hp_value),
            realized_auc: match (&aucs, r.chosen_index) {
                (Some(a), Some(i)) => Some(a[i]),
                _ => None,
            },
            criterion: r.per_candidate_criterion,
        });
    }

    let mut notes = Vec::new();
    if wanted.contains(&Method::Rand) {
        notes.push(RANDOM_NOTE.to_string());
    }
    if opts.sep_clamp == SepClamp::Min {
        notes.push("dsv uses min(l_sep, 1/2) in place of max(l_sep, 1/2)".to_string());
    }
    Ok(SelectionReport {
        task_id: run.task_id.clone(),
        seed: opts.seed,
        sep_clamp: opts.sep_clamp,
        components: opts.components,
        labeled: labels.is_some(),
        methods: records,
        candidates,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EmbeddingSet;
    use crate::run::CandidateModel;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn single_candidate_selected_by_everyone() {
        let run = SelectionRun {
            task_id: "one".into(),
            trn: set(&[&[0.0, 0.0], &[1.0, 0.5], &[0.2, 1.0]]),
            test: set(&[&[0.1, 0.1], &[3.0, 0.0], &[0.5, 0.7]]),
            labels: Some(vec![false, true, false]),
            candidates: vec![CandidateModel::new(0.5, set(&[&[3.0, 0.0], &[4.0, 0.5], &[3.2, 1.0]]))],
        };
        let rep = run_selection(&run, &Method::ALL, &SelectionOptions::default()).unwrap();
        for m in &rep.methods {
            if m.method != Method::Avg {
                assert_eq!(m.chosen_index, Some(0), "{:?}", m.method);
            }
        }
        assert_eq!(rep.methods[0].realized_auc, rep.candidates[0].auc);
    }

    #[test]
    fn degenerate_candidates_are_listed() {
        let p = set(&[&[0.0, 0.0]]);
        let run = SelectionRun {
            task_id: "bad".into(),
            trn: p.clone(),
            test: p.clone(),
            labels: None,
            candidates: vec![CandidateModel::new(1.0, p.clone()), CandidateModel::new(2.0, p)],
        };
        match run_selection(&run, &[Method::Dsv], &SelectionOptions::default()) {
            Err(DsvError::NoValidCandidate(reasons)) => {
                assert_eq!(reasons.len(), 2);
                assert!(reasons[1].starts_with("candidate 1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unlabeled_run_omits_evaluation_fields() {
        let run = SelectionRun {
            task_id: "u".into(),
            trn: set(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]),
            test: set(&[&[0.5, 0.5], &[2.0, 2.0]]),
            labels: None,
            candidates: vec![
                CandidateModel::new(1.0, set(&[&[2.0, 2.0], &[3.0, 2.0], &[2.0, 3.0]])),
                CandidateModel::new(2.0, set(&[&[9.0, 9.0], &[10.0, 9.0], &[9.0, 10.0]])),
            ],
        };
        let rep = run_selection(&run, &Method::ALL, &SelectionOptions::default()).unwrap();
        assert!(!rep.labeled);
        assert!(rep.methods.iter().all(|m| m.method != Method::Avg && m.realized_auc.is_none()));
        assert!(rep.candidates.iter().all(|c| c.auc.is_none() && c.alignment.is_none()));
        assert_eq!(rep.notes.len(), 1);
    }
}
