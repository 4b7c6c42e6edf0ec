//! Candidate orchestration, anomaly scoring, and evaluation statistics.

pub mod evaluate;
pub mod metrics;
pub mod report;
pub mod scoring;
pub mod selection;
pub mod wilcoxon;

pub use evaluate::{evaluate_tables, EvaluationReport};
pub use metrics::{aggregate_results, auc, average_rank, spearman, EvaluationTable};
pub use scoring::{gaussian_score, score_candidates, GaussianModel};
pub use selection::{run_selection, select, SelectionOptions, SelectionReport};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
