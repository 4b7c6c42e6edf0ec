//! Unsupervised selection of self-supervised anomaly-detection candidates.
//!
//! Each candidate is one augmentation-hyperparameter setting, represented by
//! its embedding sets. [`loss::l_val`] scores how well a candidate's
//! augmentation is aligned with the (unseen) anomalies using only unlabeled
//! test embeddings; the candidate with the smallest loss is selected.
//! [`baselines`] implements the comparison selectors, [`harness`] the
//! evaluation statistics, [`theory`] numerical certificates for the bounds
//! that motivate the loss, and [`synth`] a synthetic embedding world.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod loss;
pub mod run;
pub mod synth;
pub mod theory;

pub use baselines::{Direction, Method, ScoreMatrix, SelectorResult};
pub use error::{DsvError, Result};
pub use geometry::EmbeddingSet;
pub use harness::EvaluationTable;
pub use loss::{LossBreakdown, SepClamp};
pub use run::{CandidateModel, RunView, SelectionRun};
pub use synth::SynthConfig;
