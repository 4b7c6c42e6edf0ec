//! Comparison selectors.
//!
//! Embedding-based: `base` (argmin of the discordance surrogate), `mmd`,
//! `std` and `rand`. Score-based internal measures: `mc`, `sel`, `hits`,
//! which see only the candidates × samples score matrix. `avg` is not a
//! selector but the mean realized AUC over all candidates, used as a
//! reference row in evaluations.
//!
//! Ties always go to the lowest candidate index.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};
use crate::geometry::{check_dims, euclid, population_std, EmbeddingSet};
use crate::loss::l_dis_hat;
use crate::run::RunView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Avg,
    Rand,
    Base,
    Mmd,
    Std,
    Mc,
    Sel,
    Hits,
    Dsv,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Avg,
        Method::Rand,
        Method::Base,
        Method::Mmd,
        Method::Std,
        Method::Mc,
        Method::Sel,
        Method::Hits,
        Method::Dsv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Avg => "avg",
            Method::Rand => "rand",
            Method::Base => "base",
            Method::Mmd => "mmd",
            Method::Std => "std",
            Method::Mc => "mc",
            Method::Sel => "sel",
            Method::Hits => "hits",
            Method::Dsv => "dsv",
        }
    }

    /// Whether the method needs a score matrix rather than embeddings.
    pub fn uses_scores(self) -> bool {
        matches!(self, Method::Mc | Method::Sel | Method::Hits)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DsvError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DsvError::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorResult {
    pub method: Method,
    pub chosen_index: Option<usize>,
    /// `None` marks a candidate the criterion could not be computed for.
    pub per_candidate_criterion: Vec<Option<f64>>,
    pub direction: Direction,
}

impl SelectorResult {
    fn from_criterion(method: Method, direction: Direction, criterion: Vec<Option<f64>>) -> Self {
        Self {
            method,
            chosen_index: extreme(&criterion, direction),
            per_candidate_criterion: criterion,
            direction,
        }
    }
}

/// Index of the best defined value; the first one wins ties.
pub fn extreme(values: &[Option<f64>], direction: Direction) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        let better = match best {
            None => true,
            Some((_, b)) => match direction {
                Direction::Minimize => v < b,
                Direction::Maximize => v > b,
            },
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-candidate evaluation that records failure reasons.
fn per_candidate(
    view: &RunView<'_>,
    f: impl Fn(usize) -> Result<f64> + Sync + Send,
) -> (Vec<Option<f64>>, Vec<String>) {
    let results: Vec<Result<f64>> = (0..view.len()).into_par_iter().map(f).collect();
    let mut values = Vec::with_capacity(results.len());
    let mut reasons = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) if v.is_finite() => values.push(Some(v)),
            Ok(v) => {
                reasons.push(format!("candidate {i}: non-finite criterion {v}"));
                values.push(None);
            }
            Err(e) => {
                reasons.push(format!("candidate {i}: {e}"));
                values.push(None);
            }
        }
    }
    (values, reasons)
}

fn finish(method: Method, direction: Direction, values: Vec<Option<f64>>, reasons: Vec<String>) -> Result<SelectorResult> {
    if values.iter().all(Option::is_none) {
        return Err(DsvError::NoValidCandidate(reasons));
    }
    Ok(SelectorResult::from_criterion(method, direction, values))
}

pub fn select_base(view: &RunView<'_>) -> Result<SelectorResult> {
    let (v, r) = per_candidate(view, |i| l_dis_hat(view.trn_for(i), &view.candidates[i].aug, view.test_for(i)));
    finish(Method::Base, Direction::Minimize, v, r)
}

/// Median of all pairwise distances between distinct points of `A ∪ B`.
pub fn median_bandwidth(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    let pooled = a.concat(b)?;
    let n = pooled.len();
    let mut d: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = &pooled;
            (i + 1..n).map(move |j| euclid(p.row(i), p.row(j)))
        })
        .collect();
    if d.is_empty() {
        return Err(DsvError::ZeroBandwidth);
    }
    let m = d.len();
    let (_, hi, _) = d.select_nth_unstable_by(m / 2, f64::total_cmp);
    let hi = *hi;
    let median = if m % 2 == 1 {
        hi
    } else {
        let lo = d[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(DsvError::ZeroBandwidth)
    }
}

fn mean_kernel(a: &EmbeddingSet, b: &EmbeddingSet, inv_two_h2: f64) -> f64 {
    let sums: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.row(i);
            b.rows()
                .map(|y| {
                    let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                    (-d2 * inv_two_h2).exp()
                })
                .sum::<f64>()
        })
        .collect();
    sums.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// Biased (V-statistic) MMD with a Gaussian kernel `exp(-‖x-y‖²/(2h²))`, `h`
/// from the median heuristic. Returns the square root of the squared MMD.
pub fn mmd(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let h = median_bandwidth(a, b)?;
    Ok(mmd_with_bandwidth(a, b, h))
}

pub fn mmd_with_bandwidth(a: &EmbeddingSet, b: &EmbeddingSet, h: f64) -> f64 {
    let g = 1.0 / (2.0 * h * h);
    let sq = mean_kernel(a, a, g) + mean_kernel(b, b, g) - 2.0 * mean_kernel(a, b, g);
    sq.max(0.0).sqrt()
}

/// `mmd(trn ∪ aug, test) / mmd(trn, aug)`.
pub fn mmd_ratio(trn: &EmbeddingSet, aug: &EmbeddingSet, test: &EmbeddingSet) -> Result<f64> {
    let den = mmd(trn, aug)?;
    if den == 0.0 {
        return Err(DsvError::DegenerateBase);
    }
    Ok(mmd(&trn.concat(aug)?, test)? / den)
}

pub fn select_mmd(view: &RunView<'_>) -> Result<SelectorResult> {
    let (v, r) = per_candidate(view, |i| mmd_ratio(view.trn_for(i), &view.candidates[i].aug, view.test_for(i)));
    finish(Method::Mmd, Direction::Minimize, v, r)
}

/// Population standard deviation of all train-to-test distances.
pub fn train_test_distance_std(trn: &EmbeddingSet, test: &EmbeddingSet) -> Result<f64> {
    check_dims(trn.dim(), test.dim())?;
    let mut d = Vec::with_capacity(trn.len() * test.len());
    for t in trn.rows() {
        d.extend(test.rows().map(|z| euclid(t, z)));
    }
    population_std(&d)
}

pub fn select_std(view: &RunView<'_>) -> Result<SelectorResult> {
    let (v, r) = per_candidate(view, |i| train_test_distance_std(view.trn_for(i), view.test_for(i)));
    finish(Method::Std, Direction::Maximize, v, r)
}

/// Uniform draw: each candidate gets an independent uniform key from the
/// seeded generator and the largest key wins.
pub fn select_random(n_candidates: usize, seed: u64) -> Result<SelectorResult> {
    if n_candidates == 0 {
        return Err(DsvError::Empty("candidate list"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = (0..n_candidates).map(|_| Some(rng.random::<f64>())).collect();
    Ok(SelectorResult::from_criterion(Method::Rand, Direction::Maximize, keys))
}

// ---------------------------------------------------------------------------
// Score-matrix selectors

/// Candidates × test-samples anomaly scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub scores: Vec<Vec<f64>>,
    pub candidate_ids: Vec<String>,
    pub sample_count: usize,
}

impl ScoreMatrix {
    pub fn new(scores: Vec<Vec<f64>>, candidate_ids: Vec<String>) -> Result<Self> {
        let first = scores.first().ok_or(DsvError::Empty("score matrix"))?;
        let sample_count = first.len();
        if sample_count == 0 {
            return Err(DsvError::Empty("score row"));
        }
        if candidate_ids.len() != scores.len() {
            return Err(DsvError::Precondition(format!(
                "{} candidate ids for {} score rows",
                candidate_ids.len(),
                scores.len()
            )));
        }
        for (i, row) in scores.iter().enumerate() {
            if row.len() != sample_count {
                return Err(DsvError::DimensionMismatch {
                    expected: sample_count,
                    found: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(DsvError::NonFinite { index: i, component: j });
            }
        }
        Ok(Self {
            scores,
            candidate_ids,
            sample_count,
        })
    }

    pub fn from_rows(scores: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        Self::new(scores, ids)
    }

    pub fn n_candidates(&self) -> usize {
        self.scores.len()
    }
}

/// Per-row z-scores (population std); a constant row maps to zeros.
fn zscore(row: &[f64]) -> (Vec<f64>, bool) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let sd = (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        (row.iter().map(|v| (v - mean) / sd).collect(), true)
    } else {
        (vec![0.0; row.len()], false)
    }
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (zx, vx) = zscore(x);
    let (zy, vy) = zscore(y);
    if !(vx && vy) {
        return 0.0;
    }
    let r = zx.iter().zip(&zy).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64;
    r.clamp(-1.0, 1.0)
}

fn need_two(scores: &ScoreMatrix) -> Result<()> {
    if scores.n_candidates() < 2 {
        Err(DsvError::Precondition("at least two candidates are required".into()))
    } else {
        Ok(())
    }
}

/// Mean correlation of each candidate's normalized scores with every other
/// candidate's; the most central candidate wins.
pub fn select_mc(scores: &ScoreMatrix) -> Result<SelectorResult> {
    need_two(scores)?;
    let m = scores.n_candidates();
    let z: Vec<Vec<f64>> = scores.scores.iter().map(|r| zscore(r).0).collect();
    let crit = (0..m)
        .map(|i| {
            let total: f64 = (0..m).filter(|&j| j != i).map(|j| pearson(&z[i], &z[j])).sum();
            Some(total / (m - 1) as f64)
        })
        .collect();
    Ok(SelectorResult::from_criterion(Method::Mc, Direction::Maximize, crit))
}

/// Correlation of each candidate's normalized scores with the column mean of
/// all normalized rows, taken as a pseudo ground truth.
pub fn select_sel(scores: &ScoreMatrix) -> Result<SelectorResult> {
    need_two(scores)?;
    let m = scores.n_candidates();
    let z: Vec<Vec<f64>> = scores.scores.iter().map(|r| zscore(r).0).collect();
    let pseudo: Vec<f64> = (0..scores.sample_count)
        .map(|k| z.iter().map(|r| r[k]).sum::<f64>() / m as f64)
        .collect();
    let crit = z.iter().map(|r| Some(pearson(r, &pseudo))).collect();
    Ok(SelectorResult::from_criterion(Method::Sel, Direction::Maximize, crit))
}

pub const HITS_TOL: f64 = 1e-9;
pub const HITS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitsOutcome {
    pub hubs: Vec<f64>,
    pub authorities: Vec<f64>,
    pub iterations: usize,
    /// L2 distance between successive hub vectors, one entry per iteration.
    pub deltas: Vec<f64>,
    pub converged: bool,
}

/// Min-max normalizes each row to [0, 1]. A constant row has no range of its
/// own and is placed on the whole matrix's scale instead (1 if the matrix is
/// constant too).
pub fn hits_weights(scores: &ScoreMatrix) -> Result<Vec<Vec<f64>>> {
    let all = scores.scores.iter().flatten();
    if all.clone().all(|&v| v == 0.0) {
        return Err(DsvError::Precondition("all-zero score matrix".into()));
    }
    let gmin = all.clone().copied().fold(f64::INFINITY, f64::min);
    let gmax = all.copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(scores
        .scores
        .iter()
        .map(|row| {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                row.iter().map(|v| (v - lo) / (hi - lo)).collect()
            } else if gmax > gmin {
                vec![(lo - gmin) / (gmax - gmin); row.len()]
            } else {
                vec![1.0; row.len()]
            }
        })
        .collect())
}

fn l2_normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

/// Hub/authority iteration on the models × samples bipartite graph.
pub fn hits(scores: &ScoreMatrix) -> Result<HitsOutcome> {
    let w = hits_weights(scores)?;
    let m = w.len();
    let s = scores.sample_count;
    let mut hubs = vec![1.0 / (m as f64).sqrt(); m];
    let mut auth = vec![0.0; s];
    let mut deltas = Vec::new();
    let mut converged = false;
    for _ in 0..HITS_MAX_ITER {
        for (k, a) in auth.iter_mut().enumerate() {
            *a = (0..m).map(|i| w[i][k] * hubs[i]).sum();
        }
        if !l2_normalize(&mut auth) {
            return Err(DsvError::Precondition("normalized score matrix is all zero".into()));
        }
        let mut next: Vec<f64> = w.iter().map(|row| row.iter().zip(&auth).map(|(x, a)| x * a).sum()).collect();
        l2_normalize(&mut next);
        let max_abs = next.iter().zip(&hubs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        deltas.push(euclid(&next, &hubs));
        hubs = next;
        if max_abs < HITS_TOL {
            converged = true;
            break;
        }
    }
    Ok(HitsOutcome {
        hubs,
        authorities: auth,
        iterations: deltas.len(),
        deltas,
        converged,
    })
}

pub fn select_hits(scores: &ScoreMatrix) -> Result<SelectorResult> {
    let out = hits(scores)?;
    Ok(SelectorResult::from_criterion(
        Method::Hits,
        Direction::Maximize,
        out.hubs.into_iter().map(Some).collect(),
    ))
}

pub fn evaluate_average(aucs: &[f64]) -> Result<f64> {
    if aucs.is_empty() {
        return Err(DsvError::Empty("AUC list"));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}
