//! Likelihood-based anomaly scoring against the train embeddings.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baselines::ScoreMatrix;
use crate::error::{DsvError, Result};
use crate::geometry::{check_dims, mean_vector, EmbeddingSet};
use crate::run::RunView;

/// Relative ridge added to every covariance: `λ = RIDGE · trace(Σ) / l`.
pub const RIDGE: f64 = 1e-6;
const EM_MAX_ITER: usize = 200;
const EM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>, what: &str) -> Result<Self> {
        let l = cov.nrows();
        let lambda = RIDGE * cov.trace() / l as f64;
        let mut reg = cov;
        for i in 0..l {
            reg[(i, i)] += lambda;
        }
        let chol = reg
            .cholesky()
            .ok_or_else(|| DsvError::SingularCovariance(format!("{what}: regularized covariance is not positive definite")))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(DsvError::SingularCovariance(format!("{what}: zero spread")));
        }
        Ok(Self {
            weight,
            mean,
            chol,
            log_det,
        })
    }

    fn mahalanobis2(&self, z: &[f64]) -> f64 {
        let diff = DVector::from_row_slice(z) - &self.mean;
        let y = self.chol.l().solve_lower_triangular(&diff).expect("non-singular factor");
        y.norm_squared()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let l = self.mean.len() as f64;
        -0.5 * (self.mahalanobis2(z) + self.log_det + l * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Gaussian (k = 1) or Gaussian-mixture (k > 1) density fitted to the train
/// embeddings.
///
/// With one component the score is the squared Mahalanobis distance; with
/// more it is `-2 log p(z)`. Either way higher means more anomalous.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    components: Vec<Component>,
}

fn population_cov(rows: &[&[f64]], weights: &[f64], mean: &DVector<f64>) -> DMatrix<f64> {
    let l = mean.len();
    let total: f64 = weights.iter().sum();
    let mut cov = DMatrix::zeros(l, l);
    for (row, &w) in rows.iter().zip(weights) {
        let d = DVector::from_row_slice(row) - mean;
        cov += w * &d * d.transpose();
    }
    cov / total
}

impl GaussianModel {
    pub fn fit(trn: &EmbeddingSet, components: usize) -> Result<Self> {
        if trn.len() < 2 {
            return Err(DsvError::Precondition("at least two train vectors are required".into()));
        }
        if components == 0 || components > trn.len() {
            return Err(DsvError::InvalidConfig(format!(
                "component count {components} must be in 1..={}",
                trn.len()
            )));
        }
        if components == 1 {
            let rows: Vec<&[f64]> = trn.rows().collect();
            let mean = DVector::from_vec(mean_vector(trn));
            let cov = population_cov(&rows, &vec![1.0; rows.len()], &mean);
            return Ok(Self {
                components: vec![Component::new(1.0, mean, cov, "train set")?],
            });
        }
        Self::fit_em(trn, components)
    }

    /// EM with deterministic initialization: means at evenly spaced train
    /// vectors, shared full covariance.
    fn fit_em(trn: &EmbeddingSet, k: usize) -> Result<Self> {
        let rows: Vec<&[f64]> = trn.rows().collect();
        let n = rows.len();
        let global_mean = DVector::from_vec(mean_vector(trn));
        let global_cov = population_cov(&rows, &vec![1.0; n], &global_mean);
        let mut comps: Vec<Component> = (0..k)
            .map(|j| {
                let mean = DVector::from_row_slice(rows[j * n / k]);
                Component::new(1.0 / k as f64, mean, global_cov.clone(), "train set")
            })
            .collect::<Result<_>>()?;
        let mut prev = f64::NEG_INFINITY;
        let mut resp = vec![vec![0.0; k]; n];
        for _ in 0..EM_MAX_ITER {
            let mut ll = 0.0;
            for (i, row) in rows.iter().enumerate() {
                let logs: Vec<f64> = comps.iter().map(|c| c.weight.ln() + c.log_density(row)).collect();
                let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = logs.iter().map(|v| (v - m).exp()).sum();
                ll += m + s.ln();
                for (r, v) in resp[i].iter_mut().zip(&logs) {
                    *r = (v - m).exp() / s;
                }
            }
            let mut next = Vec::with_capacity(k);
            for j in 0..k {
                let w: Vec<f64> = resp.iter().map(|r| r[j]).collect();
                let nk: f64 = w.iter().sum();
                if nk < 1e-8 {
                    // an emptied component keeps its previous parameters
                    let mut c = comps[j].clone();
                    c.weight = nk / n as f64;
                    next.push(c);
                    continue;
                }
                let mut mean = DVector::zeros(trn.dim());
                for (row, wi) in rows.iter().zip(&w) {
                    mean += *wi * DVector::from_row_slice(row);
                }
                mean /= nk;
                let cov = population_cov(&rows, &w, &mean);
                next.push(Component::new(nk / n as f64, mean, cov, &format!("mixture component {j}"))?);
            }
            comps = next;
            if (ll - prev).abs() <= EM_TOL * ll.abs().max(1.0) {
                break;
            }
            prev = ll;
        }
        comps.retain(|c| c.weight > 0.0);
        Ok(Self { components: comps })
    }

    pub fn score(&self, z: &[f64]) -> Result<f64> {
        check_dims(self.components[0].mean.len(), z.len())?;
        if self.components.len() == 1 {
            return Ok(self.components[0].mahalanobis2(z));
        }
        let logs: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.log_density(z)).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logs.iter().map(|v| (v - m).exp()).sum();
        Ok(-2.0 * (m + s.ln()))
    }

    pub fn score_set(&self, test: &EmbeddingSet) -> Result<Vec<f64>> {
        test.rows().map(|z| self.score(z)).collect()
    }
}

/// Squared Mahalanobis distance of `z` under a single regularized Gaussian
/// fitted to `trn`.
pub fn gaussian_score(trn: &EmbeddingSet, z: &[f64]) -> Result<f64> {
    GaussianModel::fit(trn, 1)?.score(z)
}

/// Score matrix for every candidate: stored scores when present, otherwise
/// likelihood scores of the candidate's test embeddings under a model fitted
/// to its train embeddings.
pub fn score_candidates(view: &RunView<'_>, components: usize) -> Result<ScoreMatrix> {
    let rows: Vec<Result<Vec<f64>>> = (0..view.len())
        .into_par_iter()
        .map(|i| match &view.candidates[i].scores {
            Some(s) => Ok(s.clone()),
            None => GaussianModel::fit(view.trn_for(i), components)?.score_set(view.test_for(i)),
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let ids = view.candidates.iter().map(|c| c.hp_value.to_string()).collect();
    ScoreMatrix::new(rows, ids)
}
