//! Distance and projection primitives over embedding vectors and sets.
//!
//! The set distance is the mean of all pairwise Euclidean distances, self
//! pairs included, so `set_distance(A, A)` is the within-set spread used as
//! the train-set scale elsewhere in the crate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};

/// A non-empty, ordered collection of equal-length finite vectors.
///
/// Stored row-major in a single buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct EmbeddingSet {
    data: Vec<f64>,
    dim: usize,
}

impl EmbeddingSet {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let first = rows.first().ok_or(DsvError::Empty("embedding set"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(DsvError::Empty("embedding vector"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(DsvError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, dim)
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(DsvError::Empty("embedding set"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(DsvError::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DsvError::NonFinite {
                index: pos / dim,
                component: pos % dim,
            });
        }
        Ok(Self { data, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Multiset union: rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &EmbeddingSet) -> Result<EmbeddingSet> {
        check_dims(self.dim, other.dim)?;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(EmbeddingSet {
            data,
            dim: self.dim,
        })
    }

    /// Keep the rows whose index satisfies `keep`. Errors if nothing is left.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Result<EmbeddingSet> {
        let mut data = Vec::new();
        for (i, row) in self.rows().enumerate() {
            if keep(i) {
                data.extend_from_slice(row);
            }
        }
        EmbeddingSet::from_flat(data, self.dim)
    }

    /// Apply `f` to every vector, producing a new set of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> EmbeddingSet {
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.rows().zip(data.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        EmbeddingSet {
            data,
            dim: self.dim,
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for EmbeddingSet {
    type Error = DsvError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        EmbeddingSet::from_rows(rows)
    }
}

impl From<EmbeddingSet> for Vec<Vec<f64>> {
    fn from(set: EmbeddingSet) -> Self {
        set.to_rows()
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DsvError::DimensionMismatch { expected, found })
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vec_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(euclid(a, b))
}

/// Mean Euclidean distance over all `|A|·|B|` pairs.
///
/// Row sums are computed in parallel and reduced in row order, so the result
/// does not depend on the thread count.
pub fn set_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let row_sums: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            b.rows().map(|bj| euclid(ai, bj)).sum::<f64>()
        })
        .collect();
    let total: f64 = row_sums.iter().sum();
    Ok(total / (a.len() as f64 * b.len() as f64))
}

/// Length of `c - a` projected on the direction `b - a`; negative when `c`
/// lies behind the anchor.
pub fn projected_norm(a: &[f64], b: &[f64], c: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    check_dims(a.len(), c.len())?;
    let base = euclid(a, b);
    if base == 0.0 {
        return Err(DsvError::DegenerateDirection(
            "anchor and direction point coincide".into(),
        ));
    }
    let num: f64 = a
        .iter()
        .zip(b)
        .zip(c)
        .map(|((ai, bi), ci)| (ci - ai) * (bi - ai))
        .sum();
    Ok(num / base)
}

pub fn mean_vector(a: &EmbeddingSet) -> Vec<f64> {
    let mut mean = vec![0.0; a.dim()];
    for row in a.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = a.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Population standard deviation, `sqrt(mean((x - mean(x))^2))`.
pub fn population_std(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(DsvError::Empty("value collection"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}
