//! Vector math and robust-statistics primitives.
//!
//! Every reduction over a set of vectors walks the set in ascending index
//! order so that results are bit-reproducible.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance on Weiszfeld iterate movement.
pub const GEOMEDIAN_TOL: f64 = 1e-8;
/// Default iteration cap for Weiszfeld.
pub const GEOMEDIAN_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VecMathError {
    #[error("gradient vector must have at least one component")]
    EmptyVector,
    #[error("non-finite component {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operation requires a non-empty set of vectors")]
    EmptySet,
    #[error("degenerate vector: zero norm")]
    DegenerateVector,
}

/// A flattened gradient (or parameter delta). Non-empty, all components finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VecMathError> {
        if values.is_empty() {
            return Err(VecMathError::EmptyVector);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(VecMathError::NonFinite { index, value });
        }
        Ok(GradientVector(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, VecMathError> {
        Self::new(values.to_vec())
    }

    pub fn zeros(dim: usize) -> Result<Self, VecMathError> {
        Self::new(vec![0.0; dim])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with slices.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, VecMathError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn check_same_len(&self, other: &Self) -> Result<(), VecMathError> {
        if self.len() != other.len() {
            return Err(VecMathError::DimensionMismatch { left: self.len(), right: other.len() });
        }
        Ok(())
    }
}

impl fmt::Debug for GradientVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("GradientVector").field(&self.0).finish()
    }
}

impl Index<usize> for GradientVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl TryFrom<Vec<f64>> for GradientVector {
    type Error = VecMathError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<GradientVector> for Vec<f64> {
    fn from(v: GradientVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for GradientVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that `vectors` is non-empty with a common dimension, returning it.
pub fn common_dim(vectors: &[GradientVector]) -> Result<usize, VecMathError> {
    let first = vectors.first().ok_or(VecMathError::EmptySet)?;
    for v in &vectors[1..] {
        first.check_same_len(v)?;
    }
    Ok(first.len())
}

pub(crate) fn dist_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn euclidean_distance(a: &GradientVector, b: &GradientVector) -> Result<f64, VecMathError> {
    a.check_same_len(b)?;
    Ok(dist_slices(a.as_slice(), b.as_slice()))
}

/// Cosine of the angle between `a` and `b`, clamped into `[-1, 1]`.
pub fn cosine_similarity(a: &GradientVector, b: &GradientVector) -> Result<f64, VecMathError> {
    a.check_same_len(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(VecMathError::DegenerateVector);
    }
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Arithmetic mean, summed in index order and divided by the count.
pub fn mean(vectors: &[GradientVector]) -> Result<GradientVector, VecMathError> {
    let dim = common_dim(vectors)?;
    let mut acc = vec![0.0; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let count = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    GradientVector::new(acc)
}

/// Median of a scalar sample; sorts `values` in place.
pub(crate) fn scalar_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-coordinate median: middle value for odd counts, mean of the two
/// middle values for even counts.
pub fn coordinate_median(vectors: &[GradientVector]) -> Result<GradientVector, VecMathError> {
    let dim = common_dim(vectors)?;
    let mut column = Vec::with_capacity(vectors.len());
    let out = (0..dim)
        .map(|k| {
            column.clear();
            column.extend(vectors.iter().map(|v| v[k]));
            scalar_median(&mut column)
        })
        .collect();
    GradientVector::new(out)
}

/// Sum of Euclidean distances from `point` to every vector.
pub fn sum_of_distances(point: &[f64], vectors: &[GradientVector]) -> f64 {
    vectors.iter().map(|v| dist_slices(point, v.as_slice())).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMedian {
    pub point: GradientVector,
    /// Objective value `sum_i ||point - v_i||` at `point`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Weiszfeld fixed-point iteration for the point minimizing the sum of
/// Euclidean distances to `vectors`.
///
/// Starts from the coordinate mean. When an iterate lands on a data point it
/// is nudged by `1e-12 * (1 + ||point||)` along coordinate 0 and iteration
/// continues. The returned point is never worse than the best input point,
/// so the objective bound holds even when the minimizer is a data point and
/// Weiszfeld approaches it slowly.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged == false`.
pub fn geometric_median(
    vectors: &[GradientVector],
    tol: f64,
    max_iter: usize,
) -> Result<GeometricMedian, VecMathError> {
    let dim = common_dim(vectors)?;
    let mut current = mean(vectors)?.into_vec();
    let mut best_objective = sum_of_distances(&current, vectors);
    let mut best = current.clone();
    let mut converged = false;
    let mut iterations = 0;

    let mut next = vec![0.0; dim];
    while iterations < max_iter {
        iterations += 1;
        let mut weight_sum = 0.0;
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut singular = None;
        for (i, v) in vectors.iter().enumerate() {
            let d = dist_slices(&current, v.as_slice());
            if d == 0.0 {
                singular = Some(i);
                break;
            }
            let w = 1.0 / d;
            weight_sum += w;
            for (acc, x) in next.iter_mut().zip(v.as_slice()) {
                *acc += w * x;
            }
        }
        if let Some(i) = singular {
            let point = vectors[i].as_slice();
            current.copy_from_slice(point);
            current[0] += 1e-12 * (1.0 + vectors[i].norm());
            continue;
        }
        next.iter_mut().for_each(|x| *x /= weight_sum);

        let movement = dist_slices(&current, &next);
        std::mem::swap(&mut current, &mut next);
        let objective = sum_of_distances(&current, vectors);
        if objective < best_objective {
            best_objective = objective;
            best.copy_from_slice(&current);
        }
        if movement <= tol {
            converged = true;
            break;
        }
    }

    for v in vectors {
        let objective = sum_of_distances(v.as_slice(), vectors);
        if objective < best_objective {
            best_objective = objective;
            best.copy_from_slice(v.as_slice());
        }
    }

    Ok(GeometricMedian { point: GradientVector::new(best)?, objective: best_objective, iterations, converged })
}

/// The input vector nearest the geometric median (lowest index on ties).
pub fn medoid(vectors: &[GradientVector]) -> Result<(usize, GradientVector), VecMathError> {
    if vectors.len() == 1 {
        return Ok((0, vectors[0].clone()));
    }
    let center = geometric_median(vectors, GEOMEDIAN_TOL, GEOMEDIAN_MAX_ITER)?.point;
    let mut best = (0, f64::INFINITY);
    for (i, v) in vectors.iter().enumerate() {
        let d = dist_slices(center.as_slice(), v.as_slice());
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok((best.0, vectors[best.0].clone()))
}
