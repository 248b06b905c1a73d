//! Sparse activation vectors.
//!
//! A [`SparseVector`] holds strictly ascending feature ids and their strictly
//! positive activations. Zeros are never stored: an all-zero activation is an
//! empty vector. Values are `f64` in memory; the store widens the `f32` values
//! it reads from disk.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: u32,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector after checking every invariant.
    pub fn new(dim: u32, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        check_parts(dim, &indices, &values)?;
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    pub fn empty(dim: u32) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Keeps the strictly positive entries of a dense vector.
    ///
    /// Negative or non-finite entries are rejected.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let dim = u32::try_from(dense.len())
            .map_err(|_| Error::InvalidVector("dimension exceeds u32".into()))?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in dense.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidVector(format!(
                    "entry {i} is {v}; activations must be finite and non-negative"
                )));
            }
            if v > 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    /// Builds from `(index, value)` pairs in any order; zero values are dropped.
    pub fn from_pairs(dim: u32, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut pairs: Vec<(u32, f64)> = pairs.into_iter().filter(|&(_, v)| v != 0.0).collect();
        pairs.sort_by_key(|&(i, _)| i);
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(dim, indices, values)
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Activation of feature `index`, or 0 when it is not in the support.
    #[inline]
    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    #[inline]
    pub fn contains(&self, index: u32) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim as usize];
        for (i, v) in self.iter() {
            dense[i as usize] = v;
        }
        dense
    }

    /// Sum of all stored activations (the L1 norm, since every value is positive).
    pub fn l1(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Multiplies every activation by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Self::new(
            self.dim,
            self.indices.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Elementwise maximum of two vectors of the same dimension.
    pub fn max_with(&self, other: &SparseVector) -> Result<SparseVector> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim as usize,
                got: other.dim as usize,
            });
        }
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut a, mut b) = (0, 0);
        while a < self.nnz() || b < other.nnz() {
            let ia = self.indices.get(a).copied().unwrap_or(u32::MAX);
            let ib = other.indices.get(b).copied().unwrap_or(u32::MAX);
            if a < self.nnz() && (b >= other.nnz() || ia < ib) {
                indices.push(ia);
                values.push(self.values[a]);
                a += 1;
            } else if b < other.nnz() && (a >= self.nnz() || ib < ia) {
                indices.push(ib);
                values.push(other.values[b]);
                b += 1;
            } else {
                indices.push(ia);
                values.push(self.values[a].max(other.values[b]));
                a += 1;
                b += 1;
            }
        }
        Ok(SparseVector {
            dim: self.dim,
            indices,
            values,
        })
    }
}

/// Checks the `SparseVector` invariants on raw parts.
pub(crate) fn check_parts(dim: u32, indices: &[u32], values: &[f64]) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidVector("dim must be positive".into()));
    }
    if indices.len() != values.len() {
        return Err(Error::InvalidVector(format!(
            "{} indices but {} values",
            indices.len(),
            values.len()
        )));
    }
    for (pos, &i) in indices.iter().enumerate() {
        if i >= dim {
            return Err(Error::InvalidVector(format!(
                "index out of range: {i} >= {dim}"
            )));
        }
        if pos > 0 && indices[pos - 1] >= i {
            return Err(Error::InvalidVector(format!(
                "non-ascending indices: {} then {i}",
                indices[pos - 1]
            )));
        }
    }
    for &v in values {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidVector(format!(
                "value {v} is not finite and positive"
            )));
        }
    }
    Ok(())
}

/// Elementwise max over the token vectors of one unit.
pub fn max_pool_tokens(tokens: &[SparseVector]) -> Result<SparseVector> {
    let (first, rest) = tokens.split_first().ok_or(Error::NoTokens)?;
    rest.iter().try_fold(first.clone(), |acc, t| acc.max_with(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(dim: u32, pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn pool_elementwise_max() {
        let pooled = max_pool_tokens(&[sv(8, &[(1, 0.5), (3, 2.0)]), sv(8, &[(1, 0.7)])]).unwrap();
        assert_eq!(pooled, sv(8, &[(1, 0.7), (3, 2.0)]));
    }

    #[test]
    fn pool_singleton_is_identity() {
        let v = sv(8, &[(2, 1.0)]);
        assert_eq!(max_pool_tokens(std::slice::from_ref(&v)).unwrap(), v);
    }

    #[test]
    fn pool_errors() {
        assert!(matches!(max_pool_tokens(&[]), Err(Error::NoTokens)));
        let err = max_pool_tokens(&[sv(8, &[]), sv(9, &[])]).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { .. }));
    }

    #[test]
    fn rejects_bad_parts() {
        assert!(SparseVector::new(4, vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::new(4, vec![4], vec![1.0]).is_err());
        assert!(SparseVector::new(4, vec![0], vec![0.0]).is_err());
        assert!(SparseVector::new(4, vec![0], vec![f64::NAN]).is_err());
        assert!(SparseVector::new(4, vec![0, 1], vec![1.0]).is_err());
        assert!(SparseVector::new(0, vec![], vec![]).is_err());
    }

    #[test]
    fn dense_round_trip_drops_zeros() {
        let v = SparseVector::from_dense(&[0.0, 1.5, 0.0, 2.0]).unwrap();
        assert_eq!(v.indices(), &[1, 3]);
        assert_eq!(v.to_dense(), vec![0.0, 1.5, 0.0, 2.0]);
        assert!(SparseVector::from_dense(&[-1.0]).is_err());
    }

    #[test]
    fn get_absent_is_zero() {
        let v = sv(10, &[(3, 2.5)]);
        assert_eq!(v.get(3), 2.5);
        assert_eq!(v.get(4), 0.0);
    }
}
