//! Node feature matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("feature buffer has {len} values, expected {rows} x {cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("feature dimension must be at least 1")]
    ZeroDimension,
    #[error("ragged feature rows: row {row} has {found} channels, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
}

/// An `N x d` matrix of node features stored row-major.
///
/// Row `i` holds the `d` channels of node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureState {
    pub fn zeros(nodes: usize, dim: usize) -> Result<Self, StateError> {
        Self::filled(nodes, dim, 0.0)
    }

    pub fn filled(nodes: usize, dim: usize, value: f64) -> Result<Self, StateError> {
        if dim == 0 {
            return Err(StateError::ZeroDimension);
        }
        Ok(Self {
            nodes,
            dim,
            data: vec![value; nodes * dim],
        })
    }

    pub fn from_vec(nodes: usize, dim: usize, data: Vec<f64>) -> Result<Self, StateError> {
        if dim == 0 {
            return Err(StateError::ZeroDimension);
        }
        if data.len() != nodes * dim {
            return Err(StateError::ShapeMismatch {
                rows: nodes,
                cols: dim,
                len: data.len(),
            });
        }
        Ok(Self { nodes, dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, StateError> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        if dim == 0 {
            return Err(StateError::ZeroDimension);
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(StateError::Ragged {
                    row,
                    found: r.len(),
                    expected: dim,
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            nodes: rows.len(),
            dim,
            data,
        })
    }

    /// A single-channel state from one scalar per node.
    pub fn from_column(values: &[f64]) -> Self {
        Self {
            nodes: values.len(),
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.dim + k]
    }

    /// Same shape, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self, StateError> {
        Self::from_vec(self.nodes, self.dim, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nodes: self.nodes,
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Per-channel mean over nodes. Zeros for an empty state.
    pub fn mass_center(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        if self.nodes == 0 {
            return c;
        }
        for row in self.rows() {
            for (ck, v) in c.iter_mut().zip(row) {
                *ck += v;
            }
        }
        let n = self.nodes as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.dim == other.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_centers() {
        let x = FeatureState::from_rows(&[[0.0, 1.0], [2.0, 3.0]]).unwrap();
        assert_eq!(x.nodes(), 2);
        assert_eq!(x.dim(), 2);
        assert_eq!(x.row(1), &[2.0, 3.0]);
        assert_eq!(x.mass_center(), vec![1.0, 2.0]);
        assert_eq!(x.norm_sq(), 14.0);
        assert_eq!(x.max_abs(), 3.0);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            FeatureState::from_vec(2, 2, vec![1.0; 3]),
            Err(StateError::ShapeMismatch { .. })
        ));
        assert_eq!(
            FeatureState::zeros(3, 0).unwrap_err(),
            StateError::ZeroDimension
        );
        let ragged: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            FeatureState::from_rows(&ragged),
            Err(StateError::Ragged { row: 1, .. })
        ));
    }
}
