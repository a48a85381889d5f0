use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::ops::Range;

use super::GraphError;

/// Compressed symmetric sparse storage shared by graphs and signed coupling
/// matrices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    pub(crate) n: usize,
    pub(crate) offsets: Vec<usize>,
    pub(crate) indices: Vec<usize>,
    pub(crate) values: Vec<f64>,
}

impl Csr {
    /// Symmetric closure of an undirected edge list. With `signed == false`
    /// negative weights are rejected and zero weights dropped.
    pub(crate) fn from_undirected(
        n: usize,
        edges: &[(usize, usize, f64)],
        signed: bool,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::EmptyNodeSet);
        }
        let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange {
                        index,
                        node_count: n,
                    });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if !w.is_finite() {
                return Err(GraphError::NonFiniteWeight { i, j });
            }
            if !signed && w < 0.0 {
                return Err(GraphError::NegativeWeight { i, j, weight: w });
            }
            let key = (i.min(j), i.max(j));
            match pairs.entry(key) {
                Entry::Vacant(e) => {
                    e.insert(w);
                }
                Entry::Occupied(e) => {
                    let first = *e.get();
                    return Err(if first.to_bits() == w.to_bits() {
                        GraphError::DuplicateEdge { i: key.0, j: key.1 }
                    } else {
                        GraphError::AsymmetricConflict {
                            i: key.0,
                            j: key.1,
                            first,
                            second: w,
                        }
                    });
                }
            }
        }

        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in &pairs {
            if !signed && w == 0.0 {
                continue;
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(j, _)| j);
            for (j, w) in row {
                indices.push(j);
                values.push(w);
            }
            offsets.push(indices.len());
        }
        Ok(Self {
            n,
            offsets,
            indices,
            values,
        })
    }

    pub(crate) fn row(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub(crate) fn find(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n {
            return None;
        }
        let r = self.row(i);
        self.indices[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|pos| r.start + pos)
    }
}

/// Symmetric sparse matrix with arbitrary finite signed entries.
///
/// Used for explicit pairwise coupling coefficients and per-edge biases.
/// Stored entries (including explicit zeros) count as defined; absent
/// entries are undefined rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedMatrix {
    inner: Csr,
}

impl SignedMatrix {
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        Ok(Self {
            inner: Csr::from_undirected(n, entries, true)?,
        })
    }

    /// Builds a matrix from a symmetric function over all off-diagonal pairs.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, GraphError> {
        let mut entries = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                entries.push((i, j, f(i, j)));
            }
        }
        Self::from_entries(n, &entries)
    }

    pub fn size(&self) -> usize {
        self.inner.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.inner.find(i, j).map(|k| self.inner.values[k])
    }

    /// Undirected entries `(i, j, value)` with `i < j`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.inner.n).flat_map(move |i| {
            let r = self.inner.row(i);
            self.inner.indices[r.clone()]
                .iter()
                .zip(&self.inner.values[r])
                .filter(move |(&j, _)| j > i)
                .map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Dense row-major copy with zeros for undefined entries.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.inner.n;
        let mut out = vec![0.0; n * n];
        for (i, j, v) in self.entries() {
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_entries_keep_sign_and_zeros() {
        let m = SignedMatrix::from_entries(3, &[(0, 1, -0.5), (1, 2, 0.0)]).unwrap();
        assert_eq!(m.get(1, 0), Some(-0.5));
        assert_eq!(m.get(2, 1), Some(0.0));
        assert_eq!(m.get(0, 2), None);
        assert_eq!(m.entries().count(), 2);
    }

    #[test]
    fn find_in_rows() {
        let c = Csr::from_undirected(4, &[(0, 3, 1.0), (0, 1, 2.0)], false).unwrap();
        assert_eq!(c.indices[c.row(0)], [1, 3]);
        assert_eq!(c.find(0, 3), Some(1));
        assert_eq!(c.find(3, 0).map(|k| c.values[k]), Some(1.0));
        assert_eq!(c.find(2, 0), None);
    }
}
