//! Immutable sparse symmetric graphs.
//!
//! A [`Graph`] stores the weighted adjacency `A = (a_ij)` of an undirected
//! graph in compressed row form. Every edge is stored in both rows with
//! bit-identical weights, rows are sorted by neighbor index and no diagonal
//! entries are kept. Self-interaction only ever enters through degree
//! normalization (see [`crate::coupling::gcn_coefficients`]).

mod csr;
mod generate;
pub mod io;
mod spectrum;

pub use csr::SignedMatrix;
pub use generate::{generate_two_class_graph, TwoClassGraphSpec, FEATURE_STREAM, TOPOLOGY_STREAM};
pub use spectrum::{spectrum, spectrum_with_cap, GraphSpectrum, DEFAULT_SPECTRAL_CAP};

use std::ops::Range;

use thiserror::Error;

use crate::state::FeatureState;
use csr::Csr;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    EmptyNodeSet,
    #[error("node index {index} out of range for {node_count} nodes")]
    IndexOutOfRange { index: usize, node_count: usize },
    #[error("edge ({i}, {j}) has negative weight {weight}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },
    #[error("edge ({i}, {j}) has non-finite weight")]
    NonFiniteWeight { i: usize, j: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) given more than once")]
    DuplicateEdge { i: usize, j: usize },
    #[error("edge ({i}, {j}) given with two different weights {first} and {second}")]
    AsymmetricConflict {
        i: usize,
        j: usize,
        first: f64,
        second: f64,
    },
    #[error("label list has {found} entries for {expected} nodes")]
    LabelCount { expected: usize, found: usize },
    #[error("feature matrix has {found} rows, graph has {expected} nodes")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dense spectrum limited to {cap} nodes, graph has {nodes}")]
    GraphTooLargeForDenseSpectrum { nodes: usize, cap: usize },
    #[error("graph has no node labels")]
    MissingLabels,
    #[error("every node is isolated; homophily is undefined")]
    AllNodesIsolated,
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

/// Undirected weighted graph with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Csr,
    degrees: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl Graph {
    /// Builds a graph from undirected edges `(i, j, weight)`.
    ///
    /// Each edge is stored in both rows. Listing the same unordered pair
    /// twice is an error, whether as `(i, j)` twice or as `(i, j)` and
    /// `(j, i)`. Zero-weight edges are accepted and dropped.
    pub fn from_edges(
        node_count: usize,
        edges: &[(usize, usize, f64)],
        labels: Option<Vec<u32>>,
    ) -> Result<Self, GraphError> {
        let adjacency = Csr::from_undirected(node_count, edges, false)?;
        Self::from_csr(adjacency, labels)
    }

    fn from_csr(adjacency: Csr, labels: Option<Vec<u32>>) -> Result<Self, GraphError> {
        if let Some(l) = &labels {
            if l.len() != adjacency.n {
                return Err(GraphError::LabelCount {
                    expected: adjacency.n,
                    found: l.len(),
                });
            }
        }
        let degrees = (0..adjacency.n)
            .map(|i| adjacency.values[adjacency.row(i)].iter().sum())
            .collect();
        Ok(Self {
            adjacency,
            degrees,
            labels,
        })
    }

    /// Complete graph on `n` nodes with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        Self::from_edges(n, &edges, None)
    }

    pub fn with_labels(self, labels: Vec<u32>) -> Result<Self, GraphError> {
        Self::from_csr(self.adjacency, Some(labels))
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.n
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.indices.len() / 2
    }

    /// Number of stored directed entries (twice the edge count).
    pub fn nnz(&self) -> usize {
        self.adjacency.indices.len()
    }

    /// Positions of row `i` in the entry arrays.
    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.adjacency.row(i)
    }

    pub fn neighbor_indices(&self) -> &[usize] {
        &self.adjacency.indices
    }

    /// Stored weights, aligned with [`Graph::neighbor_indices`].
    pub fn weights(&self) -> &[f64] {
        &self.adjacency.values
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_range(i);
        self.adjacency.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.adjacency.values[r].iter().copied())
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Number of neighbors of node `i`.
    pub fn neighbor_count(&self, i: usize) -> usize {
        self.row_range(i).len()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Entry position of `(i, j)` if the edge exists.
    pub fn entry_index(&self, i: usize, j: usize) -> Option<usize> {
        self.adjacency.find(i, j)
    }

    /// `a_ij`, zero for non-edges.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.entry_index(i, j)
            .map(|k| self.adjacency.values[k])
            .unwrap_or(0.0)
    }

    /// Undirected edges `(i, j, a_ij)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub(crate) fn check_rows(&self, x: &FeatureState) -> Result<(), GraphError> {
        if x.nodes() != self.node_count() {
            return Err(GraphError::DimensionMismatch {
                expected: self.node_count(),
                found: x.nodes(),
            });
        }
        Ok(())
    }

    /// Applies `L = D - A` channel-wise: row `i` of the result is
    /// `d_i x_i - sum_j a_ij x_j`.
    pub fn laplacian_apply(&self, x: &FeatureState) -> Result<FeatureState, GraphError> {
        self.check_rows(x)?;
        let d = x.dim();
        let mut out = vec![0.0; x.as_slice().len()];
        for i in 0..self.node_count() {
            let xi = x.row(i);
            let oi = &mut out[i * d..(i + 1) * d];
            for (j, w) in self.neighbors(i) {
                let xj = x.row(j);
                for k in 0..d {
                    oi[k] += w * (xi[k] - xj[k]);
                }
            }
        }
        Ok(x.with_data(out).expect("shape preserved"))
    }

    /// Mean fraction of same-label neighbors over non-isolated nodes.
    ///
    /// Neighbors are counted, not weighted. Degree-0 nodes have no defined
    /// fraction; they are skipped and their number is reported.
    pub fn homophily_level(&self) -> Result<HomophilyReport, GraphError> {
        let labels = self.labels().ok_or(GraphError::MissingLabels)?;
        let mut sum = 0.0;
        let mut counted = 0usize;
        let mut isolated = 0usize;
        for i in 0..self.node_count() {
            let total = self.neighbor_count(i);
            if total == 0 {
                isolated += 1;
                continue;
            }
            let same = self
                .neighbors(i)
                .filter(|&(j, _)| labels[j] == labels[i])
                .count();
            sum += same as f64 / total as f64;
            counted += 1;
        }
        if counted == 0 {
            return Err(GraphError::AllNodesIsolated);
        }
        Ok(HomophilyReport {
            level: sum / counted as f64,
            isolated_excluded: isolated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomophilyReport {
    pub level: f64,
    /// Degree-0 nodes left out of the average.
    pub isolated_excluded: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], None).unwrap()
    }

    #[test]
    fn symmetric_closure() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)], None).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![(1, 1.0)]);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![(0, 1.0)]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn empty_graph_has_zero_degrees() {
        let g = Graph::from_edges(3, &[], None).unwrap();
        assert_eq!(g.degrees(), &[0.0, 0.0, 0.0]);
        assert_eq!(g.nnz(), 0);
    }

    #[test]
    fn degrees_are_row_sums() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 2.0)], None).unwrap();
        assert_eq!(g.degrees(), &[1.0, 3.0, 2.0]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            Graph::from_edges(2, &[(0, 2, 1.0)], None).unwrap_err(),
            GraphError::IndexOutOfRange {
                index: 2,
                node_count: 2
            }
        );
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, -1.0)], None),
            Err(GraphError::NegativeWeight { .. })
        ));
        assert_eq!(
            Graph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)], None).unwrap_err(),
            GraphError::DuplicateEdge { i: 0, j: 1 }
        );
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 1.0), (0, 1, 2.0)], None),
            Err(GraphError::AsymmetricConflict { .. })
        ));
        assert_eq!(
            Graph::from_edges(2, &[(1, 1, 1.0)], None).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, f64::NAN)], None),
            Err(GraphError::NonFiniteWeight { .. })
        ));
        assert_eq!(
            Graph::from_edges(0, &[], None).unwrap_err(),
            GraphError::EmptyNodeSet
        );
        assert!(matches!(
            Graph::from_edges(2, &[], Some(vec![0])),
            Err(GraphError::LabelCount { .. })
        ));
    }

    #[test]
    fn zero_weight_edges_are_dropped() {
        let g = Graph::from_edges(2, &[(0, 1, 0.0)], None).unwrap();
        assert_eq!(g.nnz(), 0);
    }

    #[test]
    fn laplacian_examples() {
        let k2 = Graph::from_edges(2, &[(0, 1, 1.0)], None).unwrap();
        let lx = k2
            .laplacian_apply(&FeatureState::from_column(&[1.0, -1.0]))
            .unwrap();
        assert_eq!(lx.as_slice(), &[2.0, -2.0]);

        let lx = path3()
            .laplacian_apply(&FeatureState::from_column(&[0.0, 1.0, 0.0]))
            .unwrap();
        assert_eq!(lx.as_slice(), &[-1.0, 2.0, -1.0]);

        assert!(matches!(
            k2.laplacian_apply(&FeatureState::from_column(&[1.0])),
            Err(GraphError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn homophily_examples() {
        let tri = Graph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], None).unwrap();
        let same = tri.clone().with_labels(vec![4, 4, 4]).unwrap();
        assert_eq!(same.homophily_level().unwrap().level, 1.0);

        let mixed = tri.clone().with_labels(vec![0, 0, 1]).unwrap();
        let h = mixed.homophily_level().unwrap();
        assert!((h.level - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.isolated_excluded, 0);

        assert_eq!(
            tri.homophily_level().unwrap_err(),
            GraphError::MissingLabels
        );
    }

    #[test]
    fn homophily_skips_isolated_nodes() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0)], Some(vec![0, 0, 1, 1])).unwrap();
        let h = g.homophily_level().unwrap();
        assert_eq!(h.level, 1.0);
        assert_eq!(h.isolated_excluded, 2);

        let g = Graph::from_edges(2, &[], Some(vec![0, 1])).unwrap();
        assert_eq!(
            g.homophily_level().unwrap_err(),
            GraphError::AllNodesIsolated
        );
    }

    fn random_graph() -> impl Strategy<Value = (Graph, FeatureState)> {
        (2usize..12, 1usize..4).prop_flat_map(|(n, d)| {
            let pairs = n * (n - 1) / 2;
            (
                proptest::collection::vec(proptest::option::weighted(0.5, 0.01f64..5.0), pairs),
                proptest::collection::vec(-10.0f64..10.0, n * d),
            )
                .prop_map(move |(ws, xs)| {
                    let mut edges = Vec::new();
                    let mut k = 0;
                    for i in 0..n {
                        for j in i + 1..n {
                            if let Some(w) = ws[k] {
                                edges.push((i, j, w));
                            }
                            k += 1;
                        }
                    }
                    (
                        Graph::from_edges(n, &edges, None).unwrap(),
                        FeatureState::from_vec(n, d, xs).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn stored_weights_are_bit_symmetric((g, _x) in random_graph()) {
            for i in 0..g.node_count() {
                for (j, w) in g.neighbors(i) {
                    prop_assert_eq!(g.weight(j, i).to_bits(), w.to_bits());
                }
                let idx: Vec<usize> = g.neighbors(i).map(|(j, _)| j).collect();
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn laplacian_kills_constants((g, x) in random_graph(), c in -5.0f64..5.0) {
            let cst = x.map(|_| c);
            let lx = g.laplacian_apply(&cst).unwrap();
            prop_assert!(lx.as_slice().iter().all(|&v| v == 0.0));
        }

        #[test]
        fn laplacian_is_psd((g, x) in random_graph()) {
            let q = x.dot(&g.laplacian_apply(&x).unwrap());
            prop_assert!(q >= -1e-9 * (1.0 + x.norm_sq()));
        }
    }
}
