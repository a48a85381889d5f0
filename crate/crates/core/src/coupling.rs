//! Pairwise interaction coefficients.
//!
//! Every model produces an [`EdgeTable`]: one value per stored directed
//! entry of the graph, aligned with [`Graph::neighbor_indices`]. The
//! effective coupling `a(x_i, x_j) - beta_ij` is what enters the dynamics:
//! positive values attract, negative values repel, zero means no interaction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, SignedMatrix};
use crate::state::FeatureState;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// RNG stream for random attention weights, distinct from the graph streams.
pub const ATTENTION_STREAM: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("features have {found} rows/channels, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("explicit coupling has no entry for edge ({i}, {j})")]
    MissingExplicitEntry { i: usize, j: usize },
    #[error("explicit matrix is {found} x {found}, graph has {expected} nodes")]
    MatrixSize { expected: usize, found: usize },
    #[error("invalid coupling strength: {0}")]
    InvalidStrength(String),
    #[error("scalar beta must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("per-edge beta is only supported together with an explicit coupling matrix")]
    PerEdgeBetaRequiresExplicit,
    #[error("invalid attention parameters: {0}")]
    InvalidAttention(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Values indexed like the graph's stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    values: Vec<f64>,
}

impl EdgeTable {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(g: &Graph) -> Self {
        Self::new(vec![0.0; g.nnz()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coefficient of the directed entry `(i, j)`, if `(i, j)` is an edge.
    pub fn get(&self, g: &Graph, i: usize, j: usize) -> Option<f64> {
        g.entry_index(i, j).map(|k| self.values[k])
    }

    pub fn is_symmetric(&self, g: &Graph) -> bool {
        (0..g.node_count()).all(|i| {
            g.row_range(i).all(|k| {
                let j = g.neighbor_indices()[k];
                self.get(g, j, i).map(f64::to_bits) == Some(self.values[k].to_bits())
            })
        })
    }
}

/// Symmetric GCN normalization `a_ij / sqrt(d̂_i d̂_j)` with
/// `d̂_i = 1 + sum_j a_ji`.
pub fn gcn_coefficients(g: &Graph) -> EdgeTable {
    let dhat: Vec<f64> = g.degrees().iter().map(|d| 1.0 + d).collect();
    let mut values = Vec::with_capacity(g.nnz());
    for i in 0..g.node_count() {
        for (j, w) in g.neighbors(i) {
            values.push(w / (dhat[i] * dhat[j]).sqrt());
        }
    }
    EdgeTable::new(values)
}

/// Single-head graph attention parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    feature_dim: usize,
    proj_dim: usize,
    /// `proj_dim x feature_dim`, row-major.
    theta: Vec<f64>,
    /// Length `2 * proj_dim`: the first half scores the target node, the
    /// second half the neighbor.
    attn_vector: Vec<f64>,
    leaky_slope: f64,
}

impl AttentionParams {
    pub fn new(
        feature_dim: usize,
        proj_dim: usize,
        theta: Vec<f64>,
        attn_vector: Vec<f64>,
        leaky_slope: f64,
    ) -> Result<Self, CouplingError> {
        let bad = |m: String| Err(CouplingError::InvalidAttention(m));
        if feature_dim == 0 || proj_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if theta.len() != feature_dim * proj_dim {
            return bad(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                feature_dim * proj_dim
            ));
        }
        if attn_vector.len() != 2 * proj_dim {
            return bad(format!(
                "attention vector has {} entries, expected {}",
                attn_vector.len(),
                2 * proj_dim
            ));
        }
        if !theta
            .iter()
            .chain(&attn_vector)
            .chain(std::iter::once(&leaky_slope))
            .all(|v| v.is_finite())
        {
            return bad("entries must be finite".into());
        }
        Ok(Self {
            feature_dim,
            proj_dim,
            theta,
            attn_vector,
            leaky_slope,
        })
    }

    /// Seeded normal initialization on [`ATTENTION_STREAM`] with standard
    /// deviation `1/sqrt(proj_dim)`.
    pub fn random(feature_dim: usize, proj_dim: usize, seed: u64) -> Result<Self, CouplingError> {
        if proj_dim == 0 {
            return Err(CouplingError::InvalidAttention(
                "proj_dim must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ATTENTION_STREAM);
        let normal = Normal::new(0.0, 1.0 / (proj_dim as f64).sqrt()).expect("positive scale");
        let theta = (0..feature_dim * proj_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let attn = (0..2 * proj_dim).map(|_| normal.sample(&mut rng)).collect();
        Self::new(feature_dim, proj_dim, theta, attn, DEFAULT_LEAKY_SLOPE)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    pub fn attn_vector(&self) -> &[f64] {
        &self.attn_vector
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    fn leaky_relu(&self, v: f64) -> f64 {
        if v >= 0.0 {
            v
        } else {
            self.leaky_slope * v
        }
    }

    /// Per-node scores `a_1 · Θx_i` and `a_2 · Θx_i`.
    fn node_scores(&self, x: &FeatureState) -> (Vec<f64>, Vec<f64>) {
        let (a1, a2) = self.attn_vector.split_at(self.proj_dim);
        let mut s_self = Vec::with_capacity(x.nodes());
        let mut s_nbr = Vec::with_capacity(x.nodes());
        for row in x.rows() {
            let (mut p, mut q) = (0.0, 0.0);
            for (r, theta_r) in self.theta.chunks_exact(self.feature_dim).enumerate() {
                let z: f64 = theta_r.iter().zip(row).map(|(t, v)| t * v).sum();
                p += a1[r] * z;
                q += a2[r] * z;
            }
            s_self.push(p);
            s_nbr.push(q);
        }
        (s_self, s_nbr)
    }
}

/// Row-normalized attention weights over `N_i ∪ {i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTable {
    /// `α_ij` for neighbors, aligned with graph entries.
    pub edges: EdgeTable,
    /// `α_ii` per node.
    pub self_coef: Vec<f64>,
}

/// Softmax of `logits` written into `out`, shifted by the maximum.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

pub fn attention_coefficients(
    g: &Graph,
    x: &FeatureState,
    p: &AttentionParams,
) -> Result<AttentionTable, CouplingError> {
    let mut edges = EdgeTable::zeros(g);
    let mut self_coef = vec![0.0; g.node_count()];
    attention_into(g, x, p, &mut edges, &mut self_coef)?;
    Ok(AttentionTable { edges, self_coef })
}

fn attention_into(
    g: &Graph,
    x: &FeatureState,
    p: &AttentionParams,
    edges: &mut EdgeTable,
    self_coef: &mut [f64],
) -> Result<(), CouplingError> {
    check_features(g, x)?;
    if x.dim() != p.feature_dim {
        return Err(CouplingError::DimensionMismatch {
            expected: p.feature_dim,
            found: x.dim(),
        });
    }
    let (s_self, s_nbr) = p.node_scores(x);
    let mut logits = Vec::new();
    let mut weights = Vec::new();
    let nbr = g.neighbor_indices();
    for i in 0..g.node_count() {
        let r = g.row_range(i);
        logits.clear();
        logits.push(p.leaky_relu(s_self[i] + s_nbr[i]));
        logits.extend(
            nbr[r.clone()]
                .iter()
                .map(|&j| p.leaky_relu(s_self[i] + s_nbr[j])),
        );
        weights.resize(logits.len(), 0.0);
        softmax_into(&logits, &mut weights);
        self_coef[i] = weights[0];
        edges.values[r].copy_from_slice(&weights[1..]);
    }
    Ok(())
}

fn check_features(g: &Graph, x: &FeatureState) -> Result<(), CouplingError> {
    if x.nodes() != g.node_count() {
        return Err(CouplingError::DimensionMismatch {
            expected: g.node_count(),
            found: x.nodes(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingVariant {
    /// Topology-only GCN coefficients.
    GcnFixed,
    /// Feature-dependent attention, recomputed on every evaluation.
    Attention(AttentionParams),
    /// Base coefficients given directly as a symmetric matrix.
    ExplicitMatrix(SignedMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Beta {
    Scalar(f64),
    PerEdge(SignedMatrix),
}

/// A coupling rule together with its repulsion bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel {
    variant: CouplingVariant,
    beta: Beta,
}

impl CouplingModel {
    pub fn new(variant: CouplingVariant, beta: Beta) -> Result<Self, CouplingError> {
        match (&variant, &beta) {
            (_, Beta::Scalar(b)) if !(b.is_finite() && *b >= 0.0) => {
                return Err(CouplingError::InvalidBeta(*b))
            }
            (CouplingVariant::ExplicitMatrix(m), Beta::PerEdge(bias))
                if m.size() != bias.size() =>
            {
                return Err(CouplingError::MatrixSize {
                    expected: m.size(),
                    found: bias.size(),
                })
            }
            (CouplingVariant::ExplicitMatrix(_), _) | (_, Beta::Scalar(_)) => {}
            (_, Beta::PerEdge(_)) => return Err(CouplingError::PerEdgeBetaRequiresExplicit),
        }
        Ok(Self { variant, beta })
    }

    pub fn gcn(beta: f64) -> Result<Self, CouplingError> {
        Self::new(CouplingVariant::GcnFixed, Beta::Scalar(beta))
    }

    pub fn attention(params: AttentionParams, beta: f64) -> Result<Self, CouplingError> {
        Self::new(CouplingVariant::Attention(params), Beta::Scalar(beta))
    }

    /// Explicit effective coupling with no bias.
    pub fn explicit(matrix: SignedMatrix) -> Self {
        Self {
            variant: CouplingVariant::ExplicitMatrix(matrix),
            beta: Beta::Scalar(0.0),
        }
    }

    pub fn variant(&self) -> &CouplingVariant {
        &self.variant
    }

    pub fn beta(&self) -> &Beta {
        &self.beta
    }

    /// The scalar bias, `None` for per-edge biases.
    pub fn scalar_beta(&self) -> Option<f64> {
        match self.beta {
            Beta::Scalar(b) => Some(b),
            Beta::PerEdge(_) => None,
        }
    }

    /// Whether the coefficients satisfy `a_ij = a_ji`.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self.variant, CouplingVariant::Attention(_))
    }

    /// Whether the coefficients ignore the features.
    pub fn is_static(&self) -> bool {
        !matches!(self.variant, CouplingVariant::Attention(_))
    }

    /// Same variant with a different scalar bias.
    pub fn with_beta(&self, beta: f64) -> Result<Self, CouplingError> {
        Self::new(self.variant.clone(), Beta::Scalar(beta))
    }

    fn check_graph(&self, g: &Graph) -> Result<(), CouplingError> {
        let size = |m: &SignedMatrix| {
            if m.size() != g.node_count() {
                Err(CouplingError::MatrixSize {
                    expected: g.node_count(),
                    found: m.size(),
                })
            } else {
                Ok(())
            }
        };
        if let CouplingVariant::ExplicitMatrix(m) = &self.variant {
            size(m)?;
        }
        if let Beta::PerEdge(b) = &self.beta {
            size(b)?;
        }
        Ok(())
    }

    fn static_base(&self, g: &Graph) -> Result<Option<EdgeTable>, CouplingError> {
        Ok(match &self.variant {
            CouplingVariant::GcnFixed => Some(gcn_coefficients(g)),
            CouplingVariant::ExplicitMatrix(m) => Some(explicit_table(g, m)?),
            CouplingVariant::Attention(_) => None,
        })
    }

    fn subtract_beta(&self, g: &Graph, table: &mut EdgeTable) -> Result<(), CouplingError> {
        match &self.beta {
            Beta::Scalar(b) => {
                if *b != 0.0 {
                    table.values.iter_mut().for_each(|v| *v -= b);
                }
            }
            Beta::PerEdge(bias) => {
                let bias = explicit_table(g, bias)?;
                table
                    .values
                    .iter_mut()
                    .zip(&bias.values)
                    .for_each(|(v, b)| *v -= b);
            }
        }
        Ok(())
    }
}

fn explicit_table(g: &Graph, m: &SignedMatrix) -> Result<EdgeTable, CouplingError> {
    let mut values = Vec::with_capacity(g.nnz());
    for i in 0..g.node_count() {
        for (j, _) in g.neighbors(i) {
            values.push(
                m.get(i, j)
                    .ok_or(CouplingError::MissingExplicitEntry { i, j })?,
            );
        }
    }
    Ok(EdgeTable::new(values))
}

/// `a(x_i, x_j) - beta_ij` on every stored edge.
pub fn effective_coupling(
    model: &CouplingModel,
    g: &Graph,
    x: &FeatureState,
) -> Result<EdgeTable, CouplingError> {
    check_features(g, x)?;
    PreparedCoupling::new(model, g)?.evaluate(g, x)
}

/// A coupling model bound to a graph. Static tables are computed once;
/// attention is re-evaluated from the current features on each call.
#[derive(Debug, Clone)]
pub struct PreparedCoupling {
    model: CouplingModel,
    cached: Option<EdgeTable>,
    scratch_self: Vec<f64>,
}

impl PreparedCoupling {
    pub fn new(model: &CouplingModel, g: &Graph) -> Result<Self, CouplingError> {
        model.check_graph(g)?;
        let cached = match model.static_base(g)? {
            Some(mut t) => {
                model.subtract_beta(g, &mut t)?;
                Some(t)
            }
            None => None,
        };
        Ok(Self {
            model: model.clone(),
            cached,
            scratch_self: vec![0.0; g.node_count()],
        })
    }

    pub fn model(&self) -> &CouplingModel {
        &self.model
    }

    /// The cached table for static models.
    pub fn static_table(&self) -> Option<&EdgeTable> {
        self.cached.as_ref()
    }

    pub fn evaluate(&mut self, g: &Graph, x: &FeatureState) -> Result<EdgeTable, CouplingError> {
        let mut out = EdgeTable::zeros(g);
        self.evaluate_into(g, x, &mut out)?;
        Ok(out)
    }

    /// Writes the effective coupling for state `x` into `out`.
    pub fn evaluate_into(
        &mut self,
        g: &Graph,
        x: &FeatureState,
        out: &mut EdgeTable,
    ) -> Result<(), CouplingError> {
        if let Some(t) = &self.cached {
            out.values.copy_from_slice(&t.values);
            return Ok(());
        }
        let CouplingVariant::Attention(p) = &self.model.variant else {
            unreachable!("non-attention couplings are cached");
        };
        attention_into(g, x, p, out, &mut self.scratch_self)?;
        self.model.subtract_beta(g, out)
    }
}

/// Explicit effective coupling for two groups: `+s` between members of the
/// same group and `-d` across groups (attraction inside, repulsion between).
///
/// Nodes `0..n1` form the first group and `n1..n1+n2` the second. The
/// matrix is dense off the diagonal, so it pairs with the complete graph on
/// `n1 + n2` nodes.
pub fn flocking_partition_coupling(
    n1: usize,
    n2: usize,
    s: f64,
    d: f64,
) -> Result<CouplingModel, CouplingError> {
    if n1 == 0 || n2 == 0 {
        return Err(CouplingError::InvalidStrength(format!(
            "group sizes must be positive, got {n1} and {n2}"
        )));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(CouplingError::InvalidStrength(format!(
            "intra-group strength must be positive, got {s}"
        )));
    }
    if !(d.is_finite() && d >= 0.0) {
        return Err(CouplingError::InvalidStrength(format!(
            "inter-group strength must be non-negative, got {d}"
        )));
    }
    let m = SignedMatrix::from_fn(n1 + n2, |i, j| if (i < n1) == (j < n1) { s } else { -d })?;
    Ok(CouplingModel::explicit(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k2() -> Graph {
        Graph::from_edges(2, &[(0, 1, 1.0)], None).unwrap()
    }

    fn star3() -> Graph {
        Graph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], None).unwrap()
    }

    #[test]
    fn gcn_examples() {
        assert_eq!(gcn_coefficients(&k2()).values(), &[0.5, 0.5]);
        let star = gcn_coefficients(&star3());
        for v in star.values() {
            assert!((v - 1.0 / 8f64.sqrt()).abs() < 1e-15);
            assert!((v - 0.353553).abs() < 1e-6);
        }
        let empty = Graph::from_edges(2, &[(0, 1, 0.0)], None).unwrap();
        assert!(gcn_coefficients(&empty).is_empty());
    }

    #[test]
    fn effective_coupling_signs() {
        let g = k2();
        let x = FeatureState::from_column(&[1.0, -1.0]);
        let at = |beta| {
            effective_coupling(&CouplingModel::gcn(beta).unwrap(), &g, &x)
                .unwrap()
                .values()[0]
        };
        assert_eq!(at(0.0), 0.5);
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(1.0), -0.5);
    }

    #[test]
    fn beta_validation() {
        assert_eq!(
            CouplingModel::gcn(-0.1).unwrap_err(),
            CouplingError::InvalidBeta(-0.1)
        );
        let bias = SignedMatrix::from_entries(2, &[(0, 1, 0.1)]).unwrap();
        assert_eq!(
            CouplingModel::new(CouplingVariant::GcnFixed, Beta::PerEdge(bias)).unwrap_err(),
            CouplingError::PerEdgeBetaRequiresExplicit
        );
    }

    #[test]
    fn explicit_with_per_edge_bias() {
        let g = k2();
        let m = SignedMatrix::from_entries(2, &[(0, 1, 0.75)]).unwrap();
        let bias = SignedMatrix::from_entries(2, &[(0, 1, 0.25)]).unwrap();
        let model =
            CouplingModel::new(CouplingVariant::ExplicitMatrix(m), Beta::PerEdge(bias)).unwrap();
        let t = effective_coupling(&model, &g, &FeatureState::from_column(&[0.0, 0.0])).unwrap();
        assert_eq!(t.values(), &[0.5, 0.5]);
    }

    #[test]
    fn explicit_missing_entry() {
        let g = Graph::complete(3).unwrap();
        let m = SignedMatrix::from_entries(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let err = effective_coupling(
            &CouplingModel::explicit(m),
            &g,
            &FeatureState::from_column(&[0.0; 3]),
        )
        .unwrap_err();
        assert_eq!(err, CouplingError::MissingExplicitEntry { i: 0, j: 2 });
    }

    #[test]
    fn explicit_ignores_non_edges() {
        let g = k2().clone();
        let g3 = Graph::from_edges(3, &[(0, 1, 1.0)], None).unwrap();
        let m = SignedMatrix::from_fn(3, |_, _| -0.3).unwrap();
        let t = effective_coupling(
            &CouplingModel::explicit(m),
            &g3,
            &FeatureState::from_column(&[0.0; 3]),
        )
        .unwrap();
        assert_eq!(t.values(), &[-0.3, -0.3]);
        assert_eq!(g.nnz(), 2);
    }

    #[test]
    fn attention_hand_example() {
        let g = k2();
        let p = AttentionParams::new(1, 1, vec![1.0], vec![0.0, 1.0], 0.2).unwrap();
        let x = FeatureState::from_column(&[0.0, 2f64.ln()]);
        let t = attention_coefficients(&g, &x, &p).unwrap();
        assert!((t.self_coef[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((t.edges.values()[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn attention_uniform_cases() {
        let g = star3();
        let p = AttentionParams::random(2, 3, 7).unwrap();
        let x = FeatureState::filled(4, 2, 0.3).unwrap();
        let t = attention_coefficients(&g, &x, &p).unwrap();
        assert!((t.self_coef[0] - 0.25).abs() < 1e-15);
        assert!((t.self_coef[1] - 0.5).abs() < 1e-15);

        let zero = AttentionParams::new(2, 3, p.theta().to_vec(), vec![0.0; 6], 0.2).unwrap();
        let x =
            FeatureState::from_rows(&[[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0], [2.0, 2.0]]).unwrap();
        let t = attention_coefficients(&g, &x, &zero).unwrap();
        for v in t.edges.values() {
            assert!(*v == 0.25 || *v == 0.5);
        }
    }

    #[test]
    fn attention_dimension_mismatch() {
        let p = AttentionParams::random(3, 2, 1).unwrap();
        let x = FeatureState::filled(2, 2, 0.0).unwrap();
        assert!(matches!(
            attention_coefficients(&k2(), &x, &p),
            Err(CouplingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn flocking_coupling_examples() {
        let m = match flocking_partition_coupling(1, 1, 1.0, 0.1)
            .unwrap()
            .variant()
            .clone()
        {
            CouplingVariant::ExplicitMatrix(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(m.to_dense(), vec![0.0, -0.1, -0.1, 0.0]);

        let m = match flocking_partition_coupling(5, 5, 1.0, 0.2)
            .unwrap()
            .variant()
            .clone()
        {
            CouplingVariant::ExplicitMatrix(m) => m,
            _ => unreachable!(),
        };
        let mut min_intra = f64::INFINITY;
        let mut max_inter = 0.0_f64;
        for (i, j, v) in m.entries() {
            if (i < 5) == (j < 5) {
                min_intra = min_intra.min(v);
            } else {
                max_inter = max_inter.max(-v);
                assert!(v <= 0.0);
            }
        }
        assert_eq!(min_intra, 1.0);
        assert_eq!(max_inter, 0.2);
        assert_eq!(m.entries().count(), 45);

        let m = match flocking_partition_coupling(2, 2, 1.0, 0.0)
            .unwrap()
            .variant()
            .clone()
        {
            CouplingVariant::ExplicitMatrix(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(m.get(0, 2), Some(-0.0));

        assert!(flocking_partition_coupling(0, 2, 1.0, 0.1).is_err());
        assert!(flocking_partition_coupling(2, 2, 0.0, 0.1).is_err());
        assert!(flocking_partition_coupling(2, 2, 1.0, -0.1).is_err());
    }

    #[test]
    fn softmax_shift_invariance_for_row_constant_scores() {
        let g = star3();
        let theta = vec![1.0, 0.5, 0.25, 1.0];
        let base =
            AttentionParams::new(2, 2, theta.clone(), vec![0.3, 0.2, 0.5, 0.1], 0.2).unwrap();
        // Larger target-node weights push every pre-activation further into
        // the identity branch, which only adds a row constant to the logits.
        let shifted = AttentionParams::new(2, 2, theta, vec![0.9, 1.1, 0.5, 0.1], 0.2).unwrap();
        let x = FeatureState::from_rows(&[[1.0, 2.0], [0.5, 0.1], [2.0, 1.0], [1.5, 0.3]]).unwrap();
        let a = attention_coefficients(&g, &x, &base).unwrap();
        let b = attention_coefficients(&g, &x, &shifted).unwrap();
        for (u, v) in a.edges.values().iter().zip(b.edges.values()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn attention_rows_sum_to_one(
            seed in any::<u64>(),
            xs in proptest::collection::vec(-3.0f64..3.0, 12),
        ) {
            let g = Graph::from_edges(6, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (3, 4, 1.0), (2, 5, 1.0)], None).unwrap();
            let p = AttentionParams::random(2, 3, seed).unwrap();
            let x = FeatureState::from_vec(6, 2, xs).unwrap();
            let t = attention_coefficients(&g, &x, &p).unwrap();
            for i in 0..6 {
                let s: f64 = t.self_coef[i] + t.edges.values()[g.row_range(i)].iter().sum::<f64>();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(t.self_coef[i] > 0.0 && t.self_coef[i] < 1.0);
            }
            prop_assert!(t.edges.values().iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn gcn_table_in_unit_interval_and_symmetric(n in 2usize..10, mask in any::<u64>(), w in 0.1f64..3.0) {
            let mut edges = Vec::new();
            let mut bit = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if mask >> (bit % 64) & 1 == 1 {
                        edges.push((i, j, w));
                    }
                    bit += 1;
                }
            }
            let g = Graph::from_edges(n, &edges, None).unwrap();
            let t = gcn_coefficients(&g);
            prop_assert!(t.values().iter().all(|&v| v > 0.0 && v <= 1.0));
            prop_assert!(t.is_symmetric(&g));
            let zero_beta = effective_coupling(&CouplingModel::gcn(0.0).unwrap(), &g, &FeatureState::filled(n, 1, 0.0).unwrap()).unwrap();
            prop_assert_eq!(zero_beta, t);
        }
    }
}
