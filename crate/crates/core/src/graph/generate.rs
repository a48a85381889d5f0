//! Two-class random graphs with Gaussian node features.
//!
//! Randomness comes from a ChaCha8 generator seeded with `seed`. Topology is
//! drawn from stream [`TOPOLOGY_STREAM`] and features from
//! [`FEATURE_STREAM`], so the edge set does not depend on the feature
//! dimension or on how many feature draws are made.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};
use crate::state::FeatureState;

pub const TOPOLOGY_STREAM: u64 = 0;
pub const FEATURE_STREAM: u64 = 1;

/// Stochastic two-block graph. Nodes `0..n/2` are class 0, the rest class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoClassGraphSpec {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Feature mean of class 0 and class 1, shared by all channels.
    pub means: [f64; 2],
    pub sigma: f64,
    pub dim: usize,
    pub seed: u64,
}

impl TwoClassGraphSpec {
    /// The 100-node, 2-channel setup used for the oversmoothing experiments.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            n: 100,
            p_in: 0.9,
            p_out: 0.1,
            means: [-0.5, 0.5],
            sigma: 2.0,
            dim: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if !in_unit(self.p_in) || !in_unit(self.p_out) {
            return Err(GraphError::InvalidProbability(format!(
                "p_in = {}, p_out = {} must lie in [0, 1]",
                self.p_in, self.p_out
            )));
        }
        if self.p_out > self.p_in {
            return Err(GraphError::InvalidProbability(format!(
                "p_out = {} exceeds p_in = {}",
                self.p_out, self.p_in
            )));
        }
        if self.n == 0 {
            return Err(GraphError::InvalidSpec("n must be positive".into()));
        }
        if self.dim == 0 {
            return Err(GraphError::InvalidSpec("dim must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(GraphError::InvalidSpec(format!(
                "sigma = {} must be finite and non-negative",
                self.sigma
            )));
        }
        if !self.means.iter().all(|m| m.is_finite()) {
            return Err(GraphError::InvalidSpec("means must be finite".into()));
        }
        Ok(())
    }

    pub fn class_of(&self, node: usize) -> u32 {
        u32::from(node >= self.n / 2)
    }
}

pub fn generate_two_class_graph(
    spec: &TwoClassGraphSpec,
) -> Result<(Graph, FeatureState), GraphError> {
    spec.validate()?;
    let labels: Vec<u32> = (0..spec.n).map(|i| spec.class_of(i)).collect();

    let mut topo = ChaCha8Rng::seed_from_u64(spec.seed);
    topo.set_stream(TOPOLOGY_STREAM);
    let mut edges = Vec::new();
    for i in 0..spec.n {
        for j in i + 1..spec.n {
            let p = if labels[i] == labels[j] {
                spec.p_in
            } else {
                spec.p_out
            };
            if topo.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }

    let mut feat = ChaCha8Rng::seed_from_u64(spec.seed);
    feat.set_stream(FEATURE_STREAM);
    let dists = spec
        .means
        .map(|m| Normal::new(m, spec.sigma).expect("validated sigma"));
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    for &c in &labels {
        for _ in 0..spec.dim {
            data.push(dists[c as usize].sample(&mut feat));
        }
    }

    let graph = Graph::from_edges(spec.n, &edges, Some(labels))?;
    let x = FeatureState::from_vec(spec.n, spec.dim, data).expect("shape by construction");
    Ok((graph, x))
}
