//! Right-hand sides of the particle systems and their energy functionals.
//!
//! All operations are channel-wise apart from the neighbor aggregation.
//! The derivative of node `i` under the Allen-Cahn model is
//!
//! ```text
//! α ⊙ Σ_{j ∈ N_i} (a(x_i, x_j) − β_ij)(x_j − x_i) + δ ⊙ f(x_i)
//! ```
//!
//! where `f = −W'` is the well force of the chosen [`PotentialVariant`].

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{CouplingError, CouplingModel, EdgeTable, PreparedCoupling};
use crate::graph::Graph;
use crate::state::FeatureState;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the energy is only defined for a scalar alpha; got channel values {0:?}")]
    VectorAlpha(Vec<f64>),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Well potential `W` acting on each channel independently.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialVariant {
    /// `W(x) = (δ/4)(1 − x²)²`, wells at ±1.
    #[default]
    DoubleWell,
    /// `W' = δ ∏ (x − r_m)` over an odd, strictly increasing root list.
    /// Roots with even index (0, 2, ...) are the stable wells.
    PolynomialWells { roots: Vec<f64> },
    /// `W(x) = δ sin((3/2 + l)πx + π/2)` on `[−1, 1]`.
    SineWells { l: u32 },
}

impl PotentialVariant {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if let Self::PolynomialWells { roots } = self {
            if roots.len() % 2 == 0 {
                return Err(DynamicsError::InvalidPotential(format!(
                    "polynomial wells need an odd number of roots, got {}",
                    roots.len()
                )));
            }
            if !roots.iter().all(|r| r.is_finite()) {
                return Err(DynamicsError::InvalidPotential(
                    "roots must be finite".into(),
                ));
            }
            if roots.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DynamicsError::InvalidPotential(
                    "roots must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    fn sine_frequency(l: u32) -> f64 {
        (1.5 + f64::from(l)) * PI
    }

    /// `−W'(x)` for unit `δ`.
    fn unit_force(&self, x: f64) -> f64 {
        match self {
            Self::DoubleWell => x * (1.0 - x * x),
            Self::PolynomialWells { roots } => -roots.iter().map(|r| x - r).product::<f64>(),
            Self::SineWells { l } => {
                let w = Self::sine_frequency(*l);
                -w * (w * x + FRAC_PI_2).cos()
            }
        }
    }

    /// `W(x)` for unit `δ`. Polynomial wells are normalized so the
    /// outermost root has zero energy, which reproduces the double well
    /// exactly for roots `(−1, 0, 1)`.
    fn unit_energy(&self, x: f64) -> f64 {
        match self {
            Self::DoubleWell => {
                let s = 1.0 - x * x;
                0.25 * s * s
            }
            Self::PolynomialWells { roots } => {
                let anti = antiderivative(&poly_from_roots(roots));
                let top = *roots.last().expect("validated non-empty");
                horner(&anti, x) - horner(&anti, top)
            }
            Self::SineWells { l } => (Self::sine_frequency(*l) * x + FRAC_PI_2).sin(),
        }
    }

    pub fn energy(&self, x: f64, delta: f64) -> f64 {
        delta * self.unit_energy(x)
    }
}

/// Monomial coefficients (constant first) of `∏ (x − r)`.
fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= r * ck;
        }
        c = next;
    }
    c
}

fn antiderivative(c: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(c.iter().enumerate().map(|(k, ck)| ck / (k + 1) as f64))
        .collect()
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| acc * x + ck)
}

/// Well force `−δ W'(x)`.
pub fn potential_force(v: &PotentialVariant, x: f64, delta: f64) -> f64 {
    delta * v.unit_force(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcmpParams {
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub coupling: CouplingModel,
    pub potential: PotentialVariant,
    /// Multiply the diffusion term by `(1 − x²)²`.
    pub trapping: bool,
}

impl AcmpParams {
    /// Double-well, non-trapping parameters.
    pub fn new(alpha: Vec<f64>, delta: Vec<f64>, coupling: CouplingModel) -> Self {
        Self {
            alpha,
            delta,
            coupling,
            potential: PotentialVariant::DoubleWell,
            trapping: false,
        }
    }

    /// Same `α` and `δ` in all `dim` channels.
    pub fn uniform(dim: usize, alpha: f64, delta: f64, coupling: CouplingModel) -> Self {
        Self::new(vec![alpha; dim], vec![delta; dim], coupling)
    }

    pub fn with_potential(mut self, potential: PotentialVariant) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_trapping(mut self, trapping: bool) -> Self {
        self.trapping = trapping;
        self
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self, dim: usize) -> Result<(), DynamicsError> {
        for (what, v) in [("alpha", &self.alpha), ("delta", &self.delta)] {
            if v.len() != dim {
                return Err(DynamicsError::DimensionMismatch {
                    what,
                    expected: dim,
                    found: v.len(),
                });
            }
            if let Some(bad) = v.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                return Err(DynamicsError::InvalidParameter(format!(
                    "{what} entries must be finite and non-negative, got {bad}"
                )));
            }
        }
        self.potential.validate()
    }

    /// The common value of `α` when all channels agree.
    pub fn scalar_alpha(&self) -> Option<f64> {
        let first = *self.alpha.first()?;
        self.alpha.iter().all(|&a| a == first).then_some(first)
    }
}

fn check_features(g: &Graph, x: &FeatureState) -> Result<(), DynamicsError> {
    if x.nodes() != g.node_count() {
        return Err(DynamicsError::DimensionMismatch {
            what: "feature rows",
            expected: g.node_count(),
            found: x.nodes(),
        });
    }
    Ok(())
}

/// `out_i = Σ_j c_ij (x_j − x_i)`, one coefficient per stored entry.
fn diffusion_into(g: &Graph, coef: &[f64], x: &FeatureState, out: &mut [f64]) {
    let d = x.dim();
    let xs = x.as_slice();
    let nbr = g.neighbor_indices();
    for i in 0..g.node_count() {
        let xi = &xs[i * d..(i + 1) * d];
        let oi = &mut out[i * d..(i + 1) * d];
        oi.fill(0.0);
        for k in g.row_range(i) {
            let c = coef[k];
            let xj = &xs[nbr[k] * d..(nbr[k] + 1) * d];
            for ch in 0..d {
                oi[ch] += c * (xj[ch] - xi[ch]);
            }
        }
    }
}

/// Allen-Cahn system bound to a graph, reusing coupling tables and buffers
/// between evaluations.
#[derive(Debug, Clone)]
pub struct AcmpSystem<'g> {
    graph: &'g Graph,
    params: AcmpParams,
    coupling: PreparedCoupling,
    table: EdgeTable,
}

impl<'g> AcmpSystem<'g> {
    pub fn new(graph: &'g Graph, params: AcmpParams) -> Result<Self, DynamicsError> {
        params.validate(params.dim())?;
        let coupling = PreparedCoupling::new(&params.coupling, graph)?;
        Ok(Self {
            graph,
            table: EdgeTable::zeros(graph),
            params,
            coupling,
        })
    }

    pub fn params(&self) -> &AcmpParams {
        &self.params
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Evaluates the derivative at `x` into `out`, honoring `params.trapping`.
    pub fn eval(&mut self, x: &FeatureState, out: &mut FeatureState) -> Result<(), DynamicsError> {
        self.eval_with(x, out, self.params.trapping)
    }

    fn eval_with(
        &mut self,
        x: &FeatureState,
        out: &mut FeatureState,
        trapping: bool,
    ) -> Result<(), DynamicsError> {
        check_features(self.graph, x)?;
        if x.dim() != self.params.dim() {
            return Err(DynamicsError::DimensionMismatch {
                what: "feature channels",
                expected: self.params.dim(),
                found: x.dim(),
            });
        }
        if !out.same_shape(x) {
            *out = FeatureState::zeros(x.nodes(), x.dim()).expect("non-empty shape");
        }
        self.coupling
            .evaluate_into(self.graph, x, &mut self.table)?;
        diffusion_into(self.graph, self.table.values(), x, out.as_mut_slice());

        let d = x.dim();
        let p = &self.params;
        for (xi, oi) in x
            .as_slice()
            .chunks_exact(d)
            .zip(out.as_mut_slice().chunks_exact_mut(d))
        {
            for ch in 0..d {
                let v = xi[ch];
                let mut diff = p.alpha[ch] * oi[ch];
                if trapping {
                    let s = 1.0 - v * v;
                    diff *= s * s;
                }
                oi[ch] = diff + potential_force(&p.potential, v, p.delta[ch]);
            }
        }
        Ok(())
    }
}

fn fresh_out(x: &FeatureState) -> FeatureState {
    FeatureState::zeros(x.nodes(), x.dim()).expect("non-empty shape")
}

/// Allen-Cahn message passing derivative. The trapping factor is applied
/// when `params.trapping` is set.
pub fn rhs_acmp(
    g: &Graph,
    x: &FeatureState,
    params: &AcmpParams,
) -> Result<FeatureState, DynamicsError> {
    let mut out = fresh_out(x);
    AcmpSystem::new(g, params.clone())?.eval(x, &mut out)?;
    Ok(out)
}

/// [`rhs_acmp`] with the coupling replaced by GCN coefficients and the same
/// scalar bias.
pub fn rhs_acmp_gcn(
    g: &Graph,
    x: &FeatureState,
    params: &AcmpParams,
) -> Result<FeatureState, DynamicsError> {
    let beta = params.coupling.scalar_beta().ok_or_else(|| {
        DynamicsError::InvalidParameter("the GCN model needs a scalar beta".into())
    })?;
    let gcn = AcmpParams {
        coupling: CouplingModel::gcn(beta)?,
        ..params.clone()
    };
    rhs_acmp(g, x, &gcn)
}

/// Diffusion `Σ_j c_ij (x_j − x_i)` with the effective coefficients of
/// `coupling`.
pub fn rhs_grand(
    g: &Graph,
    x: &FeatureState,
    coupling: &CouplingModel,
) -> Result<FeatureState, DynamicsError> {
    check_features(g, x)?;
    let table = PreparedCoupling::new(coupling, g)?.evaluate(g, x)?;
    let mut out = fresh_out(x);
    diffusion_into(g, table.values(), x, out.as_mut_slice());
    Ok(out)
}

/// `(2/N) Σ_j a_ij (x_j − x_i)` with the raw adjacency weights.
pub fn rhs_gradient_flow(g: &Graph, x: &FeatureState) -> Result<FeatureState, DynamicsError> {
    check_features(g, x)?;
    let mut out = fresh_out(x);
    diffusion_into(g, g.weights(), x, out.as_mut_slice());
    let scale = 2.0 / g.node_count() as f64;
    out.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Allen-Cahn derivative with diffusion damped by `(1 − x_i²)²` per channel.
pub fn rhs_trapping(
    g: &Graph,
    x: &FeatureState,
    params: &AcmpParams,
) -> Result<FeatureState, DynamicsError> {
    let mut out = fresh_out(x);
    AcmpSystem::new(g, params.clone())?.eval_with(x, &mut out, true)?;
    Ok(out)
}

/// `½ α Σ_i Σ_{j∈N_i} (a_ij − β_ij) ‖x_i − x_j‖² + Σ_i Σ_k W_k(x_ik)`.
///
/// Requires all channels of `α` to be equal.
pub fn pseudo_gl_energy(
    g: &Graph,
    x: &FeatureState,
    params: &AcmpParams,
) -> Result<f64, DynamicsError> {
    check_features(g, x)?;
    params.validate(x.dim())?;
    let alpha = params
        .scalar_alpha()
        .ok_or_else(|| DynamicsError::VectorAlpha(params.alpha.clone()))?;
    let table = PreparedCoupling::new(&params.coupling, g)?.evaluate(g, x)?;
    let nbr = g.neighbor_indices();
    let mut interaction = 0.0;
    for i in 0..g.node_count() {
        let xi = x.row(i);
        for k in g.row_range(i) {
            let xj = x.row(nbr[k]);
            let dist: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            interaction += table.values()[k] * dist;
        }
    }
    let wells: f64 = x
        .rows()
        .flat_map(|row| row.iter().zip(&params.delta))
        .map(|(&v, &dk)| params.potential.energy(v, dk))
        .sum();
    Ok(0.5 * alpha * interaction + wells)
}
