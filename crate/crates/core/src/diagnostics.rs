//! Energies, moments, clustering and flocking detectors over states and
//! trajectories.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{pseudo_gl_energy, AcmpParams, DynamicsError};
use crate::graph::{Graph, SignedMatrix};
use crate::ode::Trajectory;
use crate::state::FeatureState;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("group {0} of the partition is empty")]
    EmptyGroup(u8),
    #[error("partition labels must be 0 or 1, got {0}")]
    InvalidLabel(u32),
    #[error("sign clustering supports at most 63 channels, got {0}")]
    TooManyChannels(usize),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("explicit matrix has no entry for ({i}, {j})")]
    MissingEntry { i: usize, j: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn check_rows(g: &Graph, x: &FeatureState) -> Result<(), DiagnosticsError> {
    if x.nodes() != g.node_count() {
        return Err(DiagnosticsError::DimensionMismatch {
            what: "feature rows",
            expected: g.node_count(),
            found: x.nodes(),
        });
    }
    Ok(())
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `(1/N) Σ_i Σ_{j∈N_i} a_ij ‖x_i − x_j‖²`, every edge counted from both ends.
pub fn dirichlet_energy(g: &Graph, x: &FeatureState) -> Result<f64, DiagnosticsError> {
    check_rows(g, x)?;
    let mut sum = 0.0;
    for i in 0..g.node_count() {
        let xi = x.row(i);
        for (j, w) in g.neighbors(i) {
            sum += w * dist_sq(xi, x.row(j));
        }
    }
    Ok(sum / g.node_count() as f64)
}

/// A `d × d` matrix per stored graph entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTensors {
    dim: usize,
    data: Vec<f64>,
}

impl EdgeTensors {
    /// `f(i, j, a_ij)` returns the row-major tensor of entry `(i, j)`.
    pub fn from_fn(
        g: &Graph,
        dim: usize,
        mut f: impl FnMut(usize, usize, f64) -> Vec<f64>,
    ) -> Result<Self, DiagnosticsError> {
        let mut data = Vec::with_capacity(g.nnz() * dim * dim);
        for i in 0..g.node_count() {
            for (j, w) in g.neighbors(i) {
                let t = f(i, j, w);
                if t.len() != dim * dim {
                    return Err(DiagnosticsError::DimensionMismatch {
                        what: "tensor entries",
                        expected: dim * dim,
                        found: t.len(),
                    });
                }
                data.extend(t);
            }
        }
        Ok(Self { dim, data })
    }

    /// `a_ij · I`.
    pub fn scaled_identity(g: &Graph, dim: usize) -> Self {
        Self::from_fn(g, dim, |_, _, w| {
            let mut t = vec![0.0; dim * dim];
            (0..dim).for_each(|k| t[k * dim + k] = w);
            t
        })
        .expect("shape by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn entry(&self, k: usize) -> &[f64] {
        let s = self.dim * self.dim;
        &self.data[k * s..(k + 1) * s]
    }
}

/// `(1/N) Σ_i Σ_{j∈N_i} (x_i − x_j)ᵀ A_ij (x_i − x_j)`. Negative values are
/// possible for indefinite tensors and are returned as-is.
pub fn tensor_dirichlet_energy(
    g: &Graph,
    x: &FeatureState,
    tensors: &EdgeTensors,
) -> Result<f64, DiagnosticsError> {
    check_rows(g, x)?;
    let d = x.dim();
    if tensors.dim != d || tensors.data.len() != g.nnz() * d * d {
        return Err(DiagnosticsError::DimensionMismatch {
            what: "tensor dimension",
            expected: d,
            found: tensors.dim,
        });
    }
    let nbr = g.neighbor_indices();
    let mut diff = vec![0.0; d];
    let mut sum = 0.0;
    for i in 0..g.node_count() {
        for k in g.row_range(i) {
            for (c, (a, b)) in diff.iter_mut().zip(x.row(i).iter().zip(x.row(nbr[k]))) {
                *c = a - b;
            }
            let t = tensors.entry(k);
            for r in 0..d {
                let row: f64 = (0..d).map(|c| t[r * d + c] * diff[c]).sum();
                sum += diff[r] * row;
            }
        }
    }
    Ok(sum / g.node_count() as f64)
}

/// Assignment of nodes to two groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    second: Vec<bool>,
}

impl Bipartition {
    /// Nodes `0..n1` in the first group, `n1..n1+n2` in the second.
    pub fn split(n1: usize, n2: usize) -> Self {
        Self {
            second: (0..n1 + n2).map(|i| i >= n1).collect(),
        }
    }

    pub fn from_labels(labels: &[u32]) -> Result<Self, DiagnosticsError> {
        let second = labels
            .iter()
            .map(|&l| match l {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(DiagnosticsError::InvalidLabel(other)),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { second })
    }

    pub fn len(&self) -> usize {
        self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.second.is_empty()
    }

    pub fn in_second(&self, i: usize) -> bool {
        self.second[i]
    }

    /// Members of group 0 or 1.
    pub fn group(&self, which: u8) -> Vec<usize> {
        let want = which == 1;
        (0..self.len())
            .filter(|&i| self.second[i] == want)
            .collect()
    }

    pub fn sizes(&self) -> (usize, usize) {
        let n2 = self.second.iter().filter(|&&s| s).count();
        (self.len() - n2, n2)
    }

    /// Group sizes, or an error naming the empty group.
    pub fn require_both(&self) -> Result<(usize, usize), DiagnosticsError> {
        match self.sizes() {
            (0, _) => Err(DiagnosticsError::EmptyGroup(0)),
            (_, 0) => Err(DiagnosticsError::EmptyGroup(1)),
            s => Ok(s),
        }
    }

    fn check_len(&self, n: usize) -> Result<(), DiagnosticsError> {
        if self.len() != n {
            return Err(DiagnosticsError::DimensionMismatch {
                what: "partition length",
                expected: n,
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Per-channel group moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    /// `(1/N₁) Σ_{i∈I₁} x_i²`.
    pub m2_v: Vec<f64>,
    /// `(1/N₂) Σ_{i∈I₂} x_i²`.
    pub m2_w: Vec<f64>,
    /// Second moments about the group centers, summed over both groups.
    pub m2_hat: Vec<f64>,
    pub centers: [Vec<f64>; 2],
}

impl MomentReport {
    /// `M₂ = M₂(V) + M₂(W)` per channel.
    pub fn m2(&self) -> Vec<f64> {
        self.m2_v
            .iter()
            .zip(&self.m2_w)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Moments of both groups. An empty group contributes zeros.
pub fn moments(
    x: &FeatureState,
    partition: &Bipartition,
) -> Result<MomentReport, DiagnosticsError> {
    partition.check_len(x.nodes())?;
    let d = x.dim();
    let stats = |members: &[usize]| {
        let n = members.len().max(1) as f64;
        let mut center = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for &i in members {
            for (k, &v) in x.row(i).iter().enumerate() {
                center[k] += v;
                m2[k] += v * v;
            }
        }
        center.iter_mut().for_each(|c| *c /= n);
        m2.iter_mut().for_each(|m| *m /= n);
        let mut hat = vec![0.0; d];
        for &i in members {
            for (k, &v) in x.row(i).iter().enumerate() {
                hat[k] += (v - center[k]) * (v - center[k]);
            }
        }
        hat.iter_mut().for_each(|h| *h /= n);
        (center, m2, hat)
    };
    let (c1, m2_v, h1) = stats(&partition.group(0));
    let (c2, m2_w, h2) = stats(&partition.group(1));
    Ok(MomentReport {
        m2_v,
        m2_w,
        m2_hat: h1.iter().zip(&h2).map(|(a, b)| a + b).collect(),
        centers: [c1, c2],
    })
}

/// Upper bound on `M₂` along flocking runs, per channel:
/// `max(α C_m / δ + 2, M₂(0))` with `C_m = D · max(3N₂ + 2N₁, 5N₂)`.
pub fn m2_bound(
    d_strength: f64,
    sizes: (usize, usize),
    alpha: f64,
    delta: f64,
    m2_initial: f64,
) -> Result<f64, DiagnosticsError> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(DiagnosticsError::InvalidThreshold(format!(
            "the moment bound needs delta > 0, got {delta}"
        )));
    }
    let (n1, n2) = (sizes.0 as f64, sizes.1 as f64);
    let c_m = d_strength * (3.0 * n2 + 2.0 * n1).max(5.0 * n2);
    Ok((alpha * c_m / delta + 2.0).max(m2_initial))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlockingCondition {
    pub holds: bool,
    /// `α(S − D) min(N₁, N₂) − (δ + η)`.
    pub margin: f64,
    /// Smallest effective coupling inside the groups.
    pub s: f64,
    /// Largest repulsion magnitude across the groups.
    pub d: f64,
    /// Whether the coefficients have the required sign structure: positive
    /// inside groups, non-positive across.
    pub sign_structure: bool,
    pub sizes: (usize, usize),
}

/// Evaluates the sufficient condition `α(S − D) min(N₁, N₂) ≥ δ + η` from an
/// explicit effective coupling matrix. Every off-diagonal pair must be
/// defined.
pub fn flocking_condition(
    matrix: &SignedMatrix,
    partition: &Bipartition,
    alpha: f64,
    delta: f64,
    eta: f64,
) -> Result<FlockingCondition, DiagnosticsError> {
    partition.check_len(matrix.size())?;
    let sizes = partition.require_both()?;
    let n = matrix.size();
    let mut s = f64::INFINITY;
    let mut d = 0.0_f64;
    let mut sign_structure = true;
    for i in 0..n {
        for j in i + 1..n {
            let v = matrix
                .get(i, j)
                .ok_or(DiagnosticsError::MissingEntry { i, j })?;
            if partition.in_second(i) == partition.in_second(j) {
                s = s.min(v);
                sign_structure &= v > 0.0;
            } else {
                d = d.max(-v);
                sign_structure &= v <= 0.0;
            }
        }
    }
    // Singleton groups have no intra pairs; the bound is vacuous there.
    if s == f64::INFINITY {
        s = 0.0;
    }
    let margin = alpha * (s - d) * sizes.0.min(sizes.1) as f64 - (delta + eta);
    Ok(FlockingCondition {
        holds: margin >= 0.0,
        margin,
        s,
        d,
        sign_structure,
        sizes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlockingVerdict {
    /// Sup over samples of the largest component-wise distance inside group 1.
    pub intra_spread_1: f64,
    pub intra_spread_2: f64,
    /// Min over samples at `t ≥ t_check`, over cross pairs and channels, of
    /// the component-wise distance.
    pub inter_min: f64,
    pub separated: bool,
    pub c_prime: f64,
    pub t_check: f64,
    /// Number of samples at or after `t_check`.
    pub checked_samples: usize,
}

/// Component-wise bi-cluster check; every channel must separate.
pub fn bicluster_check(
    traj: &Trajectory,
    partition: &Bipartition,
    c_prime: f64,
    t_check: f64,
) -> Result<FlockingVerdict, DiagnosticsError> {
    if !(c_prime.is_finite() && c_prime >= 0.0 && t_check.is_finite()) {
        return Err(DiagnosticsError::InvalidThreshold(format!(
            "c_prime = {c_prime}, t_check = {t_check}"
        )));
    }
    partition.require_both()?;
    let g1 = partition.group(0);
    let g2 = partition.group(1);
    let spread = |x: &FeatureState, members: &[usize]| {
        let mut s = 0.0_f64;
        for k in 0..x.dim() {
            let (lo, hi) =
                members
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        let v = x.get(i, k);
                        (lo.min(v), hi.max(v))
                    });
            s = s.max(hi - lo);
        }
        s
    };
    let mut verdict = FlockingVerdict {
        intra_spread_1: 0.0,
        intra_spread_2: 0.0,
        inter_min: f64::INFINITY,
        separated: false,
        c_prime,
        t_check,
        checked_samples: 0,
    };
    for (t, x) in traj.samples() {
        partition.check_len(x.nodes())?;
        verdict.intra_spread_1 = verdict.intra_spread_1.max(spread(x, &g1));
        verdict.intra_spread_2 = verdict.intra_spread_2.max(spread(x, &g2));
        if t >= t_check {
            verdict.checked_samples += 1;
            for &i in &g1 {
                for &j in &g2 {
                    for (a, b) in x.row(i).iter().zip(x.row(j)) {
                        verdict.inter_min = verdict.inter_min.min((a - b).abs());
                    }
                }
            }
        }
    }
    verdict.separated = verdict.checked_samples > 0 && verdict.inter_min >= c_prime;
    if verdict.checked_samples == 0 {
        verdict.inter_min = 0.0;
    }
    Ok(verdict)
}

/// Cross-group energy and the lower bound implied by a minimum separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossEnergyBound {
    /// `(1/N) Σ_{i∈I₁, j∈I₂} a_ij ‖x_i − x_j‖²`.
    pub energy: f64,
    /// Measured `C`: minimum Euclidean distance over cross-group edges.
    pub separation: f64,
    /// `η₂ = Σ_{i∈I₁, j∈I₂} a_ij`.
    pub eta2: f64,
    /// `C² η₂ / N`.
    pub bound: f64,
}

pub fn cross_energy_bound(
    g: &Graph,
    x: &FeatureState,
    partition: &Bipartition,
) -> Result<CrossEnergyBound, DiagnosticsError> {
    check_rows(g, x)?;
    partition.check_len(g.node_count())?;
    let mut energy = 0.0;
    let mut eta2 = 0.0;
    let mut c_sq = f64::INFINITY;
    for i in partition.group(0) {
        for (j, w) in g.neighbors(i) {
            if partition.in_second(j) {
                let dsq = dist_sq(x.row(i), x.row(j));
                energy += w * dsq;
                eta2 += w;
                c_sq = c_sq.min(dsq);
            }
        }
    }
    if c_sq == f64::INFINITY {
        c_sq = 0.0;
    }
    let n = g.node_count() as f64;
    Ok(CrossEnergyBound {
        energy: energy / n,
        separation: c_sq.sqrt(),
        eta2,
        bound: c_sq * eta2 / n,
    })
}

/// Sign-pattern clusters: bit `k` of a node's corner index is set when
/// channel `k` is non-negative (exact zeros go to `+1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignClusters {
    pub corners: Vec<u64>,
    pub count: usize,
}

pub fn corner_index(row: &[f64]) -> u64 {
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v >= 0.0)
        .fold(0, |acc, (k, _)| acc | (1 << k))
}

pub fn sign_clusters(x: &FeatureState) -> Result<SignClusters, DiagnosticsError> {
    if x.dim() > 63 {
        return Err(DiagnosticsError::TooManyChannels(x.dim()));
    }
    let corners: Vec<u64> = x.rows().map(corner_index).collect();
    let mut distinct = corners.clone();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(SignClusters {
        count: distinct.len(),
        corners,
    })
}

/// Fraction of nodes within `tol` (sup-norm) of a point of `{±1}^d`.
pub fn corner_fraction(x: &FeatureState, tol: f64) -> f64 {
    let near = x
        .rows()
        .filter(|row| row.iter().all(|&v| (v.abs() - 1.0).abs() <= tol))
        .count();
    near as f64 / x.nodes() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub time: f64,
    pub dirichlet: f64,
    /// Present when the parameters define the energy (scalar `α`).
    pub pseudo_gl: Option<f64>,
    pub norm_sq: f64,
    pub mass_center: Vec<f64>,
}

pub fn energy_report(
    g: &Graph,
    t: f64,
    x: &FeatureState,
    params: Option<&AcmpParams>,
) -> Result<EnergyReport, DiagnosticsError> {
    let pseudo_gl = match params {
        Some(p) if p.scalar_alpha().is_some() => Some(pseudo_gl_energy(g, x, p)?),
        _ => None,
    };
    Ok(EnergyReport {
        time: t,
        dirichlet: dirichlet_energy(g, x)?,
        pseudo_gl,
        norm_sq: x.norm_sq(),
        mass_center: x.mass_center(),
    })
}

/// One report per recorded sample.
pub fn energy_series(
    traj: &Trajectory,
    g: &Graph,
    params: Option<&AcmpParams>,
) -> Result<Vec<EnergyReport>, DiagnosticsError> {
    traj.samples()
        .map(|(t, x)| energy_report(g, t, x, params))
        .collect()
}

/// Writes `t,dirichlet,pseudo_gl,norm_sq,mass_center_0..` with an empty
/// `pseudo_gl` cell where the energy is undefined.
pub fn write_energy_csv<W: Write>(mut out: W, reports: &[EnergyReport]) -> io::Result<()> {
    let d = reports.first().map_or(0, |r| r.mass_center.len());
    write!(out, "t,dirichlet,pseudo_gl,norm_sq")?;
    for k in 0..d {
        write!(out, ",mass_center_{k}")?;
    }
    writeln!(out)?;
    for r in reports {
        write!(out, "{},{},", r.time, r.dirichlet)?;
        if let Some(p) = r.pseudo_gl {
            write!(out, "{p}")?;
        }
        write!(out, ",{}", r.norm_sq)?;
        for c in &r.mass_center {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
