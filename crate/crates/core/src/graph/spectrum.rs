use nalgebra::DMatrix;

use super::{Graph, GraphError};

/// Largest node count accepted by the dense eigensolver.
pub const DEFAULT_SPECTRAL_CAP: usize = 2048;

/// Relative tolerance below which an eigenvalue of `D - A` counts as zero.
const ZERO_EIGEN_RTOL: f64 = 1e-9;

/// Spectral constants of the combinatorial Laplacian `D - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpectrum {
    /// Smallest eigenvalue above the zero tolerance; `None` when `D - A = 0`.
    pub lambda_min_positive: Option<f64>,
    pub lambda_max: f64,
    pub degrees: Vec<f64>,
    /// Multiplicity of the eigenvalue zero (number of connected components).
    pub zero_multiplicity: usize,
    /// All eigenvalues in increasing order.
    pub eigenvalues: Vec<f64>,
}

pub fn spectrum(g: &Graph) -> Result<GraphSpectrum, GraphError> {
    spectrum_with_cap(g, DEFAULT_SPECTRAL_CAP)
}

/// Dense symmetric eigendecomposition of `D - A`.
pub fn spectrum_with_cap(g: &Graph, cap: usize) -> Result<GraphSpectrum, GraphError> {
    let n = g.node_count();
    if n > cap {
        return Err(GraphError::GraphTooLargeForDenseSpectrum { nodes: n, cap });
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        lap[(i, i)] = g.degree(i);
        for (j, w) in g.neighbors(i) {
            lap[(i, j)] -= w;
        }
    }
    let mut eigenvalues: Vec<f64> = lap.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let lambda_max = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let zero_tol = ZERO_EIGEN_RTOL * lambda_max;
    let zero_multiplicity = eigenvalues.iter().filter(|&&l| l <= zero_tol).count();
    let lambda_min_positive = if lambda_max > 0.0 {
        eigenvalues.iter().copied().find(|&l| l > zero_tol)
    } else {
        None
    };
    Ok(GraphSpectrum {
        lambda_min_positive,
        lambda_max,
        degrees: g.degrees().to_vec(),
        zero_multiplicity,
        eigenvalues,
    })
}
