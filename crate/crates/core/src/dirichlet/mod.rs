//! Graph p-Dirichlet energies and the graph p-Laplacian.
//!
//! For a graph with weights `W` at scale `eps` over `n` nodes:
//!
//! ```text
//! E(f)   = 1 / (n^2 eps^p) * sum_{i,j} W_ij |f_i - f_j|^p
//! L f(i) = p / (2 n eps^p) * sum_j W_ij |f_i - f_j|^{p-2} (f_i - f_j)
//! ```
//!
//! Both double sums run over ordered pairs. With these normalizations
//! `E(f) = (4/p) <L f, f>` in `L^2` of the uniform node measure, and the first
//! variation of `E` in direction `g` is `4 <L f, g>`.
//!
//! Reductions are per-node partial sums combined by a fixed pairwise tree, so
//! results do not depend on thread scheduling.

mod continuum;

pub use continuum::{
    continuum_energy, laplace_beltrami_translation, ContinuumSpec, Density, Quadrature, TestFunction,
};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::transport::pairwise_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirichletError {
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("point {0:?} is not an interior point of smoothness")]
    BoundaryPoint(Vec<f64>),
}

pub type Result<T> = std::result::Result<T, DirichletError>;

/// Ratio `E(f) / <L f, f>` implied by the normalizations above.
pub fn energy_operator_ratio(p: f64) -> f64 {
    4.0 / p
}

/// `|x|^p`, with the common exponents kept exact.
#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        x.abs().powf(p)
    }
}

/// `|x|^{p-2} x`.
#[inline]
pub(crate) fn signed_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x
    } else if x == 0.0 {
        0.0
    } else {
        x.abs().powf(p - 2.0) * x
    }
}

fn check_shape(graph: &WeightedGraph, f: &[f64]) -> Result<()> {
    if f.len() != graph.n() {
        return Err(DirichletError::ShapeMismatch {
            expected: graph.n(),
            found: f.len(),
        });
    }
    Ok(())
}

/// Unnormalized double sum `sum_{i,j} W_ij |f_i - f_j|^p`.
pub(crate) fn weighted_variation(graph: &WeightedGraph, f: &[f64], p: f64) -> f64 {
    let per_node: Vec<f64> = (0..graph.n())
        .into_par_iter()
        .map(|i| {
            let terms: Vec<f64> = graph
                .neighbors(i)
                .map(|(j, w)| w * abs_pow(f[i] - f[j], p))
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    pairwise_sum(&per_node)
}

/// Unnormalized p-Laplacian `sum_j W_ij |f_i - f_j|^{p-2} (f_i - f_j)`.
pub(crate) fn raw_p_laplacian(graph: &WeightedGraph, f: &[f64], p: f64) -> Vec<f64> {
    (0..graph.n())
        .into_par_iter()
        .map(|i| {
            let terms: Vec<f64> = graph
                .neighbors(i)
                .map(|(j, w)| w * signed_pow(f[i] - f[j], p))
                .collect();
            pairwise_sum(&terms)
        })
        .collect()
}

/// Graph p-Dirichlet energy of a scalar node function (`p >= 1`).
pub fn graph_dirichlet_energy(graph: &WeightedGraph, f: &[f64], p: f64) -> Result<f64> {
    check_shape(graph, f)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(DirichletError::InvalidExponent(p));
    }
    let n = graph.n() as f64;
    let eps = graph.epsilon();
    Ok(weighted_variation(graph, f, p) / (n * n * eps.powf(p)))
}

/// Energy of a vector-valued function given column by column (summed over columns).
pub fn graph_dirichlet_energy_columns(graph: &WeightedGraph, columns: &[Vec<f64>], p: f64) -> Result<f64> {
    let parts = columns
        .iter()
        .map(|c| graph_dirichlet_energy(graph, c, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&parts))
}

/// Graph p-Laplacian (`p >= 2`).
pub fn graph_p_laplacian(graph: &WeightedGraph, f: &[f64], p: f64) -> Result<Vec<f64>> {
    check_shape(graph, f)?;
    if !(p >= 2.0 && p.is_finite()) {
        return Err(DirichletError::InvalidExponent(p));
    }
    let n = graph.n() as f64;
    let scale = p / (2.0 * n * graph.epsilon().powf(p));
    Ok(raw_p_laplacian(graph, f, p).into_iter().map(|x| scale * x).collect())
}

/// Inner product in `L^2` of the uniform measure on the nodes: `(1/n) sum_i a_i b_i`.
pub fn node_inner_product(a: &[f64], b: &[f64]) -> f64 {
    let terms: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&terms) / a.len() as f64
}
