//! TL^p distance between function–measure pairs.
//!
//! For `(f, P)` and `(g, Q)` on a common metric space `(X, d)`,
//!
//! ```text
//! TL^p((f, P), (g, Q))^p = min over couplings pi of P and Q of
//!                           sum pi_ij (d(x_i, y_j)^p + |f(x_i) - g(y_j)|^p)
//! ```
//!
//! The ground space is either Euclidean space or the space of empirical measures
//! under `W_2`.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::dirichlet::abs_pow;
use crate::measures::EmpiricalMeasure;
use crate::transport::{self, CostMatrix, TransportError, MAX_FLOW_ENTRIES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TlpError {
    #[error("incompatible ground spaces: {0}")]
    IncompatibleGround(String),
    #[error("problem with {entries} atom pairs exceeds the limit of {limit}")]
    SizeLimitExceeded { entries: usize, limit: usize },
    #[error("invalid function over measure: {0}")]
    Invalid(String),
    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

pub type Result<T> = std::result::Result<T, TlpError>;

/// Atoms of the ground space.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Points of `R^dim`, stored row-major.
    Euclidean { coords: Vec<f64>, dim: usize },
    /// Empirical measures compared with `W_2`.
    Measures(Vec<EmpiricalMeasure>),
}

impl Support {
    pub fn euclidean<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.as_ref().len());
        if dim == 0 || points.iter().any(|p| p.as_ref().len() != dim) {
            return Err(TlpError::Invalid("points must share a positive dimension".into()));
        }
        Ok(Support::Euclidean {
            coords: points.iter().flat_map(|p| p.as_ref().iter().copied()).collect(),
            dim,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Support::Euclidean { coords, dim } => coords.len() / dim,
            Support::Measures(ms) => ms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_compatible(&self, other: &Support) -> Result<()> {
        match (self, other) {
            (Support::Euclidean { dim: a, .. }, Support::Euclidean { dim: b, .. }) if a == b => Ok(()),
            (Support::Euclidean { dim: a, .. }, Support::Euclidean { dim: b, .. }) => Err(
                TlpError::IncompatibleGround(format!("Euclidean dimensions {a} and {b}")),
            ),
            (Support::Measures(a), Support::Measures(b)) => {
                let dims = a.iter().chain(b).map(EmpiricalMeasure::dim);
                if dims.clone().min() == dims.max() {
                    Ok(())
                } else {
                    Err(TlpError::IncompatibleGround("measures of different dimensions".into()))
                }
            }
            _ => Err(TlpError::IncompatibleGround(
                "Euclidean points versus measures".into(),
            )),
        }
    }

    /// Ground distances between every atom of `self` and every atom of `other`.
    fn distances(&self, other: &Support) -> Result<Vec<f64>> {
        let (ra, rb) = (self.len(), other.len());
        match (self, other) {
            (Support::Euclidean { coords: x, dim }, Support::Euclidean { coords: y, .. }) => Ok((0..ra * rb)
                .map(|k| {
                    let (i, j) = (k / rb, k % rb);
                    transport::squared_distance(&x[i * dim..(i + 1) * dim], &y[j * dim..(j + 1) * dim]).sqrt()
                })
                .collect()),
            (Support::Measures(a), Support::Measures(b)) => (0..ra * rb)
                .into_par_iter()
                .map(|k| Ok(transport::w2_exact(&a[k / rb], &b[k % rb])?.0))
                .collect(),
            _ => unreachable!("checked compatible"),
        }
    }

    fn canonical_cmp(&self, other: &Support) -> Ordering {
        let flat = |s: &Support| -> Vec<f64> {
            match s {
                Support::Euclidean { coords, .. } => coords.clone(),
                Support::Measures(ms) => ms.iter().flat_map(|m| m.coords().iter().copied()).collect(),
            }
        };
        lex_cmp(&flat(self), &flat(other))
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// A function given by its values on the atoms of a discrete probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionOverMeasure {
    support: Support,
    masses: Vec<f64>,
    values: Vec<f64>,
}

impl FunctionOverMeasure {
    pub fn new(support: Support, masses: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let m = support.len();
        if m == 0 || masses.len() != m || values.len() != m {
            return Err(TlpError::Invalid(format!(
                "{m} atoms, {} masses, {} values",
                masses.len(),
                values.len()
            )));
        }
        if masses.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(TlpError::Invalid("masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TlpError::Invalid(format!("masses sum to {total}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TlpError::Invalid("values must be finite".into()));
        }
        Ok(Self { support, masses, values })
    }

    /// Uniform masses over the atoms.
    pub fn uniform(support: Support, values: Vec<f64>) -> Result<Self> {
        let m = support.len().max(1);
        Self::new(support, vec![1.0 / m as f64; m], values)
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        lex_cmp(&self.values, &other.values)
            .then_with(|| lex_cmp(&self.masses, &other.masses))
            .then_with(|| self.support.canonical_cmp(&other.support))
    }
}

/// Lifted cost matrix `d(x_i, y_j)^p + |f_i - g_j|^p`.
pub fn lifted_cost(a: &FunctionOverMeasure, b: &FunctionOverMeasure, p: f64) -> Result<CostMatrix> {
    a.support.check_compatible(&b.support)?;
    let (ra, rb) = (a.support.len(), b.support.len());
    if ra * rb > MAX_FLOW_ENTRIES {
        return Err(TlpError::SizeLimitExceeded {
            entries: ra * rb,
            limit: MAX_FLOW_ENTRIES,
        });
    }
    let ground = a.support.distances(&b.support)?;
    Ok(CostMatrix::from_fn(ra, rb, |i, j| {
        abs_pow(ground[i * rb + j], p) + abs_pow(a.values[i] - b.values[j], p)
    }))
}

/// Exact TL^p distance (`p >= 1`).
///
/// Arguments are put in a canonical order first, so the result is bitwise symmetric.
pub fn tlp_distance(a: &FunctionOverMeasure, b: &FunctionOverMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(TlpError::InvalidExponent(p));
    }
    let (a, b) = if a.canonical_cmp(b).is_gt() { (b, a) } else { (a, b) };
    let cost = lifted_cost(a, b, p)?;
    let plan = transport::discrete_ot(&cost, &a.masses, &b.masses)?;
    Ok(plan.total_cost.max(0.0).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(xs: &[f64]) -> Support {
        Support::euclidean(&xs.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_atoms() {
        let a = FunctionOverMeasure::uniform(Support::euclidean(&[[0.0, 0.0]]).unwrap(), vec![0.0]).unwrap();
        let b = FunctionOverMeasure::uniform(Support::euclidean(&[[3.0, 0.0]]).unwrap(), vec![4.0]).unwrap();
        assert_eq!(tlp_distance(&a, &b, 2.0).unwrap(), 5.0);
        assert_eq!(tlp_distance(&a, &a, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn two_atoms_match_enumeration() {
        let a = FunctionOverMeasure::uniform(points(&[0.0, 1.0]), vec![0.0, 5.0]).unwrap();
        let b = FunctionOverMeasure::uniform(points(&[1.0, 0.0]), vec![0.0, 5.0]).unwrap();
        // identity coupling: (1 + 0)/2 + (1 + 0)/2 = 1; swap: (0 + 25)/2 * 2 = 25
        assert!((tlp_distance(&a, &b, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_masses() {
        let a = FunctionOverMeasure::new(points(&[0.0, 2.0]), vec![0.25, 0.75], vec![1.0, 1.0]).unwrap();
        let b = FunctionOverMeasure::uniform(points(&[0.0]), vec![1.0]).unwrap();
        // all of a moves to 0: 0.75 * 2^2
        assert!((tlp_distance(&a, &b, 2.0).unwrap() - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn measure_ground() {
        let base = EmpiricalMeasure::from_points(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let shifted = base.translated(&[3.0, 4.0]).unwrap();
        let a = FunctionOverMeasure::uniform(Support::Measures(vec![base.clone()]), vec![0.0]).unwrap();
        let b = FunctionOverMeasure::uniform(Support::Measures(vec![shifted]), vec![0.0]).unwrap();
        assert!((tlp_distance(&a, &b, 2.0).unwrap() - 5.0).abs() < 1e-12);
        let c = FunctionOverMeasure::uniform(points(&[0.0]), vec![0.0]).unwrap();
        assert!(matches!(tlp_distance(&a, &c, 2.0), Err(TlpError::IncompatibleGround(_))));
    }

    #[test]
    fn rejects_invalid() {
        assert!(FunctionOverMeasure::new(points(&[0.0, 1.0]), vec![0.5, 0.4], vec![0.0, 0.0]).is_err());
        assert!(FunctionOverMeasure::uniform(points(&[0.0]), vec![f64::NAN]).is_err());
        let a = FunctionOverMeasure::uniform(points(&[0.0]), vec![0.0]).unwrap();
        assert!(tlp_distance(&a, &a, 0.5).is_err());
    }
}
