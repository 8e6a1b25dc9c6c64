//! Graph-based semi-supervised classification of empirical probability measures.
//!
//! The pipeline: represent each sample as an [`measures::EmpiricalMeasure`], measure
//! distances with exact optimal transport ([`transport`]) or its linearization
//! ([`lot`]), build a geometric graph ([`graph`]), and propagate labels by minimizing
//! a constrained graph p-Dirichlet energy ([`learn`]). [`dirichlet`], [`tlp`] and
//! [`rates`] provide the quantities used to check discrete-to-continuum behavior.

pub mod dirichlet;
pub mod experiment;
pub mod graph;
pub mod learn;
pub mod lot;
pub mod measures;
pub mod rates;
pub mod rng;
pub mod tlp;
pub mod transport;
