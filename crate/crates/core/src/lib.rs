//! Simulation and spectral laboratory for iterated random Lipschitz
//! mappings.
//!
//! The chain Z_{n+1} = Y_{n+1} Z_n is driven by i.i.d. random Lipschitz maps
//! Y_n of a metric space; an observable xi(g, x) accumulates the Birkhoff
//! sum S_n. This crate estimates the contraction-in-mean hypotheses, the
//! invariant measure, the asymptotic variance of S_n/sqrt(n) by independent
//! routes (batch extrapolation, Poisson equation, and the second derivative
//! of the leading eigenvalue of the discretized Fourier operators P(t)), and
//! runs empirical CLT / Berry-Esseen / local-CLT checks.
//!
//! Built-in model families: affine autoregressions, functional
//! autoregressions, and allowable positive-matrix products on the simplex
//! under the Hilbert metric.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod variance;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    MapAction, MapDistribution, MapSample, Metric, ModelFamily, Observable, ObservableEnvelope,
    StatePoint, SystemModel,
};
