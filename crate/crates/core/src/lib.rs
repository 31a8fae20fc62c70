//! Simulation of noisy bitstring sampling from random-circuit-style
//! distributions, with the accompanying battery of fidelity estimators,
//! variance formulas, confidence intervals, and goodness-of-fit tests.
//!
//! The ideal output distribution of a random circuit over `M = 2^n`
//! bitstrings is modeled by its statistical surrogate, a flat-Dirichlet
//! realization ([`probmodel`]). Noise models ([`noise`]) distort it into the
//! distribution actually sampled; estimators ([`estimators`]) recover the
//! fidelity parameters from samples; [`uncertainty`] quantifies them;
//! [`gof`] tests the sampling model itself; [`prediction`] gives the
//! component-wise fidelity forecast. [`io`] holds the file formats shared
//! with the command-line tools.

pub mod error;
pub mod estimators;
pub mod gof;
pub mod io;
pub mod noise;
pub mod prediction;
pub mod probmodel;
pub mod seed;
pub mod special;
pub mod uncertainty;

pub use error::{Error, Result};
pub use estimators::{Estimate, Method, MleConfig};
pub use noise::{NoiseModel, ReadoutConstants, Sample};
pub use probmodel::{MomentSummary, ProbabilityVector};
pub use seed::SeedSpec;
pub use uncertainty::{ConfidenceInterval, VarianceReport};
