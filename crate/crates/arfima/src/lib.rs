//! ARFIMA long-memory time series: exact Gaussian simulation, the four
//! classical parametric estimators (frequency-domain ML, Whittle,
//! time-domain ML, conditional sum of squares), pseudo-true parameters of
//! deliberately mis-specified models, and the associated limit laws.
//!
//! # Conventions
//!
//! * The AR and MA operators use **plus** signs,
//!   `phi(z) = 1 + phi_1 z + ... + phi_p z^p` and
//!   `theta(z) = 1 + theta_1 z + ... + theta_q z^q`. This is *not* the
//!   Box-Jenkins minus convention; negate coefficients when comparing with
//!   software that uses it.
//! * The process mean is fixed at zero everywhere. No demeaning is applied
//!   to inputs anywhere in the crate; simulated series are zero mean and
//!   the time-domain likelihood assumes a known zero mean.
//! * Spectral densities are parameterised as
//!   `f(lambda) = sigma^2/(2 pi) * g(lambda) * (2 sin(lambda/2))^(-2d)`
//!   with `g = |theta(e^{i lambda})|^2 / |phi(e^{i lambda})|^2`.
//!
//! # Reproducibility
//!
//! All random draws come from counter-based ChaCha12 streams keyed by a
//! 64-bit seed, with the replication index selecting the stream; standard
//! normals are produced by inverse-CDF transformation. See
//! [`simulate::standard_normals`] for the exact contract and test vectors.

pub mod asymptotics;
pub mod estimators;
pub mod experiment;
pub mod kde;
pub mod model;
pub mod optimize;
pub mod poly;
pub mod pseudo_true;
pub mod quadrature;
pub mod simulate;
pub mod special;
mod sowell;

pub use estimators::{EstimationResult, EstimatorKind, Periodogram};
pub use model::{ArfimaSpec, EtaVector, FamilySpec, ModelError};
pub use pseudo_true::{MisSpecPair, PseudoTrueSolution};
