//! Pulse-level simulator and analytic key-rate engine for a polarization BB84
//! link driven by a sub-Poissonian (quantum-dot-like) single-photon source.
//!
//! The crate is organised along the signal path:
//!
//! - [`source`]: photon-number statistics from `(mu, g2)`, emission-time
//!   model, and a pulsed Hanbury Brown–Twiss `g2` estimator.
//! - [`optics`]: loss budget, polarization leakage, fiber channel, SPAD
//!   detection and software gating.
//! - [`protocol`]: BB84 endpoints, sifting, QBER, CASCADE reconciliation,
//!   privacy amplification and the framed classical channel.
//! - [`rates`]: closed-form QBER / sifted-rate model, CASCADE and GLLP net
//!   rates, distance solvers and parameter sweeps.
//! - [`scenario`]: the `key = value` scenario file format and the bundled
//!   operating points.

// `!(x > 0.0)` is used on purpose throughout validation so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numeric;
pub mod optics;
pub mod protocol;
pub mod rates;
pub mod rng;
pub mod scenario;
pub mod source;

pub use error::{Error, Result};
pub use scenario::Scenario;

