//! Software model of a quantum-entropy-sourced white Gaussian noise generator.
//!
//! The pipeline mirrors the hardware datapath of a vacuum-state QRNG noise
//! generator: a homodyne entropy source digitized by an ADC ([`entropy`]),
//! Toeplitz-hashing randomness extraction over GF(2) ([`extractor`]),
//! conversion of uniform words to fixed-point Gaussian samples via a
//! segmented quadratic ICDF approximation ([`icdf`]), amplitude-scaled
//! noise synthesis ([`pipeline`]), and a statistical validation battery
//! ([`stats`]).

pub mod bits;
pub mod entropy;
pub mod error;
pub mod extractor;
pub mod icdf;
pub mod io;
pub mod pipeline;
pub mod special;
pub mod stats;

pub use bits::BitStream;
pub use error::{Error, Result};
