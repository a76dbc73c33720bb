//! Spatial sigma-delta modulation toolkit for coarsely quantized massive
//! MIMO downlink precoding.
//!
//! The crate covers the whole pipeline: array geometry and angular channels
//! ([`mod@array`]), the multi-level error-feedback modulator and its 2D extension
//! ([`modulator`]), closed-form noise-shaping designs and SQNR/RNSR metrics
//! ([`designs`]), max-min SQNR designs solved as second-order cone programs
//! ([`socp`], [`solver`]), a link-level Monte-Carlo BER simulator ([`sim`],
//! [`qam`]), and statistical validation of the quantization-noise model
//! ([`analysis`]).
//!
//! The numeric core is generic over the scalar type through [`Scalar`];
//! the simulator and analysis layers run on `f64`.

pub mod analysis;
pub mod array;
pub mod designs;
pub mod error;
pub mod mat;
pub mod modulator;
pub mod qam;
mod rng;
pub mod scalar;
pub mod sim;
pub mod socp;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Complex scalar used by the concrete (`f64`) pipeline.
pub type C64 = num_complex::Complex<f64>;
/// Single-precision complex scalar.
pub type C32 = num_complex::Complex<f32>;
