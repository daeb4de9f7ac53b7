//! Post-decompression artifact mitigation for pre-quantization based
//! error-bounded lossy compressors.
//!
//! Given quantization indices `q = round(d / 2ε)` and the decompressed data
//! `d' = 2qε`, [`mitigate::compensate`] estimates the quantization error from
//! the geometry of index boundaries and adds it back, keeping every value
//! within `(1 + η)ε` of the original.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod edt;
pub mod error;
pub mod grid;
pub mod mitigate;
pub mod parallel;
pub mod quality;
pub mod quant;

pub use error::{Error, Result};
pub use grid::{Dims, Lattice, LatticeMask, ScalarGrid};
pub use mitigate::{compensate, MitigationConfig};
pub use quant::{dequantize, quantize, ErrorBound, QuantizedField};
