//! Pre-quantization as performed by SZ-family compressors ahead of any
//! prediction or entropy coding: `q = round(d / 2ε)`, `d' = 2qε`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Dims, Lattice, ScalarGrid};

/// User-facing error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorBound {
    Absolute(f64),
    /// Fraction of the data's value range.
    Relative(f64),
}

impl ErrorBound {
    pub fn value(&self) -> f64 {
        match *self {
            ErrorBound::Absolute(v) | ErrorBound::Relative(v) => v,
        }
    }
}

/// Resolves a bound to an absolute ε for `data`.
pub fn resolve_eps(bound: ErrorBound, data: &ScalarGrid) -> Result<f64> {
    let v = bound.value();
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Contract(format!(
            "error bound must be positive, got {v}"
        )));
    }
    match bound {
        ErrorBound::Absolute(eps) => Ok(eps),
        ErrorBound::Relative(rel) => {
            let range = data.value_range();
            if !(range > 0.0) {
                return Err(Error::Degenerate(
                    "relative error bound on data with zero value range".into(),
                ));
            }
            Ok(rel * range)
        }
    }
}

/// Quantization indices together with the absolute ε that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedField {
    dims: Dims,
    indices: Vec<i64>,
    eps_abs: f64,
}

impl QuantizedField {
    pub fn new(dims: Dims, indices: Vec<i64>, eps_abs: f64) -> Result<Self> {
        if !(eps_abs > 0.0 && eps_abs.is_finite()) {
            return Err(Error::Contract(format!(
                "eps must be positive, got {eps_abs}"
            )));
        }
        if indices.len() != dims.len() {
            return Err(Error::Length {
                expected: dims.len(),
                actual: indices.len(),
            });
        }
        Ok(Self {
            dims,
            indices,
            eps_abs,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn eps_abs(&self) -> f64 {
        self.eps_abs
    }

    pub fn as_lattice(&self) -> Lattice<i64> {
        Lattice::new(self.dims, self.indices.clone()).expect("length checked on construction")
    }

    pub fn from_lattice(indices: Lattice<i64>, eps_abs: f64) -> Result<Self> {
        let dims = indices.dims();
        Self::new(dims, indices.into_vec(), eps_abs)
    }

    /// True when every index takes the same value.
    pub fn is_homogeneous(&self) -> bool {
        self.indices.windows(2).all(|w| w[0] == w[1])
    }
}

/// Reconstructed value for index `q`.
#[inline]
pub fn reconstruct(q: i64, eps_abs: f64) -> f64 {
    2.0 * q as f64 * eps_abs
}

// 2^63; anything at or past this does not fit an i64.
const INDEX_LIMIT: f64 = 9.223_372_036_854_776e18;

fn quantize_value(d: f64, eps_abs: f64) -> Option<i64> {
    let r = (d / (2.0 * eps_abs)).round();
    if !(r.abs() < INDEX_LIMIT) {
        return None;
    }
    let q = r as i64;
    // d / 2ε is itself rounded, so a value sitting on an interval edge can
    // land one index off; step to the neighbor that honors the bound.
    if (d - reconstruct(q, eps_abs)).abs() <= eps_abs {
        return Some(q);
    }
    [q - 1, q + 1]
        .into_iter()
        .find(|&c| (d - reconstruct(c, eps_abs)).abs() <= eps_abs)
        .or(Some(q))
}

/// `q_i = round(d_i / 2ε)` with ties rounded away from zero.
pub fn quantize(data: &ScalarGrid, eps_abs: f64) -> Result<QuantizedField> {
    if !(eps_abs > 0.0 && eps_abs.is_finite()) {
        return Err(Error::Contract(format!(
            "eps must be positive, got {eps_abs}"
        )));
    }
    let indices = data
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &d)| quantize_value(d, eps_abs).ok_or(Error::Overflow(i)))
        .collect::<Result<Vec<i64>>>()?;
    QuantizedField::new(data.dims(), indices, eps_abs)
}

/// `d'_i = 2 q_i ε`.
pub fn dequantize(q: &QuantizedField) -> ScalarGrid {
    let eps = q.eps_abs;
    let values = q.indices.par_iter().map(|&i| reconstruct(i, eps)).collect();
    Lattice::new(q.dims, values).expect("length checked on construction")
}
