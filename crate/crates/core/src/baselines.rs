//! Smoothing filters used as comparison baselines: Gaussian, uniform (box)
//! and local adaptive Wiener, all over `w^k` neighborhoods with edges
//! extended by nearest-value replication.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Dims, Lattice, ScalarGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Gaussian,
    Uniform,
    Wiener,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            "wiener" => Ok(Self::Wiener),
            other => Err(Error::Contract(format!("unknown filter '{other}'"))),
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Uniform => "uniform",
            Self::Wiener => "wiener",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub window: usize,
    pub sigma: f64,
    pub noise_power: f64,
}

impl FilterSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: FilterKind::Gaussian,
            window: 3,
            sigma,
            noise_power: 0.0,
        }
    }

    pub fn uniform() -> Self {
        Self {
            kind: FilterKind::Uniform,
            window: 3,
            sigma: 1.0,
            noise_power: 0.0,
        }
    }

    pub fn wiener(noise_power: f64) -> Self {
        Self {
            kind: FilterKind::Wiener,
            window: 3,
            sigma: 1.0,
            noise_power,
        }
    }

    /// Wiener filter with the noise power of uniform quantization error,
    /// `ε² / 3`.
    pub fn wiener_for_eps(eps_abs: f64) -> Self {
        Self::wiener(eps_abs * eps_abs / 3.0)
    }

    /// Default parameters for `kind` at error bound `eps_abs`.
    pub fn for_kind(kind: FilterKind, eps_abs: f64) -> Self {
        match kind {
            FilterKind::Gaussian => Self::gaussian(1.0),
            FilterKind::Uniform => Self::uniform(),
            FilterKind::Wiener => Self::wiener_for_eps(eps_abs),
        }
    }

    fn validate(&self, expected: FilterKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::Contract(format!(
                "{} spec passed to {expected} filter",
                self.kind
            )));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Contract(format!(
                "filter window must be odd, got {}",
                self.window
            )));
        }
        if self.kind == FilterKind::Gaussian && !(self.sigma > 0.0) {
            return Err(Error::Contract(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.noise_power >= 0.0) {
            return Err(Error::Contract("noise power must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Gaussian taps for offsets `-r..=r`, renormalized to sum to one.
pub fn gaussian_taps(sigma: f64, window: usize) -> Vec<f64> {
    let r = (window / 2) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|k| k / total).collect()
}

/// Correlates every line along `axis` with centered `taps`, clamping
/// out-of-range positions to the nearest edge voxel.
///
/// Evaluated as `x + Σ w (x_k - x)` so constant neighborhoods come back
/// bit-exact.
fn filter_axis(data: &[f64], dims: Dims, axis: usize, taps: &[f64]) -> Vec<f64> {
    let shape = dims.shape();
    let n = shape[axis];
    let stride = dims.strides()[axis];
    let r = (taps.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    out.par_iter_mut().enumerate().for_each(|(i, slot)| {
        let pos = (i / stride) % n;
        let line_start = i - pos * stride;
        let center = data[i];
        let mut acc = 0.0;
        for (k, &w) in taps.iter().enumerate() {
            let p = (pos as i64 + k as i64 - r).clamp(0, n as i64 - 1) as usize;
            acc += w * (data[line_start + p * stride] - center);
        }
        *slot = center + acc;
    });
    out
}

fn separable(data: &ScalarGrid, taps: &[f64]) -> ScalarGrid {
    let dims = data.dims();
    let mut values = data.as_slice().to_vec();
    for axis in 0..dims.rank() {
        values = filter_axis(&values, dims, axis, taps);
    }
    Lattice::new(dims, values).expect("same length as input")
}

pub fn gaussian_filter(data: &ScalarGrid, spec: &FilterSpec) -> Result<ScalarGrid> {
    spec.validate(FilterKind::Gaussian)?;
    Ok(separable(data, &gaussian_taps(spec.sigma, spec.window)))
}

pub fn uniform_filter(data: &ScalarGrid, spec: &FilterSpec) -> Result<ScalarGrid> {
    spec.validate(FilterKind::Uniform)?;
    let w = spec.window;
    Ok(separable(data, &vec![1.0 / w as f64; w]))
}

/// Local adaptive Wiener filter:
/// `μ + max(σ² - ν², 0) / max(σ², ν²) · (x - μ)` with window mean `μ` and
/// population variance `σ²`.
pub fn wiener_filter(data: &ScalarGrid, spec: &FilterSpec) -> Result<ScalarGrid> {
    spec.validate(FilterKind::Wiener)?;
    let w = spec.window;
    let taps = vec![1.0 / w as f64; w];
    let mean = separable(data, &taps);
    let sq = separable(&data.map(|v| v * v), &taps);
    let noise = spec.noise_power;
    let values = data
        .as_slice()
        .par_iter()
        .zip(mean.as_slice().par_iter().zip(sq.as_slice().par_iter()))
        .map(|(&x, (&mu, &m2))| {
            let var = (m2 - mu * mu).max(0.0);
            if var <= noise {
                return mu;
            }
            let gain = (var - noise) / var;
            if gain == 1.0 {
                x
            } else {
                mu + gain * (x - mu)
            }
        })
        .collect();
    Lattice::new(data.dims(), values)
}

pub fn apply_filter(data: &ScalarGrid, spec: &FilterSpec) -> Result<ScalarGrid> {
    match spec.kind {
        FilterKind::Gaussian => gaussian_filter(data, spec),
        FilterKind::Uniform => uniform_filter(data, spec),
        FilterKind::Wiener => wiener_filter(data, spec),
    }
}
