//! Quantization-aware interpolation of the compression error.
//!
//! The pipeline runs in five steps over the quantization indices:
//!
//! 1. mark quantization boundaries `B1` (index differs from a face neighbor)
//!    and seed an error sign there from the index step direction,
//! 2. feature transform of `B1` (distance and nearest boundary voxel),
//! 3. copy each voxel's sign from its nearest boundary voxel and mark the
//!    sign-flipping boundary `B2` where the propagated sign changes,
//! 4. distance transform of `B2`,
//! 5. inverse-distance interpolation between `±ηε` on `B1` and `0` on `B2`,
//!    added to the decompressed values.
//!
//! Every compensation term lies in `[-ηε, ηε]`, so the output stays within
//! `(1 + η)ε` of the original data.

use rayon::prelude::*;

use crate::edt::{self, FeatureTransform, INF, NONE};
use crate::error::{Error, Result};
use crate::grid::{Lattice, LatticeMask, ScalarGrid, MAX_RANK};
use crate::quant::{reconstruct, QuantizedField};

pub const DEFAULT_ETA: f64 = 0.9;

/// Per-voxel error sign estimate in `{-1, 0, +1}`.
pub type SignMap = Lattice<i8>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MitigationConfig {
    eta: f64,
    eps_abs: f64,
}

impl MitigationConfig {
    /// `eta` must lie in `[0, 1]`; zero disables compensation.
    pub fn new(eta: f64, eps_abs: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Contract(format!(
                "eta must lie in [0, 1], got {eta}"
            )));
        }
        if !(eps_abs > 0.0 && eps_abs.is_finite()) {
            return Err(Error::Contract(format!(
                "eps must be positive, got {eps_abs}"
            )));
        }
        Ok(Self { eta, eps_abs })
    }

    pub fn with_eps(eps_abs: f64) -> Result<Self> {
        Self::new(DEFAULT_ETA, eps_abs)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eps_abs(&self) -> f64 {
        self.eps_abs
    }

    /// Error magnitude assumed at quantization boundaries, `ηε`.
    pub fn amplitude(&self) -> f64 {
        self.eta * self.eps_abs
    }

    /// Guaranteed worst-case deviation of compensated data, `(1 + η)ε`.
    pub fn relaxed_bound(&self) -> f64 {
        (1.0 + self.eta) * self.eps_abs
    }
}

/// Quantization boundary map with the sign seeded on it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryArtifacts {
    pub boundary: LatticeMask,
    pub boundary_signs: SignMap,
}

/// Row-parallel scan over voxels whose 2k face neighbors all exist.
///
/// `visit` receives the lattice data, the voxel's linear index and the
/// strides of the real axes, and writes the voxel's output.
fn scan_interior<T, U, F>(lattice: &Lattice<T>, fill: U, visit: F) -> Lattice<U>
where
    T: Sync,
    U: Copy + Send + Sync,
    F: Fn(&[T], usize, &[usize]) -> U + Sync,
{
    let dims = lattice.dims();
    let padded = dims.padded();
    let rank = dims.rank();
    let strides = dims.strides();
    let axis_strides = &strides[..rank];
    let lead = MAX_RANK - rank;
    let range = |p: usize| {
        if p < lead {
            0..1
        } else {
            1..padded[p].saturating_sub(1)
        }
    };
    let row_len = padded[2];
    let data = lattice.as_slice();
    let mut out = vec![fill; dims.len()];
    out.par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(row, chunk)| {
            let (i0, i1) = (row / padded[1], row % padded[1]);
            if !range(0).contains(&i0) || !range(1).contains(&i1) {
                return;
            }
            let base = row * row_len;
            for i2 in range(2) {
                chunk[i2] = visit(data, base + i2, axis_strides);
            }
        });
    Lattice::new(dims, out).expect("output sized from dims")
}

/// Marks quantization boundaries and seeds their error signs.
///
/// Only voxels with all face neighbors inside the lattice are examined. The
/// sign is that of the first differing neighbor in the order
/// `axis0+, axis1+, axis2+, axis0-, axis1-, axis2-`, and is discarded when the
/// central-difference index gradient reaches 1 on any axis.
pub fn boundary_and_signs(indices: &Lattice<i64>) -> BoundaryArtifacts {
    let packed = scan_interior(indices, 0i8, |q, i, strides| {
        let center = q[i];
        let forward = strides.iter().map(|&s| q[i + s]);
        let backward = strides.iter().map(|&s| q[i - s]);
        let Some(neighbor) = forward.chain(backward).find(|&v| v != center) else {
            return 0;
        };
        // Central difference |q(+1) - q(-1)| / 2 >= 1.
        let steep = strides.iter().any(|&s| q[i + s].abs_diff(q[i - s]) >= 2);
        // Boundary flag in bit 2, sign in {-1, 0, 1} offset by one in bits 0-1.
        let sign = if steep {
            0
        } else if neighbor > center {
            1
        } else {
            -1
        };
        4 | (sign + 1)
    });
    BoundaryArtifacts {
        boundary: packed.map(|&p| p & 4 != 0),
        boundary_signs: packed.map(|&p| if p & 4 != 0 { (p & 3) - 1 } else { 0 }),
    }
}

pub fn get_boundary_and_sign_map(q: &QuantizedField) -> BoundaryArtifacts {
    boundary_and_signs(&q.as_lattice())
}

/// Sign-flipping boundary of a propagated sign map.
///
/// A voxel is flagged when its sign differs from a face neighbor carrying
/// the same quantization index. Across an index change the error jumps from
/// about `+ε` to `-ε` and the sign flips there by construction; only flips
/// inside one quantization interval mark a zero crossing of the error.
pub fn sign_flip_boundary(signs: &SignMap, indices: &Lattice<i64>) -> Result<LatticeMask> {
    signs.ensure_same_dims(indices)?;
    let q = indices.as_slice();
    Ok(scan_interior(signs, false, |s, i, strides| {
        strides.iter().any(|&st| {
            (s[i + st] != s[i] && q[i + st] == q[i]) || (s[i - st] != s[i] && q[i - st] == q[i])
        })
    }))
}

/// Copies every voxel's sign from its nearest quantization boundary voxel.
pub fn propagate_only(artifacts: &BoundaryArtifacts, ft1: &FeatureTransform) -> Result<SignMap> {
    let dims = artifacts.boundary.dims();
    artifacts
        .boundary
        .ensure_same_dims(&artifacts.boundary_signs)?;
    if ft1.dims() != dims {
        return Err(Error::DimsMismatch {
            left: dims.shape().to_vec(),
            right: ft1.dims().shape().to_vec(),
        });
    }
    let nearest = ft1.nearest().ok_or_else(|| {
        Error::Contract("sign propagation needs a feature transform with nearest indices".into())
    })?;
    let seeds = artifacts.boundary_signs.as_slice();
    let flags = artifacts.boundary.as_slice();
    let signs: Vec<i8> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            if flags[i] {
                seeds[i]
            } else {
                match nearest[i] {
                    NONE => 0,
                    j => seeds[j],
                }
            }
        })
        .collect();
    Lattice::new(dims, signs)
}

/// Full sign map and sign-flipping boundary `B2`.
///
/// With no quantization boundary at all the sign map is all zero and `B2`
/// is empty, which yields zero compensation downstream.
pub fn propagate_signs(
    artifacts: &BoundaryArtifacts,
    ft1: &FeatureTransform,
    indices: &Lattice<i64>,
) -> Result<(SignMap, LatticeMask)> {
    let signs = propagate_only(artifacts, ft1)?;
    let flips = sign_flip_boundary(&signs, indices)?;
    Ok((signs, flips))
}

/// Inverse-distance weighted compensation between a boundary value
/// `sign * amp` at distance `k1` and zero at distance `k2`.
///
/// Evaluates `k2 / (k1 + k2) * sign * amp`, which equals
/// `(1/k1) / (1/k1 + 1/k2) * sign * amp` and stays finite at `k1 = 0`.
/// Infinite distances and `k2 = 0` give zero.
pub fn interpolate(k1: f64, k2: f64, sign: i8, amp: f64) -> f64 {
    if sign == 0 || k1.is_infinite() || k2.is_infinite() || k2 == 0.0 {
        return 0.0;
    }
    if k1 == 0.0 {
        return f64::from(sign) * amp;
    }
    k2 / (k1 + k2) * f64::from(sign) * amp
}

/// All intermediate products of the pipeline.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub artifacts: BoundaryArtifacts,
    pub nearest_boundary: FeatureTransform,
    pub signs: SignMap,
    pub flip_boundary: LatticeMask,
    pub flip_distance: FeatureTransform,
    pub compensation: ScalarGrid,
}

fn euclid(d: u64) -> f64 {
    if d == INF {
        f64::INFINITY
    } else {
        (d as f64).sqrt()
    }
}

/// Per-voxel compensation from the two distance fields and the sign map.
pub fn compensation_field(
    dist1: &FeatureTransform,
    dist2: &FeatureTransform,
    signs: &SignMap,
    amp: f64,
) -> Result<ScalarGrid> {
    let dims = signs.dims();
    for ft in [dist1, dist2] {
        if ft.dims() != dims {
            return Err(Error::DimsMismatch {
                left: dims.shape().to_vec(),
                right: ft.dims().shape().to_vec(),
            });
        }
    }
    let (d1, d2, s) = (dist1.dist_sq(), dist2.dist_sq(), signs.as_slice());
    let values = (0..dims.len())
        .into_par_iter()
        .map(|i| interpolate(euclid(d1[i]), euclid(d2[i]), s[i], amp))
        .collect();
    Lattice::new(dims, values)
}

/// Runs steps 1 through 5 on a lattice of indices.
pub fn analyze_indices(indices: &Lattice<i64>, amp: f64) -> Result<Analysis> {
    let artifacts = boundary_and_signs(indices);
    let nearest_boundary = edt::feature_transform(&artifacts.boundary);
    let (signs, flip_boundary) = propagate_signs(&artifacts, &nearest_boundary, indices)?;
    let flip_distance = edt::distance_transform(&flip_boundary);
    let compensation = compensation_field(&nearest_boundary, &flip_distance, &signs, amp)?;
    Ok(Analysis {
        artifacts,
        nearest_boundary,
        signs,
        flip_boundary,
        flip_distance,
        compensation,
    })
}

pub fn analyze(q: &QuantizedField, cfg: &MitigationConfig) -> Result<Analysis> {
    check_config(q, cfg)?;
    analyze_indices(&q.as_lattice(), cfg.amplitude())
}

fn check_config(q: &QuantizedField, cfg: &MitigationConfig) -> Result<()> {
    let (a, b) = (q.eps_abs(), cfg.eps_abs());
    if a != b {
        return Err(Error::Inconsistent(format!(
            "config eps {b} differs from quantization eps {a}"
        )));
    }
    Ok(())
}

/// Checks that `decomp` is the reconstruction of `q`, either exactly or
/// after rounding to single precision.
pub fn check_decompressed(decomp: &ScalarGrid, q: &QuantizedField) -> Result<()> {
    if decomp.dims() != q.dims() {
        return Err(Error::DimsMismatch {
            left: decomp.dims().shape().to_vec(),
            right: q.dims().shape().to_vec(),
        });
    }
    let eps = q.eps_abs();
    let bad = decomp
        .as_slice()
        .par_iter()
        .zip(q.indices().par_iter())
        .position_first(|(&d, &qi)| {
            let r = reconstruct(qi, eps);
            d != r && d != f64::from(r as f32)
        });
    match bad {
        Some(i) => Err(Error::Inconsistent(format!(
            "decompressed value at index {i} is not 2*q*eps"
        ))),
        None => Ok(()),
    }
}

/// Adds a compensation field to data, leaving voxels with zero
/// compensation bit-for-bit untouched.
pub fn apply_compensation(decomp: &ScalarGrid, compensation: &ScalarGrid) -> Result<ScalarGrid> {
    decomp.ensure_same_dims(compensation)?;
    let values = decomp
        .as_slice()
        .par_iter()
        .zip(compensation.as_slice().par_iter())
        .map(|(&d, &c)| if c == 0.0 { d } else { d + c })
        .collect();
    Lattice::new(decomp.dims(), values)
}

/// Compensated reconstruction `D'' = D' + C`.
pub fn compensate(
    decomp: &ScalarGrid,
    q: &QuantizedField,
    cfg: &MitigationConfig,
) -> Result<ScalarGrid> {
    check_decompressed(decomp, q)?;
    check_config(q, cfg)?;
    if cfg.eta() == 0.0 || q.is_homogeneous() {
        return Ok(decomp.clone());
    }
    let analysis = analyze(q, cfg)?;
    apply_compensation(decomp, &analysis.compensation)
}

/// Outcome of checking compensated data against the relaxed bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub within: bool,
    pub max_abs: f64,
    /// `max_abs` over the original's value range; infinite when the range
    /// is zero but the error is not.
    pub max_rel: f64,
}

pub fn verify_relaxed_bound(
    orig: &ScalarGrid,
    comp: &ScalarGrid,
    cfg: &MitigationConfig,
) -> Result<BoundCheck> {
    orig.ensure_same_dims(comp)?;
    let max_abs = orig
        .as_slice()
        .iter()
        .zip(comp.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let range = orig.value_range();
    let max_rel = if max_abs == 0.0 {
        0.0
    } else if range > 0.0 {
        max_abs / range
    } else {
        f64::INFINITY
    };
    Ok(BoundCheck {
        within: max_abs <= cfg.relaxed_bound(),
        max_abs,
        max_rel,
    })
}

/// Rounds `value` to single precision without moving further than
/// `radius` from `anchor`, stepping one ulp toward the anchor when plain
/// rounding would overshoot.
pub fn to_f32_within(value: f64, anchor: f64, radius: f64) -> f32 {
    let mut x = value as f32;
    for _ in 0..4 {
        if (f64::from(x) - anchor).abs() <= radius {
            break;
        }
        x = if f64::from(x) > anchor {
            next_down(x)
        } else {
            next_up(x)
        };
    }
    x
}

/// Single-precision copy of compensated data that stays within `ηε` of the
/// decompressed values, so the relaxed bound survives the narrowing.
pub fn to_f32_output(
    comp: &ScalarGrid,
    decomp: &ScalarGrid,
    cfg: &MitigationConfig,
) -> Result<Vec<f32>> {
    comp.ensure_same_dims(decomp)?;
    let radius = cfg.amplitude();
    Ok(comp
        .as_slice()
        .par_iter()
        .zip(decomp.as_slice().par_iter())
        .map(|(&c, &d)| to_f32_within(c, d, radius))
        .collect())
}

fn next_up(x: f32) -> f32 {
    if x.is_nan() || x == f32::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f32::from_bits(1);
    }
    let bits = x.to_bits();
    f32::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

fn next_down(x: f32) -> f32 {
    -next_up(-x)
}
