//! Windowed SSIM, PSNR and maximum-error metrics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, MAX_RANK};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub stride: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            stride: 2,
            c1: 1e-4,
            c2: 9e-4,
        }
    }
}

impl SsimParams {
    fn validate(&self, shape: &[usize]) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Contract(format!(
                "SSIM window must be odd and positive, got {}",
                self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::Contract("SSIM stride must be positive".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Contract("SSIM constants must be positive".into()));
        }
        if let Some(n) = shape.iter().find(|&&n| n < self.window) {
            return Err(Error::Contract(format!(
                "SSIM window {} exceeds extent {n}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Window start positions along one axis: a stride lattice from the origin,
/// plus one window flush with the far edge if the lattice stops short.
pub fn window_starts(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=extent - window).step_by(stride).collect();
    let last = extent - window;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

fn ssim_window(x: &[f64], y: &[f64], c1: f64, c2: f64) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    let (vx, vy, cov) = (vx / n, vy / n, cov / n);
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over windows of `window^k` voxels.
///
/// Both grids are first mapped through `(v - min) / range` using the
/// reference's extrema, so the stabilizing constants are scale-free.
/// Statistics use population (1/n) normalization.
pub fn ssim(reference: &ScalarGrid, test: &ScalarGrid, params: &SsimParams) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let dims = reference.dims();
    params.validate(dims.shape())?;
    let (lo, hi) = reference.min_max();
    let range = hi - lo;
    if range == 0.0 {
        return if reference == test {
            Ok(1.0)
        } else {
            Err(Error::Degenerate(
                "SSIM of a constant reference against a different grid".into(),
            ))
        };
    }
    let norm = |v: f64| (v - lo) / range;
    let x: Vec<f64> = reference.as_slice().iter().map(|&v| norm(v)).collect();
    let y: Vec<f64> = test.as_slice().iter().map(|&v| norm(v)).collect();

    let padded = dims.padded();
    let lead = MAX_RANK - dims.rank();
    let w = params.window;
    let starts: Vec<Vec<usize>> = (0..MAX_RANK)
        .map(|p| {
            if p < lead {
                vec![0]
            } else {
                window_starts(padded[p], w, params.stride)
            }
        })
        .collect();
    let extent = |p: usize| if p < lead { 1 } else { w };
    let (w0, w1, w2) = (extent(0), extent(1), extent(2));

    let mut corners = Vec::with_capacity(starts[0].len() * starts[1].len() * starts[2].len());
    for &a in &starts[0] {
        for &b in &starts[1] {
            for &c in &starts[2] {
                corners.push((a, b, c));
            }
        }
    }
    let scores: Vec<f64> = corners
        .par_iter()
        .map_init(
            || {
                (
                    Vec::with_capacity(w0 * w1 * w2),
                    Vec::with_capacity(w0 * w1 * w2),
                )
            },
            |(wx, wy), &(a, b, c)| {
                wx.clear();
                wy.clear();
                for i in a..a + w0 {
                    for j in b..b + w1 {
                        let row = (i * padded[1] + j) * padded[2] + c;
                        wx.extend_from_slice(&x[row..row + w2]);
                        wy.extend_from_slice(&y[row..row + w2]);
                    }
                }
                ssim_window(wx, wy, params.c1, params.c2)
            },
        )
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn mse(reference: &ScalarGrid, test: &ScalarGrid) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let sum: f64 = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `20 log10(range / sqrt(MSE))` with the range of the reference; infinite
/// when the grids are identical.
pub fn psnr(reference: &ScalarGrid, test: &ScalarGrid) -> Result<f64> {
    let err = mse(reference, test)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let range = reference.value_range();
    if range == 0.0 {
        return Err(Error::Degenerate(
            "PSNR of a constant reference against a different grid".into(),
        ));
    }
    Ok(20.0 * (range / err.sqrt()).log10())
}

/// Maximum absolute error and the same over the reference's value range.
pub fn max_errors(reference: &ScalarGrid, test: &ScalarGrid) -> Result<(f64, f64)> {
    reference.ensure_same_dims(test)?;
    let abs = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let range = reference.value_range();
    if range == 0.0 {
        return if abs == 0.0 {
            Ok((0.0, 0.0))
        } else {
            Err(Error::Degenerate(
                "relative error against a constant reference".into(),
            ))
        };
    }
    Ok((abs, abs / range))
}

/// Measurements for one (data, ε, method) combination.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub method: String,
    pub eps_used: f64,
    pub ssim: f64,
    pub psnr_db: f64,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

impl QualityReport {
    pub fn measure(
        method: impl Into<String>,
        eps_used: f64,
        reference: &ScalarGrid,
        test: &ScalarGrid,
        params: &SsimParams,
    ) -> Result<Self> {
        let (max_abs_err, max_rel_err) = max_errors(reference, test)?;
        Ok(Self {
            method: method.into(),
            eps_used,
            ssim: ssim(reference, test, params)?,
            psnr_db: psnr(reference, test)?,
            max_abs_err,
            max_rel_err,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, Lattice};

    fn grid(shape: &[usize], f: impl Fn(usize) -> f64) -> ScalarGrid {
        let d = Dims::new(shape).unwrap();
        Lattice::from_values(d, (0..d.len()).map(f).collect()).unwrap()
    }

    #[test]
    fn starts_clamp_last_window() {
        assert_eq!(window_starts(16, 7, 2), vec![0, 2, 4, 6, 8, 9]);
        assert_eq!(window_starts(15, 7, 2), vec![0, 2, 4, 6, 8]);
        assert_eq!(window_starts(7, 7, 2), vec![0]);
    }

    #[test]
    fn identical_grids() {
        let g = grid(&[9, 9, 9], |i| (i as f64 * 0.37).sin());
        assert_eq!(ssim(&g, &g, &SsimParams::default()).unwrap(), 1.0);
        assert_eq!(psnr(&g, &g).unwrap(), f64::INFINITY);
        assert_eq!(max_errors(&g, &g).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn constant_reference() {
        let flat = grid(&[7, 7], |_| 2.0);
        assert_eq!(ssim(&flat, &flat, &SsimParams::default()).unwrap(), 1.0);
        let other = grid(&[7, 7], |i| 2.0 + (i == 3) as u8 as f64);
        assert!(matches!(
            ssim(&flat, &other, &SsimParams::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(psnr(&flat, &other), Err(Error::Degenerate(_))));
        assert!(matches!(
            max_errors(&flat, &other),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn window_must_fit() {
        let g = grid(&[6, 9], |i| i as f64);
        assert!(matches!(
            ssim(&g, &g, &SsimParams::default()),
            Err(Error::Contract(_))
        ));
        let even = SsimParams {
            window: 4,
            ..SsimParams::default()
        };
        assert!(ssim(&g, &g, &even).is_err());
    }

    #[test]
    fn psnr_uniform_error() {
        let r = grid(&[10], |i| i as f64 / 9.0);
        let t = grid(&[10], |i| i as f64 / 9.0 + 0.1);
        assert!((psnr(&r, &t).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let r = grid(&[256], |i| (i as f64 * 0.1).sin());
        let mut last = f64::INFINITY;
        for amp in [1e-4, 1e-3, 1e-2, 1e-1] {
            let t = grid(&[256], |i| {
                (i as f64 * 0.1).sin() + amp * (i as f64 * 2.3).cos()
            });
            let p = psnr(&r, &t).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn max_error_example() {
        let r = grid(&[2], |i| i as f64);
        let t = Lattice::from_values(Dims::new(&[2]).unwrap(), vec![0.1, 1.0]).unwrap();
        let (a, b) = max_errors(&r, &t).unwrap();
        assert!((a - 0.1).abs() < 1e-15 && (b - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ssim_symmetric_and_scale_invariant() {
        let r = grid(&[11, 12, 9], |i| (i as f64 * 0.05).sin());
        let t = grid(&[11, 12, 9], |i| {
            (i as f64 * 0.05).sin() + 0.03 * (i as f64).cos()
        });
        let p = SsimParams::default();
        let s = ssim(&r, &t, &p).unwrap();
        assert!(s < 1.0 && s > 0.0);
        // Swapping the arguments while keeping the reference normalization.
        let (lo, hi) = r.min_max();
        let rescale = |g: &ScalarGrid| g.map(|v| (v - lo) / (hi - lo));
        let (rn, tn) = (rescale(&r), rescale(&t));
        let swapped = ssim_on_normalized(&tn, &rn, &p);
        assert!((swapped - ssim_on_normalized(&rn, &tn, &p)).abs() < 1e-12);
        let scaled = |g: &ScalarGrid| g.map(|v| 3.5 * v - 7.0);
        assert!((ssim(&scaled(&r), &scaled(&t), &p).unwrap() - s).abs() < 1e-12);
    }

    // Mean window SSIM on data already in [0, 1] reference units.
    fn ssim_on_normalized(a: &ScalarGrid, b: &ScalarGrid, p: &SsimParams) -> f64 {
        let shape = a.dims().shape().to_vec();
        let starts: Vec<Vec<usize>> = shape
            .iter()
            .map(|&n| window_starts(n, p.window, p.stride))
            .collect();
        let mut total = 0.0;
        let mut count = 0;
        for &i in &starts[0] {
            for &j in &starts[1] {
                for &k in &starts[2] {
                    let (mut x, mut y) = (vec![], vec![]);
                    for di in 0..p.window {
                        for dj in 0..p.window {
                            for dk in 0..p.window {
                                let idx = a.dims().linear_index(&[i + di, j + dj, k + dk]).unwrap();
                                x.push(a[idx]);
                                y.push(b[idx]);
                            }
                        }
                    }
                    total += ssim_window(&x, &y, p.c1, p.c2);
                    count += 1;
                }
            }
        }
        total / count as f64
    }
}
