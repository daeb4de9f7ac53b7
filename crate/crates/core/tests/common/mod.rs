#![allow(dead_code)]

use qaint_core::edt::{INF, NONE};
use qaint_core::{Dims, Lattice, LatticeMask, ScalarGrid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn coords(dims: Dims, i: usize) -> Vec<usize> {
    dims.coords_of(i).unwrap()
}

pub fn dist_sq(a: &[usize], b: &[usize]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

pub fn random_dims(rng: &mut ChaCha8Rng, max_extent: usize) -> Dims {
    let rank = rng.gen_range(1..=3);
    let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=max_extent)).collect();
    Dims::new(&shape).unwrap()
}

/// Sum of a few random sinusoids plus uniform noise, rounded to f32 so the
/// values are exactly what a single-precision file would hold.
pub fn random_field(rng: &mut ChaCha8Rng, dims: Dims) -> ScalarGrid {
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let k = (0..dims.rank()).map(|_| rng.gen_range(0.0..0.5)).collect();
            (k, rng.gen_range(0.0..6.3), rng.gen_range(0.2..2.0))
        })
        .collect();
    let noise = if rng.gen_bool(0.5) {
        rng.gen_range(0.0..0.2)
    } else {
        0.0
    };
    let offset = rng.gen_range(-5.0..5.0);
    let values = (0..dims.len())
        .map(|i| {
            let c = coords(dims, i);
            let mut v = offset;
            for (k, phase, amp) in &waves {
                let arg: f64 = k.iter().zip(&c).map(|(k, &x)| k * x as f64).sum();
                v += amp * (arg + phase).sin();
            }
            v += noise * rng.gen_range(-1.0..1.0);
            v as f32 as f64
        })
        .collect();
    Lattice::from_values(dims, values).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, dims: Dims) -> LatticeMask {
    let density = match rng.gen_range(0..4) {
        0 => 0.0,
        1 => 0.01,
        2 => 0.1,
        _ => rng.gen_range(0.0..0.8),
    };
    let values = (0..dims.len()).map(|_| rng.gen_bool(density)).collect();
    Lattice::new(dims, values).unwrap()
}

/// Minimum squared distance to every foreground voxel, by exhaustion.
pub fn brute_edt(mask: &LatticeMask) -> Vec<u64> {
    let dims = mask.dims();
    let fg: Vec<Vec<usize>> = (0..dims.len())
        .filter(|&i| mask[i])
        .map(|i| coords(dims, i))
        .collect();
    (0..dims.len())
        .map(|i| {
            let c = coords(dims, i);
            fg.iter().map(|f| dist_sq(&c, f)).min().unwrap_or(INF)
        })
        .collect()
}

/// Checks a feature transform against the exhaustive oracle; returns a
/// description of the first mismatch.
pub fn check_feature_transform(
    mask: &LatticeMask,
    dist: &[u64],
    nearest: &[usize],
) -> Result<(), String> {
    let dims = mask.dims();
    let oracle = brute_edt(mask);
    for i in 0..dims.len() {
        if dist[i] != oracle[i] {
            return Err(format!("voxel {i}: {} vs oracle {}", dist[i], oracle[i]));
        }
        let j = nearest[i];
        if oracle[i] == INF {
            if j != NONE {
                return Err(format!("voxel {i}: nearest {j} on empty mask"));
            }
            continue;
        }
        if j >= dims.len() || !mask[j] {
            return Err(format!("voxel {i}: nearest {j} is not foreground"));
        }
        if dist_sq(&coords(dims, i), &coords(dims, j)) != dist[i] {
            return Err(format!("voxel {i}: nearest {j} not at reported distance"));
        }
    }
    Ok(())
}

fn starts(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut s = Vec::new();
    let mut p = 0;
    while p + window <= extent {
        s.push(p);
        p += stride;
    }
    if *s.last().unwrap() + window != extent {
        s.push(extent - window);
    }
    s
}

/// Mean windowed SSIM by direct summation over every window.
pub fn ssim_oracle(reference: &ScalarGrid, test: &ScalarGrid, window: usize, stride: usize) -> f64 {
    let (c1, c2) = (1e-4, 9e-4);
    let dims = reference.dims();
    let shape = dims.shape().to_vec();
    let x = reference.as_slice();
    let y = test.as_slice();
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm = |v: f64| (v - lo) / (hi - lo);

    let per_axis: Vec<Vec<usize>> = shape.iter().map(|&n| starts(n, window, stride)).collect();
    let mut corners: Vec<Vec<usize>> = vec![vec![]];
    for s in &per_axis {
        corners = corners
            .into_iter()
            .flat_map(|c| {
                s.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }

    let mut total = 0.0;
    for corner in &corners {
        let members: Vec<usize> = (0..dims.len())
            .filter(|&i| {
                coords(dims, i)
                    .iter()
                    .zip(corner)
                    .all(|(&v, &c)| v >= c && v < c + window)
            })
            .collect();
        let n = members.len() as f64;
        let mx = members.iter().map(|&i| norm(x[i])).sum::<f64>() / n;
        let my = members.iter().map(|&i| norm(y[i])).sum::<f64>() / n;
        let vx = members
            .iter()
            .map(|&i| (norm(x[i]) - mx).powi(2))
            .sum::<f64>()
            / n;
        let vy = members
            .iter()
            .map(|&i| (norm(y[i]) - my).powi(2))
            .sum::<f64>()
            / n;
        let cov = members
            .iter()
            .map(|&i| (norm(x[i]) - mx) * (norm(y[i]) - my))
            .sum::<f64>()
            / n;
        total +=
            (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total / corners.len() as f64
}

pub fn psnr_oracle(reference: &ScalarGrid, test: &ScalarGrid) -> f64 {
    let x = reference.as_slice();
    let y = test.as_slice();
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (a, b) in x.iter().zip(y) {
        sum += (a - b) * (a - b);
    }
    let mse = sum / x.len() as f64;
    20.0 * ((hi - lo) / mse.sqrt()).log10()
}

pub fn sinusoid_fixture(n: [usize; 3]) -> ScalarGrid {
    let dims = Dims::new(&n).unwrap();
    let tau = std::f64::consts::TAU;
    let values = (0..dims.len())
        .map(|i| {
            let c = coords(dims, i);
            let (z, y, x) = (c[0] as f64, c[1] as f64, c[2] as f64);
            (tau * x / n[2] as f64).sin() * (tau * y / n[1] as f64).sin()
                + 0.5 * (tau * z / n[0] as f64).cos()
        })
        .collect();
    Lattice::from_values(dims, values).unwrap()
}
