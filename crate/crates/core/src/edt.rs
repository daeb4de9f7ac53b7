//! Exact Euclidean distance and feature transforms.
//!
//! Separable Voronoi-site construction in the style of Maurer et al.: each
//! axis pass turns the squared distances accumulated over the preceding axes
//! into squared distances over one more axis, in linear time per line.
//! Distances stay integral throughout; the square root is taken only by
//! [`FeatureTransform::distance`].

use rayon::prelude::*;

use crate::grid::{Dims, LatticeMask, MAX_RANK};

/// Squared distance marking "no foreground reachable".
pub const INF: u64 = u64::MAX;
/// Nearest-index marking "no foreground reachable".
pub const NONE: usize = usize::MAX;

/// Per-voxel squared distance to, and linear index of, the nearest
/// foreground voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTransform {
    dims: Dims,
    dist_sq: Vec<u64>,
    nearest: Option<Vec<usize>>,
}

impl FeatureTransform {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dist_sq(&self) -> &[u64] {
        &self.dist_sq
    }

    /// Nearest foreground index per voxel; `None` for distance-only transforms.
    pub fn nearest(&self) -> Option<&[usize]> {
        self.nearest.as_deref()
    }

    /// Euclidean distance at `i`, or `None` if no foreground exists.
    pub fn distance(&self, i: usize) -> Option<f64> {
        match self.dist_sq[i] {
            INF => None,
            d => Some((d as f64).sqrt()),
        }
    }

    pub fn has_foreground(&self) -> bool {
        self.dist_sq.contains(&0)
    }
}

/// Candidate sites of the partial Voronoi diagram along one line.
#[derive(Default)]
struct Sites {
    g: Vec<u64>,
    h: Vec<i64>,
    feature: Vec<usize>,
}

impl Sites {
    fn clear(&mut self) {
        self.g.clear();
        self.h.clear();
        self.feature.clear();
    }
}

/// True when the middle of the last two sites can never be nearest once a
/// site with value `f` at position `i` exists.
#[inline]
fn remove_site(g_prev: u64, g_last: u64, f: u64, h_prev: i64, h_last: i64, i: i64) -> bool {
    let a = (h_last - h_prev) as i128;
    let b = (i - h_last) as i128;
    let c = (i - h_prev) as i128;
    c * g_last as i128 - b * g_prev as i128 - a * f as i128 - a * b * c > 0
}

#[inline]
fn site_cost(g: u64, h: i64, i: i64) -> u64 {
    let d = (h - i).unsigned_abs();
    g.saturating_add(d * d)
}

fn pass_line(dist: &mut [u64], mut features: Option<&mut [usize]>, sites: &mut Sites) {
    sites.clear();
    for (i, &f) in dist.iter().enumerate() {
        if f == INF {
            continue;
        }
        let i = i as i64;
        while sites.g.len() >= 2 {
            let l = sites.g.len();
            if remove_site(
                sites.g[l - 2],
                sites.g[l - 1],
                f,
                sites.h[l - 2],
                sites.h[l - 1],
                i,
            ) {
                sites.g.pop();
                sites.h.pop();
                sites.feature.pop();
            } else {
                break;
            }
        }
        sites.g.push(f);
        sites.h.push(i);
        if let Some(feat) = features.as_deref() {
            sites.feature.push(feat[i as usize]);
        }
    }
    let n_sites = sites.g.len();
    if n_sites == 0 {
        return;
    }
    let mut l = 0;
    for (i, slot) in dist.iter_mut().enumerate() {
        let i = i as i64;
        while l + 1 < n_sites
            && site_cost(sites.g[l], sites.h[l], i) > site_cost(sites.g[l + 1], sites.h[l + 1], i)
        {
            l += 1;
        }
        *slot = site_cost(sites.g[l], sites.h[l], i);
        if let Some(feat) = features.as_deref_mut() {
            feat[i as usize] = sites.feature[l];
        }
    }
}

/// One Voronoi pass over a contiguous line.
///
/// `dist` holds squared distances accumulated over earlier axes (`INF` where
/// unresolved). When `features` is given it is updated to the nearest index
/// recorded at the winning site. Equidistant sites resolve to the one with
/// the lowest position.
pub fn voronoi_pass(dist: &mut [u64], features: Option<&mut [usize]>) {
    if let Some(f) = features.as_deref() {
        assert_eq!(f.len(), dist.len(), "feature line length");
    }
    pass_line(dist, features, &mut Sites::default());
}

/// Lines along a strided axis are processed in tiles of this many adjacent
/// lines, so every gather and scatter touches contiguous runs.
const TILE: usize = 32;

/// Raw base pointer shared by tasks that touch disjoint index sets.
#[derive(Clone, Copy)]
struct Shared<T>(*mut T);

unsafe impl<T: Send> Send for Shared<T> {}
unsafe impl<T: Send> Sync for Shared<T> {}

impl<T> Shared<T> {
    // A method call makes closures capture the wrapper, not the bare pointer.
    fn at(self, offset: usize) -> *mut T {
        unsafe { self.0.add(offset) }
    }
}

#[derive(Default)]
struct Scratch {
    sites: Sites,
    dist: Vec<u64>,
    feat: Vec<usize>,
}

fn axis_pass(dims: Dims, axis: usize, dist: &mut [u64], features: Option<&mut [usize]>) {
    let shape = dims.shape();
    let n = shape[axis];
    if n == 1 {
        return;
    }
    let inner = dims.strides()[axis];
    let outer: usize = shape[..axis].iter().product();
    let tiles_per_slab = inner.div_ceil(TILE);
    let d_ptr = Shared(dist.as_mut_ptr());
    let f_ptr = features.map(|f| Shared(f.as_mut_ptr()));

    (0..outer * tiles_per_slab)
        .into_par_iter()
        .for_each_init(Scratch::default, |scratch, tile| {
            let slab = (tile / tiles_per_slab) * n * inner;
            let j0 = (tile % tiles_per_slab) * TILE;
            let width = TILE.min(inner - j0);
            let Scratch { sites, dist, feat } = scratch;
            dist.resize(width * n, 0);
            // SAFETY: tile (slab, j0) owns exactly the indices
            // slab + k * inner + j0 + j for k < n, j < width, and no two
            // tiles share an index.
            unsafe {
                for k in 0..n {
                    let src = d_ptr.at(slab + k * inner + j0);
                    for j in 0..width {
                        dist[j * n + k] = *src.add(j);
                    }
                }
                if let Some(fp) = f_ptr {
                    feat.resize(width * n, 0);
                    for k in 0..n {
                        let src = fp.at(slab + k * inner + j0);
                        for j in 0..width {
                            feat[j * n + k] = *src.add(j);
                        }
                    }
                }
                for j in 0..width {
                    let line = j * n..(j + 1) * n;
                    let f_line = f_ptr.map(|_| &mut feat[line.clone()]);
                    pass_line(&mut dist[line], f_line, sites);
                }
                for k in 0..n {
                    let dst = d_ptr.at(slab + k * inner + j0);
                    for j in 0..width {
                        *dst.add(j) = dist[j * n + k];
                    }
                }
                if let Some(fp) = f_ptr {
                    for k in 0..n {
                        let dst = fp.at(slab + k * inner + j0);
                        for j in 0..width {
                            *dst.add(j) = feat[j * n + k];
                        }
                    }
                }
            }
        });
}

fn transform(mask: &LatticeMask, track: bool, order: [usize; MAX_RANK]) -> FeatureTransform {
    let dims = mask.dims();
    let flags = mask.as_slice();
    let mut dist: Vec<u64> = flags.iter().map(|&b| if b { 0 } else { INF }).collect();
    let mut nearest: Option<Vec<usize>> = track.then(|| {
        flags
            .iter()
            .enumerate()
            .map(|(i, &b)| if b { i } else { NONE })
            .collect()
    });
    for &axis in order.iter().filter(|&&a| a < dims.rank()) {
        axis_pass(dims, axis, &mut dist, nearest.as_deref_mut());
    }
    FeatureTransform {
        dims,
        dist_sq: dist,
        nearest,
    }
}

/// Squared distances plus nearest foreground indices.
pub fn feature_transform(mask: &LatticeMask) -> FeatureTransform {
    transform(mask, true, [0, 1, 2])
}

/// Squared distances only; [`FeatureTransform::nearest`] returns `None`.
pub fn distance_transform(mask: &LatticeMask) -> FeatureTransform {
    transform(mask, false, [0, 1, 2])
}

/// Feature transform with a caller-chosen axis processing order.
pub fn feature_transform_ordered(mask: &LatticeMask, order: [usize; MAX_RANK]) -> FeatureTransform {
    let mut seen = [false; MAX_RANK];
    for &a in &order {
        assert!(a < MAX_RANK && !seen[a], "axis order must be a permutation");
        seen[a] = true;
    }
    transform(mask, true, order)
}
