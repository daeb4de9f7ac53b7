//! Row-major lattices of one to three dimensions.
//!
//! Every module indexes voxels through [`Dims`]: axis 0 varies slowest and
//! the last axis is contiguous in memory, which is the layout raw binary
//! scientific volumes are stored in.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 3;

/// Extents of a 1-, 2- or 3-D lattice, slowest-varying axis first.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    extents: [usize; MAX_RANK],
    rank: usize,
}

impl Dims {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > MAX_RANK {
            return Err(Error::Rank(extents.len()));
        }
        if let Some(axis) = extents.iter().position(|&n| n == 0) {
            return Err(Error::EmptyAxis { axis });
        }
        let mut padded = [1; MAX_RANK];
        padded[..extents.len()].copy_from_slice(extents);
        Ok(Self {
            extents: padded,
            rank: extents.len(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn shape(&self) -> &[usize] {
        &self.extents[..self.rank]
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.shape()[axis]
    }

    /// Total number of voxels.
    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance in linear index between neighbors along each axis.
    pub fn strides(&self) -> [usize; MAX_RANK] {
        let mut strides = [0; MAX_RANK];
        let mut acc = 1;
        for axis in (0..self.rank).rev() {
            strides[axis] = acc;
            acc *= self.extents[axis];
        }
        strides
    }

    /// Shape left-padded with unit axes to three dimensions.
    pub(crate) fn padded(&self) -> [usize; MAX_RANK] {
        let mut out = [1; MAX_RANK];
        out[MAX_RANK - self.rank..].copy_from_slice(self.shape());
        out
    }

    pub fn linear_index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.rank {
            return Err(Error::Rank(coords.len()));
        }
        let mut idx = 0;
        for (axis, (&c, &n)) in coords.iter().zip(self.shape()).enumerate() {
            if c >= n {
                return Err(Error::Index {
                    axis,
                    coord: c,
                    extent: n,
                });
            }
            idx = idx * n + c;
        }
        Ok(idx)
    }

    pub fn coords_of(&self, index: usize) -> Result<Vec<usize>> {
        let len = self.len();
        if index >= len {
            return Err(Error::Index {
                axis: 0,
                coord: index,
                extent: len,
            });
        }
        let mut coords = vec![0; self.rank];
        let mut rest = index;
        for axis in (0..self.rank).rev() {
            let n = self.extents[axis];
            coords[axis] = rest % n;
            rest /= n;
        }
        Ok(coords)
    }

    /// Axis-aligned neighbors inside the domain, ordered
    /// `axis0+, axis1+, .., axis0-, axis1-, ..`.
    pub fn face_neighbors(&self, coords: &[usize]) -> Vec<Vec<usize>> {
        debug_assert_eq!(coords.len(), self.rank);
        let mut out = Vec::with_capacity(2 * self.rank);
        for axis in 0..self.rank {
            if coords[axis] + 1 < self.extents[axis] {
                let mut c = coords.to_vec();
                c[axis] += 1;
                out.push(c);
            }
        }
        for axis in 0..self.rank {
            if coords[axis] > 0 {
                let mut c = coords.to_vec();
                c[axis] -= 1;
                out.push(c);
            }
        }
        out
    }
}

impl std::fmt::Debug for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.shape()).finish()
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.shape().iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Dense row-major lattice of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice<T> {
    dims: Dims,
    data: Vec<T>,
}

/// Real-valued lattice: original, decompressed or compensated data.
pub type ScalarGrid = Lattice<f64>;
/// Binary lattice, e.g. a boundary map.
pub type LatticeMask = Lattice<bool>;

impl<T> Lattice<T> {
    pub fn new(dims: Dims, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Length {
                expected: dims.len(),
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: Dims, value: T) -> Self
    where
        T: Clone,
    {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, coords: &[usize]) -> Result<&T> {
        let i = self.dims.linear_index(coords)?;
        Ok(&self.data[i])
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Lattice<U> {
        Lattice {
            dims: self.dims,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Lattice<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims.shape().to_vec(),
                right: other.dims.shape().to_vec(),
            });
        }
        Ok(())
    }
}

impl<T> Index<usize> for Lattice<T> {
    type Output = T;

    fn index(&self, index: usize) -> &T {
        &self.data[index]
    }
}

impl<T> IndexMut<usize> for Lattice<T> {
    fn index_mut(&mut self, index: usize) -> &mut T {
        &mut self.data[index]
    }
}

impl Lattice<f64> {
    /// Builds a scalar grid, rejecting NaN and infinities.
    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Self::new(dims, values)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self.min_max();
        hi - lo
    }
}

impl Lattice<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// An axis-aligned sub-box of a lattice plus a requested halo width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub origin: Vec<usize>,
    pub shape: Vec<usize>,
    pub halo: usize,
}

impl BlockSpec {
    pub fn new(origin: Vec<usize>, shape: Vec<usize>, halo: usize) -> Self {
        Self {
            origin,
            shape,
            halo,
        }
    }

    pub fn whole(dims: Dims) -> Self {
        Self::new(vec![0; dims.rank()], dims.shape().to_vec(), 0)
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        if self.origin.len() != dims.rank() || self.shape.len() != dims.rank() {
            return Err(Error::Range(format!(
                "block rank {} does not match lattice rank {}",
                self.origin.len().max(self.shape.len()),
                dims.rank()
            )));
        }
        for axis in 0..dims.rank() {
            let (o, s, n) = (self.origin[axis], self.shape[axis], dims.extent(axis));
            if s == 0 || o + s > n {
                return Err(Error::Range(format!(
                    "axis {axis}: [{o}, {}) not within [0, {n})",
                    o + s
                )));
            }
        }
        Ok(())
    }

    /// Halo widths actually available on the low and high side of each axis,
    /// clipped at the domain edge.
    pub fn attained_halo(&self, dims: Dims) -> (Vec<usize>, Vec<usize>) {
        let lo = self.origin.iter().map(|&o| o.min(self.halo)).collect();
        let hi = (0..dims.rank())
            .map(|a| {
                let end = self.origin[a] + self.shape[a];
                (dims.extent(a) - end).min(self.halo)
            })
            .collect();
        (lo, hi)
    }

    pub fn contains(&self, coords: &[usize]) -> bool {
        coords
            .iter()
            .zip(self.origin.iter().zip(&self.shape))
            .all(|(&c, (&o, &s))| c >= o && c < o + s)
    }
}

/// A block cut out of a parent lattice together with its halo.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub spec: BlockSpec,
    pub halo_lo: Vec<usize>,
    pub halo_hi: Vec<usize>,
    pub lattice: Lattice<T>,
}

pub fn extract_block<T: Clone>(parent: &Lattice<T>, spec: &BlockSpec) -> Result<Block<T>> {
    let dims = parent.dims();
    spec.validate(dims)?;
    let (halo_lo, halo_hi) = spec.attained_halo(dims);
    let start: Vec<usize> = (0..dims.rank())
        .map(|a| spec.origin[a] - halo_lo[a])
        .collect();
    let shape: Vec<usize> = (0..dims.rank())
        .map(|a| spec.shape[a] + halo_lo[a] + halo_hi[a])
        .collect();
    let lattice = crop(parent, &start, &shape)?;
    Ok(Block {
        spec: spec.clone(),
        halo_lo,
        halo_hi,
        lattice,
    })
}

impl<T: Clone> Block<T> {
    /// The block without its halo.
    pub fn interior(&self) -> Lattice<T> {
        crop(&self.lattice, &self.halo_lo, &self.spec.shape)
            .expect("interior lies within the block by construction")
    }

    /// Writes the non-halo voxels back into `parent` at the block's origin.
    pub fn write_interior(&self, parent: &mut Lattice<T>) -> Result<()> {
        copy_box(
            &self.lattice,
            &self.halo_lo,
            parent,
            &self.spec.origin,
            &self.spec.shape,
        )
    }
}

/// Copies the box `[start, start + shape)` of `src` into a new lattice.
pub fn crop<T: Clone>(src: &Lattice<T>, start: &[usize], shape: &[usize]) -> Result<Lattice<T>> {
    let dims = Dims::new(shape)?;
    let Some(seed) = src.data.first().cloned() else {
        return Err(Error::Range("empty source lattice".into()));
    };
    let mut out = Lattice::filled(dims, seed);
    copy_box(src, start, &mut out, &vec![0; shape.len()], shape)?;
    Ok(out)
}

/// Copies a box of `shape` voxels from `src` at `src_origin` into `dst` at
/// `dst_origin`.
pub fn copy_box<T: Clone>(
    src: &Lattice<T>,
    src_origin: &[usize],
    dst: &mut Lattice<T>,
    dst_origin: &[usize],
    shape: &[usize],
) -> Result<()> {
    let rank = src.dims.rank();
    if dst.dims.rank() != rank
        || src_origin.len() != rank
        || dst_origin.len() != rank
        || shape.len() != rank
    {
        return Err(Error::Range("rank mismatch in box copy".into()));
    }
    for a in 0..rank {
        if src_origin[a] + shape[a] > src.dims.extent(a)
            || dst_origin[a] + shape[a] > dst.dims.extent(a)
        {
            return Err(Error::Range(format!("box copy exceeds axis {a}")));
        }
    }
    let pad = |v: &[usize], fill: usize| {
        let mut out = [fill; MAX_RANK];
        out[MAX_RANK - rank..].copy_from_slice(v);
        out
    };
    let (so, d_o, sh) = (pad(src_origin, 0), pad(dst_origin, 0), pad(shape, 1));
    let (ss, ds) = (src.dims.padded(), dst.dims.padded());
    let row = sh[2];
    for i in 0..sh[0] {
        for j in 0..sh[1] {
            let s = ((so[0] + i) * ss[1] + so[1] + j) * ss[2] + so[2];
            let d = ((d_o[0] + i) * ds[1] + d_o[1] + j) * ds[2] + d_o[2];
            dst.data[d..d + row].clone_from_slice(&src.data[s..s + row]);
        }
    }
    Ok(())
}
