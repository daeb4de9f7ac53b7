//! Block-decomposed execution of the mitigation pipeline.
//!
//! Ranks are simulated in-process. Each rank owns one block and talks to
//! others only through messages routed by [`Fabric`]: a round posts every
//! outgoing message, then delivers each inbox ordered by sender. Results do
//! not depend on how many OS threads run the ranks.
//!
//! Three strategies are provided:
//!
//! * [`Strategy::Embarrassing`]: every rank runs the whole pipeline on its
//!   own block and never communicates.
//! * [`Strategy::Exact`]: indices are gathered to rank 0, which runs the
//!   sequential pipeline and scatters the compensation back. Output is
//!   bit-identical to the single-domain run.
//! * [`Strategy::Approximate`]: one-voxel halos of the indices are exchanged
//!   before boundary detection and halos of the propagated sign map before
//!   sign-flip detection; both distance transforms stay block-local.

use std::io::Write;
use std::mem::size_of;

use rayon::prelude::*;

use crate::edt;
use crate::error::{Error, Result};
use crate::grid::{copy_box, crop, BlockSpec, Dims, Lattice, LatticeMask, ScalarGrid};
use crate::mitigate::{
    analyze_indices, apply_compensation, boundary_and_signs, check_decompressed,
    compensation_field, propagate_only, sign_flip_boundary, BoundaryArtifacts, MitigationConfig,
    SignMap,
};
use crate::quality::{QualityReport, SsimParams};
use crate::quant::QuantizedField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Embarrassing,
    Exact,
    Approximate,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Embarrassing,
        Strategy::Exact,
        Strategy::Approximate,
    ];
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embarrassing" => Ok(Self::Embarrassing),
            "exact" => Ok(Self::Exact),
            "approximate" => Ok(Self::Approximate),
            other => Err(Error::Contract(format!("unknown strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Embarrassing => "embarrassing",
            Self::Exact => "exact",
            Self::Approximate => "approximate",
        })
    }
}

/// Non-overlapping blocks tiling a domain, one rank per block.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    dims: Dims,
    blocks: Vec<BlockSpec>,
    ranks: Vec<usize>,
}

impl Decomposition {
    pub fn new(dims: Dims, blocks: Vec<BlockSpec>, ranks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() || ranks.len() != blocks.len() {
            return Err(Error::Contract(format!(
                "{} ranks for {} blocks",
                ranks.len(),
                blocks.len()
            )));
        }
        let mut seen = vec![false; ranks.len()];
        for &r in &ranks {
            if r >= ranks.len() || std::mem::replace(&mut seen[r], true) {
                return Err(Error::Contract(format!("rank {r} invalid or repeated")));
            }
        }
        let mut owner = Lattice::filled(dims, false);
        for block in &blocks {
            block.validate(dims)?;
            if crop(&owner, &block.origin, &block.shape)?.count() > 0 {
                return Err(Error::Contract("blocks overlap".into()));
            }
            let patch = Lattice::filled(Dims::new(&block.shape)?, true);
            copy_box(
                &patch,
                &vec![0; dims.rank()],
                &mut owner,
                &block.origin,
                &block.shape,
            )?;
        }
        if owner.count() != dims.len() {
            return Err(Error::Contract("blocks do not cover the domain".into()));
        }
        Ok(Self {
            dims,
            blocks: blocks
                .into_iter()
                .map(|b| BlockSpec { halo: 0, ..b })
                .collect(),
            ranks,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Slab of block `from` that block `to` needs as a halo of `width`, if
    /// the two blocks share a face.
    fn face_slab(&self, from: usize, to: usize, width: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        let (a, b) = (&self.blocks[from], &self.blocks[to]);
        let rank = self.dims.rank();
        let mut touching = None;
        let mut origin = vec![0; rank];
        let mut shape = vec![0; rank];
        for axis in 0..rank {
            let (a0, a1) = (a.origin[axis], a.origin[axis] + a.shape[axis]);
            let (b0, b1) = (b.origin[axis], b.origin[axis] + b.shape[axis]);
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if lo < hi {
                origin[axis] = lo;
                shape[axis] = hi - lo;
            } else if a1 == b0 || b1 == a0 {
                if touching.replace(axis).is_some() {
                    return None;
                }
                let w = width.min(a.shape[axis]);
                origin[axis] = if a1 == b0 { a1 - w } else { a0 };
                shape[axis] = w;
            } else {
                return None;
            }
        }
        touching.map(|_| (origin, shape))
    }
}

/// Splits each axis into near-equal parts, larger parts first, and assigns
/// ranks in row-major block order.
pub fn decompose(dims: Dims, splits: &[usize]) -> Result<Decomposition> {
    if splits.len() != dims.rank() {
        return Err(Error::Contract(format!(
            "{} splits given for a {}-D domain",
            splits.len(),
            dims.rank()
        )));
    }
    let mut per_axis: Vec<Vec<(usize, usize)>> = Vec::with_capacity(dims.rank());
    for (axis, &s) in splits.iter().enumerate() {
        let n = dims.extent(axis);
        if s == 0 || s > n {
            return Err(Error::Contract(format!(
                "cannot split extent {n} of axis {axis} into {s} blocks"
            )));
        }
        let (base, extra) = (n / s, n % s);
        let mut start = 0;
        per_axis.push(
            (0..s)
                .map(|i| {
                    let len = base + usize::from(i < extra);
                    let seg = (start, len);
                    start += len;
                    seg
                })
                .collect(),
        );
    }
    let mut blocks = vec![BlockSpec::new(vec![], vec![], 0)];
    for segs in &per_axis {
        blocks = blocks
            .into_iter()
            .flat_map(|b| {
                segs.iter().map(move |&(o, l)| {
                    let mut next = b.clone();
                    next.origin.push(o);
                    next.shape.push(l);
                    next
                })
            })
            .collect();
    }
    let ranks = (0..blocks.len()).collect();
    Decomposition::new(dims, blocks, ranks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Round {
    /// Index halos ahead of boundary detection.
    StepA,
    /// Sign-map halos ahead of sign-flip detection.
    StepC,
    Gather,
    Scatter,
}

impl std::fmt::Display for Round {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::StepA => "stepA",
            Self::StepC => "stepC",
            Self::Gather => "gather",
            Self::Scatter => "scatter",
        })
    }
}

/// One delivered message: sender rank, round, receiver rank, payload size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExchangeRecord {
    pub rank: usize,
    pub round: Round,
    pub neighbor: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExchangeLog {
    pub records: Vec<ExchangeRecord>,
}

impl ExchangeLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct rounds in the order they happened.
    pub fn rounds(&self) -> Vec<Round> {
        let mut out: Vec<Round> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.round) && !out.contains(&r.round) {
                out.push(r.round);
            }
        }
        out
    }

    pub fn messages(&self) -> usize {
        self.records.len()
    }

    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes).sum()
    }

    pub fn round_bytes(&self, round: Round) -> usize {
        self.records
            .iter()
            .filter(|r| r.round == round)
            .map(|r| r.bytes)
            .sum()
    }

    /// CSV with header `rank,round,neighbor,bytes`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Contract(format!("writing exchange log: {e}"));
        w.write_record(["rank", "round", "neighbor", "bytes"])
            .map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.rank.to_string(),
                r.round.to_string(),
                r.neighbor.to_string(),
                r.bytes.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Contract(format!("writing exchange log: {e}")))?;
        Ok(())
    }
}

/// A box of values addressed in global coordinates.
struct Message<T> {
    from: usize,
    to: usize,
    origin: Vec<usize>,
    payload: Lattice<T>,
}

/// Runs per-rank phases and routes messages between them.
struct Fabric<'a> {
    pool: Option<rayon::ThreadPool>,
    dec: &'a Decomposition,
    log: ExchangeLog,
}

impl<'a> Fabric<'a> {
    fn new(dec: &'a Decomposition, workers: usize) -> Result<Self> {
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Contract(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            pool,
            dec,
            log: ExchangeLog::default(),
        })
    }

    /// Runs `f` once per block index; ranks never share mutable state.
    fn phase<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let n = self.dec.len();
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    /// Posts all outgoing messages, then hands each block its inbox sorted
    /// by sender.
    fn exchange<T>(
        &mut self,
        round: Round,
        outgoing: Vec<Vec<Message<T>>>,
    ) -> Vec<Vec<Message<T>>> {
        let mut inboxes: Vec<Vec<Message<T>>> = (0..self.dec.len()).map(|_| Vec::new()).collect();
        for msg in outgoing.into_iter().flatten() {
            self.log.records.push(ExchangeRecord {
                rank: self.dec.ranks[msg.from],
                round,
                neighbor: self.dec.ranks[msg.to],
                bytes: msg.payload.len() * size_of::<T>(),
            });
            let to = msg.to;
            inboxes[to].push(msg);
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|m| m.from);
        }
        inboxes
    }

    /// Face-halo exchange of width one for block-local lattices.
    fn halo_exchange<T>(&mut self, round: Round, local: &[Lattice<T>]) -> Result<Vec<Lattice<T>>>
    where
        T: Clone + Default + Send + Sync,
    {
        let dec = self.dec;
        let outgoing: Vec<Vec<Message<T>>> = self.phase(|from| {
            let block = &dec.blocks[from];
            (0..dec.len())
                .filter(|&to| to != from)
                .filter_map(|to| {
                    let (origin, shape) = dec.face_slab(from, to, 1)?;
                    let rel: Vec<usize> = origin
                        .iter()
                        .zip(&block.origin)
                        .map(|(g, o)| g - o)
                        .collect();
                    let payload = crop(&local[from], &rel, &shape).ok()?;
                    Some(Message {
                        from,
                        to,
                        origin,
                        payload,
                    })
                })
                .collect()
        });
        let inboxes = self.exchange(round, outgoing);
        let dims = dec.dims;
        self.phase(|b| {
            let spec = BlockSpec {
                halo: 1,
                ..dec.blocks[b].clone()
            };
            let (lo, hi) = spec.attained_halo(dims);
            let ext_origin: Vec<usize> = spec.origin.iter().zip(&lo).map(|(o, h)| o - h).collect();
            let ext_shape: Vec<usize> = (0..dims.rank())
                .map(|a| spec.shape[a] + lo[a] + hi[a])
                .collect();
            let mut ext = Lattice::filled(Dims::new(&ext_shape)?, T::default());
            copy_box(&local[b], &vec![0; dims.rank()], &mut ext, &lo, &spec.shape)?;
            for msg in &inboxes[b] {
                let at: Vec<usize> = msg
                    .origin
                    .iter()
                    .zip(&ext_origin)
                    .map(|(g, o)| g - o)
                    .collect();
                copy_box(
                    &msg.payload,
                    &vec![0; dims.rank()],
                    &mut ext,
                    &at,
                    msg.payload.dims().shape(),
                )?;
            }
            Ok(ext)
        })
        .into_iter()
        .collect()
    }
}

/// Stitched result of a strategy run.
#[derive(Clone, Debug)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub output: ScalarGrid,
    pub boundary: LatticeMask,
    pub boundary_signs: SignMap,
    pub signs: SignMap,
    pub log: ExchangeLog,
}

struct BlockResult {
    output: ScalarGrid,
    artifacts: BoundaryArtifacts,
    signs: SignMap,
}

fn crop_to_block<T: Clone>(ext: &Lattice<T>, spec: &BlockSpec, dims: Dims) -> Result<Lattice<T>> {
    let (lo, _) = BlockSpec {
        halo: 1,
        ..spec.clone()
    }
    .attained_halo(dims);
    crop(ext, &lo, &spec.shape)
}

/// Runs the mitigation pipeline on `decomp` under `strategy`.
///
/// `workers` caps the number of threads running ranks concurrently; one
/// runs every rank serially. The result is the same either way.
pub fn run_strategy(
    decomp: &ScalarGrid,
    q: &QuantizedField,
    cfg: &MitigationConfig,
    dec: &Decomposition,
    strategy: Strategy,
    workers: usize,
) -> Result<StrategyOutcome> {
    check_decompressed(decomp, q)?;
    if q.eps_abs() != cfg.eps_abs() {
        return Err(Error::Inconsistent(format!(
            "config eps {} differs from quantization eps {}",
            cfg.eps_abs(),
            q.eps_abs()
        )));
    }
    if dec.dims() != q.dims() {
        return Err(Error::Contract(format!(
            "decomposition over {} does not match data {}",
            dec.dims(),
            q.dims()
        )));
    }
    let dims = dec.dims();
    let amp = cfg.amplitude();
    let indices = q.as_lattice();
    let mut fabric = Fabric::new(dec, workers)?;

    let local_q: Vec<Lattice<i64>> = fabric
        .phase(|b| crop(&indices, &dec.blocks[b].origin, &dec.blocks[b].shape))
        .into_iter()
        .collect::<Result<_>>()?;
    let local_d: Vec<ScalarGrid> = fabric
        .phase(|b| crop(decomp, &dec.blocks[b].origin, &dec.blocks[b].shape))
        .into_iter()
        .collect::<Result<_>>()?;

    let results: Vec<BlockResult> = match strategy {
        Strategy::Embarrassing => fabric
            .phase(|b| {
                let a = analyze_indices(&local_q[b], amp)?;
                Ok(BlockResult {
                    output: apply_compensation(&local_d[b], &a.compensation)?,
                    artifacts: a.artifacts,
                    signs: a.signs,
                })
            })
            .into_iter()
            .collect::<Result<_>>()?,
        Strategy::Exact => {
            let gathered = fabric.phase(|b| {
                (b != 0)
                    .then(|| Message {
                        from: b,
                        to: 0,
                        origin: dec.blocks[b].origin.clone(),
                        payload: local_q[b].clone(),
                    })
                    .into_iter()
                    .collect::<Vec<_>>()
            });
            let inbox = fabric.exchange(Round::Gather, gathered).swap_remove(0);
            let mut global = Lattice::filled(dims, 0i64);
            let zero = vec![0; dims.rank()];
            copy_box(
                &local_q[0],
                &zero,
                &mut global,
                &dec.blocks[0].origin,
                &dec.blocks[0].shape,
            )?;
            for msg in &inbox {
                copy_box(
                    &msg.payload,
                    &zero,
                    &mut global,
                    &msg.origin,
                    msg.payload.dims().shape(),
                )?;
            }
            let a = analyze_indices(&global, amp)?;
            let cut = |b: usize| -> Result<(ScalarGrid, BoundaryArtifacts, SignMap)> {
                let (o, s) = (&dec.blocks[b].origin, &dec.blocks[b].shape);
                Ok((
                    crop(&a.compensation, o, s)?,
                    BoundaryArtifacts {
                        boundary: crop(&a.artifacts.boundary, o, s)?,
                        boundary_signs: crop(&a.artifacts.boundary_signs, o, s)?,
                    },
                    crop(&a.signs, o, s)?,
                ))
            };
            let pieces: Vec<_> = (0..dec.len()).map(cut).collect::<Result<_>>()?;
            let scattered: Vec<Vec<Message<f64>>> = vec![pieces
                .iter()
                .enumerate()
                .skip(1)
                .map(|(b, p)| Message {
                    from: 0,
                    to: b,
                    origin: dec.blocks[b].origin.clone(),
                    payload: p.0.clone(),
                })
                .collect()];
            let inboxes = fabric.exchange(Round::Scatter, scattered);
            let comp: Vec<&ScalarGrid> = (0..dec.len())
                .map(|b| {
                    if b == 0 {
                        &pieces[0].0
                    } else {
                        &inboxes[b][0].payload
                    }
                })
                .collect();
            fabric
                .phase(|b| apply_compensation(&local_d[b], comp[b]))
                .into_iter()
                .zip(pieces)
                .map(|(out, (_, artifacts, signs))| {
                    Ok(BlockResult {
                        output: out?,
                        artifacts,
                        signs,
                    })
                })
                .collect::<Result<_>>()?
        }
        Strategy::Approximate => {
            let q_ext = fabric.halo_exchange(Round::StepA, &local_q)?;
            let stage: Vec<(BoundaryArtifacts, edt::FeatureTransform, SignMap)> = fabric
                .phase(|b| {
                    let ext = boundary_and_signs(&q_ext[b]);
                    let spec = &dec.blocks[b];
                    let artifacts = BoundaryArtifacts {
                        boundary: crop_to_block(&ext.boundary, spec, dims)?,
                        boundary_signs: crop_to_block(&ext.boundary_signs, spec, dims)?,
                    };
                    let ft1 = edt::feature_transform(&artifacts.boundary);
                    let signs = propagate_only(&artifacts, &ft1)?;
                    Ok((artifacts, ft1, signs))
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let local_s: Vec<SignMap> = stage.iter().map(|s| s.2.clone()).collect();
            let s_ext = fabric.halo_exchange(Round::StepC, &local_s)?;
            let stage = &stage;
            fabric
                .phase(|b| {
                    let (artifacts, ft1, signs) = &stage[b];
                    let ext_flips = sign_flip_boundary(&s_ext[b], &q_ext[b])?;
                    let flips = crop_to_block(&ext_flips, &dec.blocks[b], dims)?;
                    let ft2 = edt::distance_transform(&flips);
                    let c = compensation_field(ft1, &ft2, signs, amp)?;
                    Ok(BlockResult {
                        output: apply_compensation(&local_d[b], &c)?,
                        artifacts: artifacts.clone(),
                        signs: signs.clone(),
                    })
                })
                .into_iter()
                .collect::<Result<_>>()?
        }
    };

    let mut output = Lattice::filled(dims, 0.0);
    let mut boundary = Lattice::filled(dims, false);
    let mut boundary_signs = Lattice::filled(dims, 0i8);
    let mut signs = Lattice::filled(dims, 0i8);
    let zero = vec![0; dims.rank()];
    for (spec, r) in dec.blocks.iter().zip(&results) {
        copy_box(&r.output, &zero, &mut output, &spec.origin, &spec.shape)?;
        copy_box(
            &r.artifacts.boundary,
            &zero,
            &mut boundary,
            &spec.origin,
            &spec.shape,
        )?;
        copy_box(
            &r.artifacts.boundary_signs,
            &zero,
            &mut boundary_signs,
            &spec.origin,
            &spec.shape,
        )?;
        copy_box(&r.signs, &zero, &mut signs, &spec.origin, &spec.shape)?;
    }
    Ok(StrategyOutcome {
        strategy,
        output,
        boundary,
        boundary_signs,
        signs,
        log: fabric.log,
    })
}

/// Quality and communication summary for one strategy run.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub report: QualityReport,
    pub bound_ok: bool,
    pub rounds: usize,
    pub messages: usize,
    pub bytes: usize,
}

pub fn strategy_report(
    orig: &ScalarGrid,
    outcomes: &[StrategyOutcome],
    cfg: &MitigationConfig,
    params: &SsimParams,
) -> Result<Vec<StrategyRow>> {
    outcomes
        .iter()
        .map(|o| {
            let report = QualityReport::measure(
                o.strategy.to_string(),
                cfg.eps_abs(),
                orig,
                &o.output,
                params,
            )?;
            Ok(StrategyRow {
                strategy: o.strategy,
                bound_ok: report.max_abs_err <= cfg.relaxed_bound(),
                report,
                rounds: o.log.rounds().len(),
                messages: o.log.messages(),
                bytes: o.log.total_bytes(),
            })
        })
        .collect()
}
