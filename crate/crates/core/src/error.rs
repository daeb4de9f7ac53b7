use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped by how a caller is expected to react: contract
/// violations (bad shapes, bad parameters), degenerate inputs (a computation
/// that has no meaningful answer for the data given), and consistency
/// failures between artifacts that should agree.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimensionality {0} not supported (expected 1, 2 or 3 axes)")]
    Rank(usize),
    #[error("axis {axis} has zero extent")]
    EmptyAxis { axis: usize },
    #[error("coordinate {coord} out of range on axis {axis} (extent {extent})")]
    Index {
        axis: usize,
        coord: usize,
        extent: usize,
    },
    #[error("expected {expected} values for the lattice, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("lattice dimensions differ: {left:?} vs {right:?}")]
    DimsMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("non-finite value at linear index {0}")]
    NonFinite(usize),
    #[error("block out of range: {0}")]
    Range(String),
    #[error("invalid parameter: {0}")]
    Contract(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("quantization index overflow at linear index {0}")]
    Overflow(usize),
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
