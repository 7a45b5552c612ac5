use thiserror::Error;

use crate::dyadic::AxisId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("exponent {0} outside the supported range [1.01, 100]")]
    ExponentOutOfRange(f64),
    #[error("invalid lattice spec: {0}")]
    InvalidLattice(String),
    #[error("invalid grid axis: {0}")]
    InvalidAxis(String),
    #[error("axis {0:?} is not present in the field")]
    AxisAbsent(AxisId),
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error("level {level} out of range 0..={max}")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("cube index {index} out of range at level {level}")]
    CubeOutOfRange { level: u32, index: usize },
    #[error("depth overflow: level {level} + depth {depth} exceeds finest level {finest}")]
    DepthOverflow { level: u32, depth: u32, finest: u32 },
    #[error("finest-level cube has no children in the truncation")]
    FinestCube,
    #[error("invalid subgrid parameters: j = {j} > i = {i}")]
    InvalidSubgrid { i: u32, j: u32 },
    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),
    #[error("model entry cannot be converted to a matrix kernel: {0}")]
    NonMatrixEntry(String),
    #[error("inner operator incompatible with the remaining axes: {0}")]
    IncompatibleOperator(String),
    #[error("exact norm requires all exponents equal to 2 and dimension <= {max_dim}")]
    ExactModeUnavailable { max_dim: usize },
    #[error("zero denominator with nonzero numerator")]
    ZeroDenominator,
    #[error("inadmissible candidate set: {0}")]
    InadmissibleSet(String),
    #[error("cube is not a member of the family")]
    NotInFamily,
    #[error("invalid budget: {0}")]
    InvalidBudget(f64),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
