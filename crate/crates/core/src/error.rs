use crate::group::Group;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group mismatch: {0:?} vs {1:?}")]
    GroupMismatch(Group, Group),
    #[error("element too close to the cut locus of log (class angle {0})")]
    CutLocus(f64),
    #[error("time parameter must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("character sum tail {tail:e} exceeds tolerance at c2max = {c2max}")]
    TruncationInsufficient { c2max: f64, tail: f64 },
    #[error("sampling table under-resolved: {0}")]
    TableUnderResolved(String),
    #[error("{rejected} of {total} sampled products landed near the cut locus")]
    CutLocusFractionExceeded { rejected: usize, total: usize },
    #[error("character sum tail {tail:e} above tolerance")]
    UnderTruncated { tail: f64 },
    #[error("sphere partition sum does not converge at this truncation (tail {tail:e})")]
    DivergentSphereSum { tail: f64 },
    #[error("resolution N = {n} needs {faces} faces, above the memory guard")]
    ResolutionTooHigh { n: u32, faces: u64 },
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("level r = {0} is not above the last saddle")]
    LevelBelowSaddles(f64),
    #[error("unknown generator: {0}")]
    UnknownGenerator(String),
    #[error("observable support reaches row {row}, conditioning level row is {level}")]
    SupportViolation { row: usize, level: usize },
    #[error("effective sample size {ess:.1} is below 1% of {samples} samples")]
    EssCollapse { ess: f64, samples: usize },
    #[error("degenerate interval")]
    DegenerateInterval,
    #[error("empty window")]
    EmptyWindow,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
