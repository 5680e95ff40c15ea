use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("map {index} acts on dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("map {index} has contraction ratio {ratio}, must lie in (0,1)")]
    RatioOutOfRange { index: usize, ratio: f64 },
    #[error("map {index}: matrix is not orthogonal (max defect {defect:e})")]
    NotOrthogonal { index: usize, defect: f64 },
    #[error("a system needs at least two maps, got {0}")]
    TooFewMaps(usize),
    #[error("basic cylinders are not separated (gap bracket [{c_lo}, {c_hi}] at depth limit)")]
    NotSeparated { c_lo: f64, c_hi: f64 },
    #[error("diameter bracket did not reach tolerance {tol} (width {width})")]
    TolNotReached { tol: f64, width: f64 },
    #[error("map {0} is singular; cannot solve for its fixed point")]
    SingularMap(usize),
    #[error("level {level} needs {needed} points, exceeding the budget of {budget}")]
    CapacityExceeded {
        level: u32,
        needed: u128,
        budget: u64,
    },
    #[error("code prefix of length {prefix} exceeds cloud level {level}")]
    PrefixTooLong { prefix: usize, level: u32 },
    #[error("tie-group index {index} out of range ({len} groups)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("admissibility window is empty at k = {k} (c - 3Rr_max^k - 2Rr_max^(k+1) <= 0)")]
    WindowInfeasible { k: u32 },
    #[error("no cross-cylinder distance found for center {0}")]
    NoAdmissible(usize),
    #[error("brute-force reference capped at {cap} points, level {level} needs {needed}")]
    TooLarge { level: u32, needed: u128, cap: u64 },
    #[error("unknown closed-form formula `{0}`")]
    UnknownFormula(String),
    #[error("formula {name} is undefined at r = {r}: {reason}")]
    ROutOfDomain {
        name: String,
        r: f64,
        reason: String,
    },
    #[error("error bound {epsilon} swallows the estimate {value}; interval is vacuous at this k")]
    DegenerateInterval { value: f64, epsilon: f64 },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
