use thiserror::Error;

/// Errors raised by the library. Every variant corresponds to a violated
/// precondition or a failed certification, never to an internal bug.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("base d = {0} must be at least 2")]
    InvalidBase(i64),

    #[error("denominator {den} is not invertible modulo {modulus}")]
    NotInvertible { den: String, modulus: u64 },

    #[error("{0} is not an element of Z[1/d] for d = {1}")]
    NotInRing(String, u64),

    #[error("element lies outside the image of phi (x not divisible by {0})")]
    NotInImage(u64),

    #[error("gcd(d, q) must be 1 (d = {d}, q = {q})")]
    NotCoprime { d: u64, q: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("points are not comparable in the tree; use the general distance")]
    NotComparable,

    #[error("numeric routine failed to converge: {0}")]
    NonConvergence(String),

    #[error("radius {radius} exceeds the cap {cap}")]
    RadiusCap { radius: u32, cap: u32 },

    #[error("group order {order} exceeds the brute-force cap {cap}")]
    OrderCap { order: u64, cap: u64 },

    #[error("hypothesis failure: {0}")]
    Hypothesis(String),

    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
