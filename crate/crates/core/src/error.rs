use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `T(P, λ0)` is numerically singular, so `λ0` is already an eigenvalue.
    #[error("λ0 is (numerically) an eigenvalue of P: σ_min/σ_max = {ratio:.3e}")]
    EigenvalueAtLambda0 { ratio: f64 },

    #[error("the polynomial is numerically singular")]
    SingularPolynomial,

    #[error("the first chain vector x_0 must be nonzero")]
    ZeroEigenvector,

    #[error("rank of A_0 is {rank}, expected n - 1 = {expected}")]
    RankCondition { rank: usize, expected: usize },

    #[error("singular value σ_{index} is numerically zero")]
    VanishingSingularValue { index: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
