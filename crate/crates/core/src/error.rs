use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("orbit reaches the pinching point at index {index} (log of zero derivative)")]
    PinchedOrbit { index: u64 },

    #[error("rotation violates the Diophantine bound at n = {n}: distance {distance:e} < {bound:e}")]
    NotDiophantine { n: u64, distance: f64, bound: f64 },

    #[error("undersampled: finest scale {finest:e} is below the sampling resolution {resolution:e}")]
    Undersampled { finest: f64, resolution: f64 },

    #[error("too close to pinched set: {excluded} of {total} grid points have zero derivative")]
    TooCloseToPinchedSet { excluded: usize, total: usize },

    #[error("peak radii do not decay (a = {a} <= 1)")]
    NonDecayingRadii { a: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl Error {
    /// Numeric failures, as opposed to bad input or violated preconditions.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::PinchedOrbit { .. }
                | Error::NotDiophantine { .. }
                | Error::Undersampled { .. }
                | Error::TooCloseToPinchedSet { .. }
                | Error::NonDecayingRadii { .. }
                | Error::DegenerateFit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
