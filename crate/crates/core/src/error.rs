use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("glide system needs at least one direction")]
    EmptyDirections,

    #[error("glide direction {index} has zero length")]
    ZeroDirection { index: usize },

    #[error("expected vectors of dimension {expected}, found dimension {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("glide directions span only a {rank}-dimensional subspace of R^{dim}")]
    SpanDeficient { dim: usize, rank: usize },

    #[error("glide directions {first} and {second} coincide")]
    DuplicateDirection { first: usize, second: usize },

    #[error("force vanishes, maximizer set is undefined")]
    ZeroForce,

    #[error("configurations hold {left} and {right} particles")]
    ShapeMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{assignments} direction assignments exceed the enumeration limit of {limit}")]
    CombinatorialBlowup { assignments: f64, limit: usize },

    #[error("distance {distance:e} to the singular set is below the regularisation scale {epsilon:e}")]
    SingularProximity { distance: f64, epsilon: f64 },

    #[error("step displacement {displacement:e} exceeds the stability bound {bound:e}")]
    StepTooLarge { displacement: f64, bound: f64 },

    #[error("point is not on the ambiguity set (mismatch {mismatch:e}, tolerance {tolerance:e})")]
    NotOnAmbiguitySet { mismatch: f64, tolerance: f64 },

    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps `self` with the index of the time step that produced it.
    pub fn at_step(self, index: usize) -> Self {
        Error::Step {
            index,
            source: Box::new(self),
        }
    }

    /// Returns the innermost error, looking through step wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
