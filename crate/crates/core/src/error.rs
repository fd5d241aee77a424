use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid box: lower bound exceeds upper bound in dimension {0}")]
    InvalidBox(usize),

    #[error("invalid Lipschitz constant: {0}")]
    InvalidConstant(String),

    #[error("missing Lipschitz information: {0}")]
    MissingInformation(&'static str),

    #[error("point lies outside the domain the constants are valid on")]
    OutsideDomain,

    #[error("constraint {index} is violated at the current point (value {value}); guard logic needs a feasible start")]
    InfeasibleStart { index: usize, value: f64 },

    #[error("negative perturbation radius {0}")]
    NegativeRadius(f64),

    #[error(
        "inconsistent data at measurement {index}: refined lower {lower} exceeds refined upper {upper}"
    )]
    InconsistentData { index: usize, lower: f64, upper: f64 },

    #[error("least-squares design matrix is rank deficient")]
    SingularDesign,

    #[error("not enough data: need {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("model gradient disagrees with finite differences at {at:?} (coordinate {coord})")]
    GradientMismatch { at: Vec<f64>, coord: usize },

    #[error("initial point does not satisfy the constraints with the required back-off")]
    NonCompliantStart,

    #[error("unknown identifier: {0}")]
    UnknownId(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
