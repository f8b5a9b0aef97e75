use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} too close to 1")]
    NotHyperbolic { modulus: f64 },
    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: f64 },
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("Markov partition construction failed: {0}")]
    ConstructionFailed(String),
    #[error("fiber image leaves the disk: {0}")]
    DomainEscape(String),
    #[error("base map is not expanding: min derivative {min_derivative}")]
    NotExpanding { min_derivative: f64 },
    #[error("fiber path endpoints do not match the contraction: mismatch {mismatch}")]
    MismatchedEndpoints { mismatch: f64 },
    #[error("cone check failed at point {point:?} with vector {vector:?} (ratio {ratio})")]
    ConeCheckFailed { point: Vec<f64>, vector: Vec<f64>, ratio: f64 },
    #[error("series did not converge: contraction rate {rate} >= 1")]
    NoConvergence { rate: f64 },
    #[error("point is not on the attractor: {0}")]
    NotOnAttractor(String),
    #[error("insufficient leaf resolution: {0} samples")]
    InsufficientResolution(usize),
    #[error("local product bracket left the cell {cell}")]
    BracketOutOfCell { cell: usize },
    #[error("{lost} of {total} particles could not be assigned a cell")]
    LostParticle { lost: usize, total: usize },
    #[error("cylinder depth {depth} too large: {per_cylinder:.2} expected particles per cylinder")]
    DepthTooLarge { depth: usize, per_cylinder: f64 },
    #[error("insufficient conditional samples: {0}")]
    InsufficientConditionals(String),
    #[error("leaf refinement exceeded the point budget {0}")]
    ResolutionExhausted(usize),
    #[error("orthonormal frame degenerated at step {0}")]
    DegenerateFrame(usize),
    #[error("incompatible systems: {0} vs {1}")]
    IncompatibleSystems(String, String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable variant name for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotHyperbolic { .. } => "NotHyperbolic",
            Error::NotUnimodular { .. } => "NotUnimodular",
            Error::UnsupportedDimension(_) => "UnsupportedDimension",
            Error::ConstructionFailed(_) => "ConstructionFailed",
            Error::DomainEscape(_) => "DomainEscape",
            Error::NotExpanding { .. } => "NotExpanding",
            Error::MismatchedEndpoints { .. } => "MismatchedEndpoints",
            Error::ConeCheckFailed { .. } => "ConeCheckFailed",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NotOnAttractor(_) => "NotOnAttractor",
            Error::InsufficientResolution(_) => "InsufficientResolution",
            Error::BracketOutOfCell { .. } => "BracketOutOfCell",
            Error::LostParticle { .. } => "LostParticle",
            Error::DepthTooLarge { .. } => "DepthTooLarge",
            Error::InsufficientConditionals(_) => "InsufficientConditionals",
            Error::ResolutionExhausted(_) => "ResolutionExhausted",
            Error::DegenerateFrame(_) => "DegenerateFrame",
            Error::IncompatibleSystems(..) => "IncompatibleSystems",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}
