use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid word symbol {0:?} (expected one of a, A, b, B)")]
    InvalidSymbol(char),

    #[error("counting kernel pattern must be a nonempty reduced word")]
    EmptyPattern,

    #[error("step budget exhausted: more than {max_steps} integration steps required")]
    StepUnderflow { max_steps: usize },

    #[error("no closed-form flow for this Hamiltonian (radial profiles only)")]
    NoExactFlow,

    #[error("operation not supported on this domain: {0}")]
    UnsupportedDomain(String),

    #[error("support disc (center {center:?}, radius {radius}) escapes the domain interior")]
    SupportEscapesDomain { center: [f64; 2], radius: f64 },

    #[error("path came within {distance:e} of the puncture (threshold {threshold:e})")]
    NearPuncture { distance: f64, threshold: f64 },

    #[error("cut crossing could not be made transversal after refinement")]
    TangentialCrossing,

    #[error("rejection rate {rate:.4} exceeds the allowed {limit:.4}")]
    ExcessiveRejection { rate: f64, limit: f64 },

    #[error("total mass of the 2-form is {mass:e}, expected zero for this boundary mode")]
    NonzeroTotalMass { mass: f64 },

    #[error("area forms have unequal mass: {left} vs {right}")]
    UnequalMass { left: f64, right: f64 },

    #[error("interpolated area form is not positive (min density {min_density:e})")]
    DegenerateInterpolant { min_density: f64 },

    #[error("density ratio is not 1 near the edge endpoints (max |log beta| = {max_log_beta:e})")]
    BetaNotOne { max_log_beta: f64 },

    #[error("time-1 map moves a point by {displacement} >= epsilon = {epsilon}")]
    DisplacementTooLarge { displacement: f64, epsilon: f64 },

    #[error("no strip width kappa found with h_t(strip) inside the target strip")]
    KappaNotFound,

    #[error("curve is not an embedded loop homotopic to the core circle: {0}")]
    NotEmbedded(String),

    #[error("curve is not a graph near marker {marker} after refinement")]
    NotGraphNearMarkers { marker: usize },

    #[error("curve lies {distance} from the core circle, more than epsilon = {epsilon}")]
    CurveTooFar { distance: f64, epsilon: f64 },

    #[error("grid shape mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("file not found: {0}")]
    FileNotFound(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
