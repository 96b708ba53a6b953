use thiserror::Error;

/// Errors produced by the verification engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse network or instance description: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),

    #[error("identity activation has no sigmoidal relaxation")]
    IdentityActivation,

    #[error("invalid interval: lower bound {lower} exceeds upper bound {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("tangent point {tangent} does not give a valid {side} bound on [{lower}, {upper}]")]
    InvalidTangent {
        side: &'static str,
        tangent: f64,
        lower: f64,
        upper: f64,
    },

    #[error("missing {0} tangent point")]
    MissingTangent(&'static str),

    #[error("tangent search exhausted its budget of {steps} steps on [{lower}, {upper}]")]
    SearchExhausted { steps: usize, lower: f64, upper: f64 },

    #[error("no bracketing tangent point found for anchor {anchor}")]
    NoBracket { anchor: f64 },

    #[error("label {label} out of range for {outputs} outputs")]
    LabelOutOfRange { label: usize, outputs: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
