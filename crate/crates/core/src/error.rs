use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth:.6} m)")]
    BehindCamera { depth: f64 },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("query ({x:.3}, {y:.3}) is outside the elevation grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("landmark {landmark} has satellite lifts that disagree")]
    InconsistentTrack { landmark: u64 },

    #[error("normal equations are singular at iteration {iteration}")]
    SingularSystem { iteration: usize },

    #[error("no active variables to optimize")]
    NoActiveVariables,

    #[error("need at least {needed} frame pairs, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stage {stage} ({name}) failed: {source}")]
    Stage {
        stage: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
