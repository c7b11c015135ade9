use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("mask covers the entire image")]
    MaskCoversEverything,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: String, actual: String },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("region has {pixels} pixels, fewer than the {k} clusters requested")]
    TooFewPixels { pixels: usize, k: usize },
    #[error("edited region moved entirely outside the image")]
    RegionLeftImage,
    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("remote predictor unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote predictor violated the protocol: {0}")]
    ProtocolViolation(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("predictor produced non-finite output")]
    NonFiniteOutput,
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable identifier, shared by the HTTP API and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedImage(_) => "malformed_image",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::EmptyMask => "empty_mask",
            Error::MaskCoversEverything => "mask_covers_everything",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::TooFewPixels { .. } => "too_few_pixels",
            Error::RegionLeftImage => "region_left_image",
            Error::SolverDiverged { .. } => "solver_diverged",
            Error::SingularSystem(_) => "singular_system",
            Error::RemoteUnavailable(_) => "remote_unavailable",
            Error::ProtocolViolation(_) => "protocol_violation",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteOutput => "non_finite_output",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Dataset(_) => "dataset_error",
            Error::Io(_) => "io_error",
        }
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}
