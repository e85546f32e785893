use thiserror::Error;

/// Errors raised across the pipeline.
///
/// `code()` returns the stable short identifier used in reports and CLI output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-dataset: dataset has no rows")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value at row {row}: {message}")]
    InvalidValue { row: usize, message: String },

    #[error("invalid-ratios: {0}")]
    InvalidRatios(String),

    #[error("empty-class: class (y={y}, z={z}) is empty but carries target mass {mass}")]
    EmptyClass { y: u8, z: u8, mass: f64 },

    #[error("degenerate-weights: all sample weights are zero")]
    DegenerateWeights,

    #[error("degenerate-marginal: Pr(y=1)={py}, Pr(z=1)={pz}")]
    DegenerateMarginal { py: f64, pz: f64 },

    #[error("imaginary eta endpoint for gamma_y={gamma_y}, gamma_z={gamma_z}")]
    ImaginaryEta { gamma_y: f64, gamma_z: f64 },

    #[error("single-group: only z={0} present")]
    SingleGroup(u8),

    #[error("empty-cell: no rows with y={y}, z={z}")]
    EmptyCell { y: u8, z: u8 },

    #[error("undefined-pp: no prediction {yhat} in group z={z}")]
    UndefinedPp { yhat: u8, z: u8 },

    #[error("group-missing: no samples with z={0}")]
    GroupMissing(u8),

    #[error("invalid-delta: {0} is outside (0,1)")]
    InvalidDelta(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sdp-nonconverged after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e}, gap {gap:.3e})")]
    SdpNonConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("extraction-failed: residuals {residuals:?}")]
    ExtractionFailed { residuals: Vec<f64> },

    #[error("unsplittable-class: class (y={y}, z={z}) has {size} rows")]
    UnsplittableClass { y: u8, z: u8, size: usize },

    #[error("diverged: loss is not finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyDataset => "empty-dataset",
            Error::Shape(_) => "shape-mismatch",
            Error::InvalidValue { .. } => "invalid-value",
            Error::InvalidRatios(_) => "invalid-ratios",
            Error::EmptyClass { .. } => "empty-class",
            Error::DegenerateWeights => "degenerate-weights",
            Error::DegenerateMarginal { .. } => "degenerate-marginal",
            Error::ImaginaryEta { .. } => "imaginary-eta",
            Error::SingleGroup(_) => "single-group",
            Error::EmptyCell { .. } => "empty-cell",
            Error::UndefinedPp { .. } => "undefined-pp",
            Error::GroupMissing(_) => "group-missing",
            Error::InvalidDelta(_) => "invalid-delta",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SdpNonConverged { .. } => "sdp-nonconverged",
            Error::Infeasible(_) => "infeasible",
            Error::ExtractionFailed { .. } => "extraction-failed",
            Error::UnsplittableClass { .. } => "unsplittable-class",
            Error::Diverged { .. } => "diverged",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
