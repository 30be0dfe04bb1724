use thiserror::Error;

/// Errors produced by the estimation and inference pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "grid too coarse on the {axis} axis for effective bandwidth {bandwidth}: \
         need at least {required} cells (have {actual})"
    )]
    Nyquist {
        axis: char,
        bandwidth: f64,
        required: usize,
        actual: usize,
    },

    #[error("noise characteristic function underflows at frequency ({t1}, {t2})")]
    CfUnderflow { t1: f64, t2: f64 },

    #[error("inverse transform left an imaginary residue of {residue:e} (relative)")]
    ImaginaryResidue { residue: f64 },

    #[error("degenerate density estimate: maximum value {max} is not positive")]
    DegenerateDensity { max: f64 },

    #[error("density grid has not been post-processed")]
    RawGrid,

    #[error("grids have different layouts")]
    GridMismatch,

    #[error("need at least {required} points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bootstrap replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips replicate wrappers to reach the originating failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Replicate { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
