use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mismatched spaces")]
    SpaceMismatch,

    #[error("unreachable covering radius: target {target} is below the grid resolution {step}")]
    UnreachableCoveringRadius { target: f64, step: f64 },

    #[error("outside D_F, rescale the space: R(D) = {r_cover} exceeds 1")]
    OutsideControlledDomain { r_cover: f64 },

    #[error("cover failure: grid node {node} is not interior to any W_u")]
    CoverFailure { node: usize },

    #[error("near-singular Gram matrix: lambda_min = {lambda_min:.3e} below floor {floor:.1e}")]
    NearSingularGram { lambda_min: f64, floor: f64 },

    #[error("singular sub-frame Gram for cell {cell}")]
    SingularSubGram { cell: usize },

    #[error("site count mismatch: operator has {found}, isometry has {expected}")]
    SiteMismatch { expected: usize, found: usize },

    #[error("rank cutoff {cutoff} exceeds smallest cell size {cell_size}")]
    CutoffTooLarge { cutoff: usize, cell_size: usize },

    #[error("epsilon {eps} is below the grid resolution {step}")]
    EpsBelowResolution { eps: f64, step: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}
