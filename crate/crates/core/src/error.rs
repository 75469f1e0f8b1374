use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not unimodular: det = {det}")]
    NonUnimodular { det: f64 },

    #[error("Gram-Schmidt breakdown at column {column}: relative pivot {pivot:e}")]
    NumericalBreakdown { column: usize, pivot: f64 },

    #[error("ill-conditioned spectrum: {0}")]
    IllConditioned(String),

    #[error("chamber element is zero")]
    ZeroElement,

    #[error("frame adaptation failed: elliptic residual {residual:e}")]
    FrameAdaptationFailed { residual: f64 },

    #[error("element does not centralize H: commutator norm {residual:e}")]
    NotInCentralizer { residual: f64 },

    #[error("omega limit not reached within time {time}")]
    NotConverged { time: f64 },

    #[error("no admissible chain time found below {cap}")]
    SearchExhausted { cap: f64 },

    #[error("point is not on a fixed component (distance {distance:e})")]
    NotOnComponent { distance: f64 },

    #[error("Borel metric formulas disagree: eigenspace sum {eigenspace}, bracket form {bracket}")]
    DisagreementBug { eigenspace: f64, bracket: f64 },

    #[error("rate bound violated on {bundle} vector {index} at t = {time}: {observed:e} > {bound:e}")]
    BoundViolated {
        bundle: String,
        index: usize,
        time: f64,
        observed: f64,
        bound: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
