use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}` (valid: unlink, unknot, hopf_link)")]
    UnknownPreset(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exceptional point at k = {k:.6}: {detail}")]
    ExceptionalPoint { k: f64, detail: String },

    #[error("bands inseparable: minimum gap {min_gap:.3e} below tolerance {tolerance:.1e}")]
    BandsInseparable { min_gap: f64, tolerance: f64 },

    #[error("grid refinement did not converge: {0}")]
    RefinementFailed(String),

    #[error("grid too coarse: overlap magnitude {overlap:.3e} at link {link}")]
    GridTooCoarse { overlap: f64, link: usize },

    #[error("step size {dt:.3e} too large, use dt <= {suggested:.3e}")]
    StepTooLarge { dt: f64, suggested: f64 },

    #[error("no dominant band: imaginary gap {gap:.3e}")]
    NoDominantBand { gap: f64 },

    #[error("k unidentifiable: model spread {spread:.3e} below noise floor {floor:.3e}")]
    Unidentifiable { spread: f64, floor: f64 },

    #[error("dilation infeasible: increase eta0 (margin violated at t = {t:.6}, min eig(M - I) = {min_eig:.3e})")]
    DilationInfeasible { t: f64, min_eig: f64 },

    #[error("dilation infeasible: no eta0 below {cap} keeps the margin")]
    Eta0NotFound { cap: f64 },

    #[error("numerical consistency: {0}")]
    NumericalConsistency(String),

    #[error("operator not in the eight-element span (residual {0:.3e})")]
    NotDecomposable(f64),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure comes from the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::UnknownPreset(_) | Error::InvalidInput(_) | Error::Io(_) | Error::Json(_)
        )
    }
}
