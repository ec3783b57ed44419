use thiserror::Error;

/// Errors raised by the solver, the integrators and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no soliton regime: b²σ² = {y} must be positive")]
    NoSolitonRegime { y: f64 },

    #[error("(α, Γ) fixed point did not converge in {iterations} iterations (last change {last_change:e})")]
    FixedPointNotConverged { iterations: usize, last_change: f64 },

    #[error("|α|² = {alpha_sq} reached 1; Γ normalization is degenerate")]
    DegenerateAlpha { alpha_sq: f64 },

    #[error("no self-consistent σ in [{lo}, {hi}]")]
    NoSelfConsistentSigma { lo: f64, hi: f64 },

    #[error("σ is undetermined: the Ω₁ constraint holds identically (θ = 0, η₁ = η₂); supply σ explicitly")]
    UndeterminedSigma,

    #[error("no self-consistent θ in (0, π/2) for σ = {sigma}")]
    NoSelfConsistentTheta { sigma: f64 },

    #[error("solution fails identity {identity}: residual {residual:e}")]
    InconsistentSolution { identity: String, residual: f64 },

    #[error("Bloch norm drift {drift:e} exceeds bound {bound:e} at t = {t}")]
    BlochDrift { drift: f64, bound: f64, t: f64 },

    #[error("non-finite field value at z = {z}")]
    NonFinite { z: f64 },

    #[error(
        "no sign convention reaches tolerance {tol:e}; best summed relative residual {best:e}"
    )]
    NoCalibration { tol: f64, best: f64 },

    #[error("ambiguous {what} location at z = {z}")]
    AmbiguousExtremum { what: &'static str, z: f64 },

    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("phase undefined at index {index}: modulus {modulus:e} below mask")]
    PhaseMasked { index: usize, modulus: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
