use thiserror::Error;

/// Errors raised by the numerical operators.
#[derive(Debug, Error)]
pub enum KweError {
    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("locality violation: tail exponents alpha={alpha}, beta={beta} outside {window}")]
    Locality {
        alpha: f64,
        beta: f64,
        window: &'static str,
    },

    #[error("divergent weighted norm: {0}")]
    DivergentNorm(String),

    #[error("spectrum is not positive on the fit window")]
    NonPositiveSpectrum,

    #[error("kz constant came out non-positive ({0}); quadrature is misconfigured")]
    NonPositiveKz(f64),

    #[error("ambiguous winding: phase step {step:.3} rad exceeds pi/2 at sample {index}")]
    AmbiguousWinding { step: f64, index: usize },

    #[error("augmented system is rank deficient (pivot {0:e}); widen the window")]
    RankDeficient(f64),

    #[error("no contraction: step norms failed to decrease for {0} consecutive iterations")]
    NoContraction(usize),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("time step underflow at t={t}: dt={dt:e}")]
    DtUnderflow { t: f64, dt: f64 },

    #[error("forcing violates the smallness hypothesis: norm {norm} > eps*j_inf = {bound}")]
    ForcingTooLarge { norm: f64, bound: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, KweError>;
