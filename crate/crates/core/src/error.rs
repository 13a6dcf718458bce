use thiserror::Error;

/// Errors raised across the time-frequency model, operator assembly and verification pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),
    #[error("window is identically zero")]
    Window,
    #[error("frame deficient: lower bound {lower:.3e} vs upper bound {upper:.3e}")]
    FrameDeficient { lower: f64, upper: f64 },
    #[error("solver failed: {0}")]
    Solve(String),
    #[error("nondegeneracy violated: |A| = {value:.3e} < {min:.3e}")]
    NondegeneracyViolation { value: f64, min: f64 },
    #[error("dilation {u} is not a unit modulo {len}")]
    Unit { u: i64, len: usize },
    #[error("decay fit failed: {0}")]
    Fit(String),
    #[error("operator is singular or ill-conditioned (condition estimate {cond:.3e})")]
    SingularOperator { cond: f64 },
    #[error("operator not in class: s_fit {s_fit:.3} below threshold {threshold:.3}")]
    NotInClass { s_fit: f64, threshold: f64 },
    #[error("size limit exceeded: {0}")]
    Size(String),
}

pub type Result<T> = std::result::Result<T, Error>;
