use thiserror::Error;

/// Errors produced by the analytic models, the solver and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or index outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A transition matrix failed the row-sum check.
    #[error("matrix is not row-stochastic: {} row(s) deviate, worst {worst:.3e}", rows.len())]
    NotStochastic { rows: Vec<(usize, f64)>, worst: f64 },

    #[error("stationary solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The equilibrium search found no fixed point; the sampled best-response
    /// curve is attached as `(q, BR(q))` pairs.
    #[error("no symmetric equilibrium found on the sampled best-response curve ({} samples)", curve.len())]
    NoFixedPoint { curve: Vec<(f64, f64)> },

    /// Two objects that must describe the same model do not.
    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    #[error("invalid experiment: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
