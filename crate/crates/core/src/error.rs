use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("adaptive quadrature did not converge (achieved error estimate {achieved:.3e})")]
    Quadrature { achieved: f64 },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("unsupported quadrature degree {degree}; supported range is {min}..={max}")]
    UnsupportedDegree { degree: usize, min: usize, max: usize },

    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),

    #[error("non-conforming mesh: edge ({a}, {b}) is shared by {count} triangles")]
    NonConforming { a: usize, b: usize, count: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("singular pivot at row {row}")]
    SingularPivot { row: usize },

    #[error("Newton iteration did not converge at p = {p}: {reason} (residual {residual:.3e} after {iterations} iterations)")]
    NonConvergence { p: f64, reason: String, residual: f64, iterations: usize },

    #[error("solver failed on level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
