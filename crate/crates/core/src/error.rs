use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: String, reason: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("step size underflow at x={x:.6} (h={h:.3e}); {hint}")]
    StepUnderflow { x: f64, h: f64, hint: String },
    #[error("Floquet multiplier on the unit circle: |rho|={modulus:.12} (lambda={lambda})")]
    UnitCircle { modulus: f64, lambda: String },
    #[error("I - monodromy is singular (smallest singular value {0:.3e})")]
    SingularMonodromy(f64),
    #[error("Evans function vanishes on the contour (|D|={0:.3e})")]
    ZeroOnContour(f64),
    #[error("branch collision at xi={xi}: gap {gap:.3e}")]
    BranchCollision { xi: f64, gap: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("blow-up guard triggered: |u|_inf={0:.3e}")]
    BlowUp(f64),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{module}::{operation} failed ({params})")]
    Task {
        module: String,
        operation: String,
        params: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::Param { name: name.to_string(), reason: reason.into() }
    }

    pub fn in_task(self, module: &str, operation: &str, params: impl Into<String>) -> Self {
        Error::Task { module: module.into(), operation: operation.into(), params: params.into(), source: Box::new(self) }
    }
}
