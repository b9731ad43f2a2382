use thiserror::Error;

/// Errors raised by the field-theory operations.
///
/// Non-regularity and incompatibility are reported as results by the check
/// functions; they only become errors when an operation needs them to hold.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value while evaluating {what} (component {index})")]
    Evaluation { what: String, index: usize },

    #[error("Lagrangian is not regular: det(H) = {det:e}, cond(H) = {cond:e}")]
    Regularity { det: f64, cond: f64 },

    #[error("constraint rank {rank} < {expected}: {detail}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        detail: String,
    },

    #[error("point is off the constraint set: |phi| = {values:?} exceeds {tolerance:e}")]
    OffConstraint { values: Vec<f64>, tolerance: f64 },

    #[error("compatibility condition fails{}: det(zeta(phi)) = {det:e}", point_suffix(*.point))]
    Incompatible { det: f64, point: Option<usize> },

    #[error("internal consistency check `{check}` failed: residual {residual:e}")]
    Consistency { check: String, residual: f64 },

    #[error("singular linear system in {block}")]
    SingularSystem { block: String },

    #[error("inconsistent linear system: least-squares residual {residual:e}")]
    InconsistentSystem { residual: f64 },

    #[error("constraint drift {value:e} exceeds ceiling {ceiling:e} at step {step}")]
    Drift { step: usize, value: f64, ceiling: f64 },

    #[error("non-finite state at step {step}")]
    Instability { step: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn point_suffix(point: Option<usize>) -> String {
    match point {
        Some(j) => format!(" at grid point {j}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
