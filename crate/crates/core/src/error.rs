use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface specification: {0}")]
    InvalidSpec(String),

    #[error("point is off the surface (residual {residual:.3e})")]
    OffSurface { residual: f64 },

    #[error("degenerate frame: Gram-Schmidt pivot {pivot:.3e}")]
    DegenerateFrame { pivot: f64 },

    #[error("invalid index tuple: {0}")]
    InvalidIndex(String),

    #[error("invalid Newton order {order} for dimension {dim}: {reason}")]
    InvalidOrder {
        order: usize,
        dim: usize,
        reason: &'static str,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate element {element}: measure {measure:.3e}")]
    DegenerateElement { element: usize, measure: f64 },

    #[error("L_r is not elliptic: margin {margin:.6e} at {point:?}")]
    NotElliptic { point: Vec<f64>, margin: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {:.3e})",
        residuals.iter().cloned().fold(0.0_f64, f64::max))]
    NotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("mass matrix is not symmetric positive definite: {0}")]
    InvalidMass(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("failed to write report to {}: {source}", path.display())]
    ReportWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse report: {0}")]
    ReportParse(String),
}

/// Process exit status for a run that ends in `error`: 3 ellipticity, 4 non-convergence,
/// 5 I/O, 1 anything else (bad input).
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::NotElliptic { .. } => 3,
        Error::NotConverged { .. } => 4,
        Error::ReportWrite { .. } | Error::ReportParse(_) => 5,
        _ => 1,
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        exit_code(self)
    }
}
