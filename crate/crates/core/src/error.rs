use thiserror::Error;

use crate::types::StateVector;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("unknown unit tag `{0}`")]
    UnknownUnit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("transport undefined: total gas flow is zero")]
    UndefinedTransport,

    #[error("carrier tube blocked (deposition {dr:e} m >= radius {radius:e} m)")]
    BlockedTube { dr: f64, radius: f64 },

    #[error("nozzle clogged (deposition {dr:e} m >= radius {radius:e} m)")]
    CloggedNozzle { dr: f64, radius: f64 },

    #[error("vial headspace degenerate (liquid {v_l:e} m3 >= vial {v_v:e} m3)")]
    DegenerateHeadspace { v_l: f64, v_v: f64 },

    #[error("non-finite finite-difference derivative at ({row}, {col})")]
    NumericalDifferentiation { row: usize, col: usize },

    #[error("ill-conditioned {what} at step {step}")]
    Conditioning { step: usize, what: &'static str },

    #[error("initial-state fit did not converge in {iterations} iterations")]
    InitializationFailure { iterations: usize, best: Box<StateVector> },

    #[error("calibration failed in EM iteration {iteration}: {source}")]
    Calibration {
        iteration: usize,
        #[source]
        source: Box<TwinError>,
    },

    #[error("{path}:{line}: {message}")]
    Config { path: String, line: usize, message: String },

    #[error("table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TwinError> = std::result::Result<T, E>;
