//! Initial fit, EKF, RTS smoother, EM calibration, forecasting and anomaly
//! scoring.

pub mod anomaly;
pub mod ekf;
pub mod em;
pub mod forecast;
pub mod init;
pub mod rts;
pub mod statespace;

pub use anomaly::{anomaly_score, nis_threshold, AnomalyScore, Debouncer};
pub use ekf::{ekf_run, Ekf, EkfSnapshot, FilterResult, FilterStep};
pub use em::{em_calibrate, CalibrationReport, EmSettings};
pub use forecast::{forecast, ForecastStep};
pub use init::{estimate_initial_state, InitialFit};
pub use rts::{rts_smooth, SmootherResult};
pub use statespace::{Scaling, StateSpaceModel, TwinStateSpace, STATE_SCALE};

use nalgebra::DMatrix;

use crate::params::ModelParams;
use crate::types::{InputVector, TimeSeriesRecord};

/// Multiplier applied to Σ_ξ (normalised) for the default prior covariance.
pub const PRIOR_SCALE: f64 = 100.0;

/// `(u_k, y_k)` pairs in the form the filter consumes.
pub fn filter_data(records: &[TimeSeriesRecord]) -> Vec<(InputVector, Vec<Option<f64>>)> {
    records.iter().map(|r| (r.u, r.y.0.to_vec())).collect()
}

/// Default prior covariance `100·Σ_ξ` (SI).
pub fn default_prior_covariance(params: &ModelParams) -> DMatrix<f64> {
    crate::linalg::diag(&params.noise.process_covariance()) * PRIOR_SCALE
}
