//! Aerosol-jet printer digital twin: state-space model, estimation stack,
//! profile analysis and a seeded virtual printer.
//!
//! All quantities are SI internally. Display units (µm, mL, sccm, mA) appear
//! only in files, tables and on the wire; see [`units`].

// `!(x > 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod params;
pub mod physics;
pub mod profile;
pub mod simulator;
pub mod table;
pub mod types;
pub mod units;

pub use error::{Result, TwinError};
pub use params::ModelParams;
pub use types::{
    GaussianBelief, InputVector, Observation, OutputVector, StateVector, ThetaParams, TimeSeriesRecord,
};
