//! Innovation-based anomaly scoring.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::error::{Result, TwinError};
use crate::estimation::ekf::FilterStep;
use crate::linalg::spd_inverse;

pub const FLAG_PROBABILITY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyScore {
    pub nis: f64,
    pub dof: usize,
    pub flag: bool,
}

/// χ² quantile at [`FLAG_PROBABILITY`] for `dof` degrees of freedom.
pub fn nis_threshold(dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    // The library quantile is only accurate to ~1e-5; polish with Newton.
    let mut q = dist.inverse_cdf(FLAG_PROBABILITY);
    for _ in 0..4 {
        q -= (dist.cdf(q) - FLAG_PROBABILITY) / dist.pdf(q);
    }
    q
}

pub fn score(innovation: &DVector<f64>, s: &DMatrix<f64>) -> Result<AnomalyScore> {
    let dof = innovation.len();
    if dof == 0 {
        return Ok(AnomalyScore { nis: 0.0, dof, flag: false });
    }
    let s_inv = spd_inverse(s).ok_or(TwinError::Conditioning { step: 0, what: "innovation covariance" })?;
    let nis = innovation.dot(&(&s_inv * innovation)).max(0.0);
    Ok(AnomalyScore { nis, dof, flag: nis > nis_threshold(dof) })
}

/// Score of a completed filter step.
pub fn anomaly_score(step: &FilterStep) -> Result<AnomalyScore> {
    score(&step.innovation, &step.s).map_err(|e| match e {
        TwinError::Conditioning { what, .. } => TwinError::Conditioning { step: step.k, what },
        other => other,
    })
}

/// Raises an alert after `needed` consecutive flagged steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Debouncer {
    pub needed: usize,
    run: usize,
}

impl Debouncer {
    pub fn new(needed: usize) -> Self {
        Self { needed, run: 0 }
    }

    /// Feeds one flag; returns true exactly when the run reaches `needed`.
    pub fn push(&mut self, flag: bool) -> bool {
        if flag {
            self.run += 1;
            self.run == self.needed
        } else {
            self.run = 0;
            false
        }
    }

    pub fn run_length(&self) -> usize {
        self.run
    }
}
