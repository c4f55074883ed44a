//! Rauch–Tung–Striebel fixed-interval smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TwinError};
use crate::estimation::ekf::FilterResult;
use crate::estimation::statespace::Scaling;
use crate::linalg::{spd_inverse, symmetrize};
use crate::types::{GaussianBelief, StateVector};

/// Smoothed beliefs in normalised coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult {
    pub scaling: Scaling,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Smoother gains `J_k`; the last step has none.
    pub gains: Vec<DMatrix<f64>>,
}

impl SmootherResult {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn mean(&self, k: usize) -> DVector<f64> {
        self.scaling.to_si(&self.means[k])
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        self.scaling.cov_to_si(&self.covariances[k])
    }

    pub fn belief(&self, k: usize) -> GaussianBelief {
        GaussianBelief::new(StateVector::from_slice(self.mean(k).as_slice()), self.covariance(k))
    }
}

pub fn rts_smooth(filter: &FilterResult) -> Result<SmootherResult> {
    let n = filter.steps.len();
    let mut means: Vec<DVector<f64>> = filter.steps.iter().map(|s| s.x_upd.clone()).collect();
    let mut covariances: Vec<DMatrix<f64>> = filter.steps.iter().map(|s| s.p_upd.clone()).collect();
    let mut gains = Vec::with_capacity(n.saturating_sub(1));
    for k in (0..n.saturating_sub(1)).rev() {
        let cur = &filter.steps[k];
        let next = &filter.steps[k + 1];
        let f = next
            .transition
            .as_ref()
            .ok_or(TwinError::Conditioning { step: k + 1, what: "missing transition Jacobian" })?;
        let p_pred_inv =
            spd_inverse(&next.p_pred).ok_or(TwinError::Conditioning { step: k + 1, what: "predicted covariance" })?;
        let j = &cur.p_upd * f.transpose() * p_pred_inv;
        let x = &cur.x_upd + &j * (&means[k + 1] - &next.x_pred);
        let mut p = &cur.p_upd + &j * (&covariances[k + 1] - &next.p_pred) * j.transpose();
        symmetrize(&mut p);
        means[k] = x;
        covariances[k] = p;
        gains.push(j);
    }
    gains.reverse();
    Ok(SmootherResult { scaling: filter.scaling.clone(), means, covariances, gains })
}
