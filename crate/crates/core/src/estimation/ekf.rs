//! Extended Kalman filter with Joseph-form update and missing-output masking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TwinError};
use crate::estimation::statespace::{Scaling, StateSpaceModel};
use crate::linalg::{spd_inverse, symmetrize};
use crate::types::{GaussianBelief, StateVector, STATE_DIM};

/// One filter step, stored in normalised coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub k: usize,
    pub x_pred: DVector<f64>,
    pub p_pred: DMatrix<f64>,
    pub x_upd: DVector<f64>,
    pub p_upd: DMatrix<f64>,
    /// Jacobian that carried step `k − 1` to `k`; `None` at `k = 0`.
    pub transition: Option<DMatrix<f64>>,
    /// Indices of the outputs observed at this step.
    pub observed: Vec<usize>,
    /// Innovation divided by the output scale, observed rows only.
    pub innovation: DVector<f64>,
    /// Innovation covariance in the same units.
    pub s: DMatrix<f64>,
    /// Normalised innovation squared.
    pub nis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub scaling: Scaling,
    pub steps: Vec<FilterStep>,
}

impl FilterResult {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mean(&self, k: usize) -> DVector<f64> {
        self.scaling.to_si(&self.steps[k].x_upd)
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        self.scaling.cov_to_si(&self.steps[k].p_upd)
    }

    pub fn predicted_mean(&self, k: usize) -> DVector<f64> {
        self.scaling.to_si(&self.steps[k].x_pred)
    }

    pub fn predicted_covariance(&self, k: usize) -> DMatrix<f64> {
        self.scaling.cov_to_si(&self.steps[k].p_pred)
    }

    /// Updated belief at step `k` for the five-state printer model.
    pub fn belief(&self, k: usize) -> GaussianBelief {
        debug_assert_eq!(self.scaling.scale.len(), STATE_DIM);
        GaussianBelief::new(StateVector::from_slice(self.mean(k).as_slice()), self.covariance(k))
    }
}

/// Filter state detached from its model, in normalised coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfSnapshot<I> {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub last_input: Option<I>,
    pub k: usize,
}

/// Incremental filter; `ekf_run` is a loop over [`Ekf::step`].
#[derive(Debug, Clone)]
pub struct Ekf<'m, M: StateSpaceModel> {
    model: &'m M,
    scaling: Scaling,
    out_scale: DVector<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    x: DVector<f64>,
    p: DMatrix<f64>,
    last_input: Option<M::Input>,
    k: usize,
}

impl<'m, M: StateSpaceModel> Ekf<'m, M> {
    /// Starts from the prior `(x0, p0)` given in SI; the first call to
    /// [`Ekf::step`] updates this prior with the first measurement.
    pub fn new(model: &'m M, x0: &DVector<f64>, p0: &DMatrix<f64>) -> Self {
        let scaling = Scaling::new(model.state_scale());
        let out_scale = model.output_scale();
        let q = scaling.cov_to_normalized(&model.process_noise());
        let r = Scaling::new(out_scale.clone()).cov_to_normalized(&model.measurement_noise());
        let mut p = scaling.cov_to_normalized(p0);
        symmetrize(&mut p);
        Self { model, x: scaling.to_normalized(x0), p, scaling, out_scale, q, r, last_input: None, k: 0 }
    }

    /// Continues from a saved [`EkfSnapshot`], possibly with a different
    /// model instance (e.g. after a θ swap).
    pub fn resume(model: &'m M, snap: &EkfSnapshot<M::Input>) -> Self {
        let mut ekf = Self::new(model, &DVector::zeros(snap.x.len()), &DMatrix::zeros(snap.x.len(), snap.x.len()));
        ekf.x = snap.x.clone();
        ekf.p = snap.p.clone();
        ekf.last_input = snap.last_input.clone();
        ekf.k = snap.k;
        ekf
    }

    pub fn snapshot(&self) -> EkfSnapshot<M::Input> {
        EkfSnapshot { x: self.x.clone(), p: self.p.clone(), last_input: self.last_input.clone(), k: self.k }
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn mean_si(&self) -> DVector<f64> {
        self.scaling.to_si(&self.x)
    }

    pub fn covariance_si(&self) -> DMatrix<f64> {
        self.scaling.cov_to_si(&self.p)
    }

    pub fn last_input(&self) -> Option<&M::Input> {
        self.last_input.as_ref()
    }

    /// Predicts from the previous step (if any) with the previous input,
    /// then updates with `y` observed under input `u`.
    pub fn step(&mut self, u: &M::Input, y: &[Option<f64>]) -> Result<FilterStep> {
        let k = self.k;
        let (x_pred, p_pred, transition) = match &self.last_input {
            None => (self.x.clone(), self.p.clone(), None),
            Some(u_prev) => {
                let (next, f) = self.model.predict(&self.scaling.to_si(&self.x), u_prev)?;
                let f = self.scaling.jac_to_normalized(&f);
                let mut p = &f * &self.p * f.transpose() + &self.q;
                symmetrize(&mut p);
                (self.scaling.to_normalized(&next), p, Some(f))
            }
        };

        let observed: Vec<usize> = (0..y.len().min(self.model.output_dim())).filter(|&i| y[i].is_some()).collect();
        let (x_upd, p_upd, innovation, s, nis) = if observed.is_empty() {
            (x_pred.clone(), p_pred.clone(), DVector::zeros(0), DMatrix::zeros(0, 0), 0.0)
        } else {
            let (y_hat, h_full) = self.model.observe(&self.scaling.to_si(&x_pred), u)?;
            let m = observed.len();
            let n = x_pred.len();
            let mut h = DMatrix::zeros(m, n);
            let mut nu = DVector::zeros(m);
            let mut r = DMatrix::zeros(m, m);
            for (row, &i) in observed.iter().enumerate() {
                let e = self.out_scale[i];
                for j in 0..n {
                    h[(row, j)] = h_full[(i, j)] * self.scaling.scale[j] / e;
                }
                nu[row] = (y[i].unwrap_or(0.0) - y_hat[i]) / e;
                for (col, &jdx) in observed.iter().enumerate() {
                    r[(row, col)] = self.r[(i, jdx)];
                }
            }
            let pht = &p_pred * h.transpose();
            let mut s = &h * &pht + &r;
            symmetrize(&mut s);
            let s_inv = spd_inverse(&s).ok_or(TwinError::Conditioning { step: k, what: "innovation covariance" })?;
            let gain = &pht * &s_inv;
            let x_upd = self.model.project_normalized(&self.scaling, &x_pred + &gain * &nu);
            let ikh = DMatrix::identity(n, n) - &gain * &h;
            let mut p = &ikh * &p_pred * ikh.transpose() + &gain * &r * gain.transpose();
            symmetrize(&mut p);
            let nis = nu.dot(&(&s_inv * &nu));
            (x_upd, p, nu, s, nis)
        };

        self.x = x_upd.clone();
        self.p = p_upd.clone();
        self.last_input = Some(u.clone());
        self.k += 1;
        Ok(FilterStep { k, x_pred, p_pred, x_upd, p_upd, transition, observed, innovation, s, nis })
    }
}

trait ProjectNormalized {
    fn project_normalized(&self, scaling: &Scaling, z: DVector<f64>) -> DVector<f64>;
}

impl<M: StateSpaceModel> ProjectNormalized for M {
    fn project_normalized(&self, scaling: &Scaling, z: DVector<f64>) -> DVector<f64> {
        scaling.to_normalized(&self.project(scaling.to_si(&z)))
    }
}

/// Runs the filter over `(u_k, y_k)` pairs.
pub fn ekf_run<M: StateSpaceModel>(
    model: &M,
    data: &[(M::Input, Vec<Option<f64>>)],
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
) -> Result<FilterResult> {
    let mut ekf = Ekf::new(model, x0, p0);
    let mut steps = Vec::with_capacity(data.len());
    for (u, y) in data {
        steps.push(ekf.step(u, y)?);
    }
    Ok(FilterResult { scaling: ekf.scaling.clone(), steps })
}
