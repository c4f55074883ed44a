//! Model abstraction consumed by the filter and smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::physics::{StateBounds, TwinModel};
use crate::types::{InputVector, StateVector, ThetaParams, STATE_DIM};
use crate::units::MICROMETRE;

/// Discrete-time nonlinear state-space model, SI units throughout.
pub trait StateSpaceModel {
    type Input: Clone;

    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Nominal magnitude of each state; the filter works on `x / scale`.
    fn state_scale(&self) -> DVector<f64> {
        DVector::from_element(self.state_dim(), 1.0)
    }

    /// Nominal magnitude of each output; innovations are divided by it.
    fn output_scale(&self) -> DVector<f64> {
        DVector::from_element(self.output_dim(), 1.0)
    }

    /// Next mean and the discrete transition Jacobian at `x`.
    fn predict(&self, x: &DVector<f64>, u: &Self::Input) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// Predicted output and its Jacobian at `x`.
    fn observe(&self, x: &DVector<f64>, u: &Self::Input) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// Discrete process-noise covariance.
    fn process_noise(&self) -> DMatrix<f64>;

    /// Measurement-noise covariance.
    fn measurement_noise(&self) -> DMatrix<f64>;

    /// Maps an updated mean back into the admissible set.
    fn project(&self, x: DVector<f64>) -> DVector<f64> {
        x
    }
}

/// Nominal state magnitudes used for normalisation.
pub const STATE_SCALE: [f64; STATE_DIM] = [MICROMETRE, MICROMETRE, MICROMETRE, MICROMETRE, 1e-7];

/// The printer model bound to a θ and step size.
#[derive(Debug, Clone)]
pub struct TwinStateSpace<'a> {
    pub model: &'a TwinModel,
    pub theta: ThetaParams,
    pub dt: f64,
    pub bounds: StateBounds,
}

impl<'a> TwinStateSpace<'a> {
    pub fn new(model: &'a TwinModel, theta: ThetaParams, dt: f64) -> Self {
        Self { model, theta, dt, bounds: StateBounds::filter(&model.params) }
    }
}

impl StateSpaceModel for TwinStateSpace<'_> {
    type Input = InputVector;

    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn output_dim(&self) -> usize {
        crate::types::OUTPUT_DIM
    }

    fn state_scale(&self) -> DVector<f64> {
        DVector::from_row_slice(&STATE_SCALE)
    }

    fn output_scale(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.model.params.noise.sigma_w)
    }

    fn predict(&self, x: &DVector<f64>, u: &InputVector) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let s = StateVector::from_slice(x.as_slice());
        let kernel = self.model.kernel(u)?;
        let xdot = self.model.transition_with(&s, &self.theta, &kernel, &Default::default())?;
        let next = crate::physics::model::euler_update(&s, &xdot, self.dt, None, &self.bounds);
        let j = self.model.jacobian_f_with(&s, &self.theta, &kernel)?;
        let f = DMatrix::identity(STATE_DIM, STATE_DIM) + j * self.dt;
        Ok((next.state.to_dvector(), f))
    }

    fn observe(&self, x: &DVector<f64>, u: &InputVector) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let s = StateVector::from_slice(x.as_slice());
        let y = self.model.output_g(&s, u)?;
        let h = self.model.jacobian_h(&s, u)?;
        Ok((y.to_dvector(), h))
    }

    fn process_noise(&self) -> DMatrix<f64> {
        crate::linalg::diag(&self.model.params.noise.process_covariance()) * self.dt
    }

    fn measurement_noise(&self) -> DMatrix<f64> {
        crate::linalg::diag(&self.model.params.noise.measurement_covariance())
    }

    fn project(&self, x: DVector<f64>) -> DVector<f64> {
        let (s, _) = self.bounds.clamp(&StateVector::from_slice(x.as_slice()));
        s.to_dvector()
    }
}

/// Diagonal change of variables `z = x / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub scale: DVector<f64>,
}

impl Scaling {
    pub fn new(scale: DVector<f64>) -> Self {
        Self { scale }
    }

    pub fn to_normalized(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_div(&self.scale)
    }

    pub fn to_si(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_mul(&self.scale)
    }

    /// `D⁻¹ P D⁻¹`.
    pub fn cov_to_normalized(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = p.clone();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] /= self.scale[i] * self.scale[j];
            }
        }
        out
    }

    /// `D P D`.
    pub fn cov_to_si(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = p.clone();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] *= self.scale[i] * self.scale[j];
            }
        }
        out
    }

    /// `D⁻¹ F D` for a state-to-state Jacobian.
    pub fn jac_to_normalized(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = f.clone();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] *= self.scale[j] / self.scale[i];
            }
        }
        out
    }
}
