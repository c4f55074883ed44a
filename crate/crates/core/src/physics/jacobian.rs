//! Central finite-difference Jacobians of f and g with respect to the state.

use nalgebra::DMatrix;

use crate::error::{Result, TwinError};
use crate::physics::model::{output_g, InputKernel, Modifiers, TwinModel};
use crate::types::{InputVector, StateVector, ThetaParams, OUTPUT_DIM, STATE_DIM};

/// Default per-component step: `max(1e-5·|x_i|, 1e-12)`.
pub fn fd_step(x: f64) -> f64 {
    (1e-5 * x.abs()).max(1e-12)
}

/// Generic central-difference Jacobian with caller-chosen steps.
pub fn central_difference<const M: usize>(
    x: &StateVector,
    step: impl Fn(f64) -> f64,
    mut eval: impl FnMut(&StateVector) -> Result<[f64; M]>,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(M, STATE_DIM);
    for j in 0..STATE_DIM {
        let xj = x.get(j);
        let h = step(xj);
        let plus = eval(&x.with(j, xj + h))?;
        let minus = eval(&x.with(j, xj - h))?;
        let span = (xj + h) - (xj - h);
        for i in 0..M {
            let v = (plus[i] - minus[i]) / span;
            if !v.is_finite() {
                return Err(TwinError::NumericalDifferentiation { row: i, col: j });
            }
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

impl TwinModel {
    /// ∂f/∂x at `(x, u)`.
    pub fn jacobian_f(&self, x: &StateVector, u: &InputVector, theta: &ThetaParams) -> Result<DMatrix<f64>> {
        self.jacobian_f_with(x, theta, &self.kernel(u)?)
    }

    pub fn jacobian_f_with(&self, x: &StateVector, theta: &ThetaParams, kernel: &InputKernel) -> Result<DMatrix<f64>> {
        let m = Modifiers::default();
        central_difference::<STATE_DIM>(x, fd_step, |s| Ok(self.transition_with(s, theta, kernel, &m)?.to_array()))
    }

    /// Discrete transition Jacobian `I + Δt·∂f/∂x`.
    pub fn jacobian_transition(
        &self,
        x: &StateVector,
        u: &InputVector,
        theta: &ThetaParams,
        dt: f64,
    ) -> Result<DMatrix<f64>> {
        let j = self.jacobian_f(x, u, theta)?;
        Ok(DMatrix::identity(STATE_DIM, STATE_DIM) + j * dt)
    }

    /// ∂g/∂x at `(x, u)`.
    pub fn jacobian_h(&self, x: &StateVector, u: &InputVector) -> Result<DMatrix<f64>> {
        central_difference::<OUTPUT_DIM>(x, fd_step, |s| Ok(output_g(s, u, &self.params)?.to_array()))
    }
}
