//! Open-loop prediction of outputs under a proposed input schedule.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::estimation::statespace::{Scaling, StateSpaceModel, TwinStateSpace};
use crate::linalg::symmetrize;
use crate::physics::TwinModel;
use crate::types::{GaussianBelief, InputVector, OutputVector, StateVector, ThetaParams, OUTPUT_DIM, STATE_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastStep {
    /// Steps ahead of the starting belief (1-based).
    pub lead: usize,
    pub input: InputVector,
    pub state: GaussianBelief,
    pub output_mean: OutputVector,
    /// Output covariance `H P Hᵀ + Σ_w` (SI).
    pub output_covariance: DMatrix<f64>,
    /// State components clamped while propagating the mean.
    pub clamped: [bool; STATE_DIM],
}

impl ForecastStep {
    pub fn output_std(&self) -> [f64; OUTPUT_DIM] {
        std::array::from_fn(|i| self.output_covariance[(i, i)].max(0.0).sqrt())
    }
}

/// Propagates `belief` (taken at the step where `current` was applied) through
/// `schedule[0..K]`, one input per future step, with no measurement updates.
pub fn forecast(
    model: &TwinModel,
    belief: &GaussianBelief,
    theta: &ThetaParams,
    current: &InputVector,
    schedule: &[InputVector],
    dt: f64,
) -> Result<Vec<ForecastStep>> {
    let ss = TwinStateSpace::new(model, *theta, dt);
    let scaling = Scaling::new(ss.state_scale());
    let q = scaling.cov_to_normalized(&ss.process_noise());
    let r = ss.measurement_noise();
    let mut x = belief.mean;
    let mut p = scaling.cov_to_normalized(&belief.covariance);
    let mut u_prev = *current;
    let mut out = Vec::with_capacity(schedule.len());
    for (j, u) in schedule.iter().enumerate() {
        let kernel = model.kernel(&u_prev)?;
        let xdot = model.transition_with(&x, theta, &kernel, &Default::default())?;
        let step = crate::physics::model::euler_update(&x, &xdot, dt, None, &ss.bounds);
        let jac = model.jacobian_f_with(&x, theta, &kernel)?;
        let f = scaling.jac_to_normalized(&(DMatrix::identity(STATE_DIM, STATE_DIM) + jac * dt));
        p = &f * &p * f.transpose() + &q;
        symmetrize(&mut p);
        x = step.state;
        let p_si = scaling.cov_to_si(&p);
        let h = model.jacobian_h(&x, u)?;
        let mut s = &h * &p_si * h.transpose() + &r;
        symmetrize(&mut s);
        out.push(ForecastStep {
            lead: j + 1,
            input: *u,
            state: GaussianBelief::new(x, p_si),
            output_mean: model.output_g(&x, u)?,
            output_covariance: s,
            clamped: step.clamped,
        });
        u_prev = *u;
    }
    Ok(out)
}

/// Holds `u` for `horizon` steps.
pub fn constant_schedule(u: InputVector, horizon: usize) -> Vec<InputVector> {
    vec![u; horizon]
}

/// Mean state after stepping without noise; used by open-loop baselines.
pub fn open_loop_states(
    model: &TwinModel,
    x0: &StateVector,
    theta: &ThetaParams,
    inputs: &[InputVector],
    dt: f64,
) -> Result<Vec<StateVector>> {
    let bounds = crate::physics::StateBounds::filter(&model.params);
    let mut out = Vec::with_capacity(inputs.len());
    let mut x = *x0;
    for k in 0..inputs.len() {
        if k > 0 {
            x = model.step_euler(&x, &inputs[k - 1], theta, dt, &bounds)?.state;
        }
        out.push(x);
    }
    Ok(out)
}
