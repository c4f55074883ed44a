//! EM calibration of the drift coefficients θ.
//!
//! Every θ_i enters the discretised transition linearly, so with the smoothed
//! trajectory held fixed the M-step is a weighted linear least-squares
//! problem. θ_Vl also appears in the aerosol-fraction equation through V̇_l,
//! so the five coefficients are solved jointly rather than one at a time.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TwinError};
use crate::estimation::ekf::ekf_run;
use crate::estimation::rts::rts_smooth;
use crate::estimation::statespace::TwinStateSpace;
use crate::estimation::filter_data;
use crate::physics::{StateBounds, TwinModel};
use crate::types::{InputVector, StateVector, ThetaParams, TimeSeriesRecord, STATE_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub max_iterations: usize,
    /// Stop when ‖θ⁽ⁱ⁺¹⁾ − θ⁽ⁱ⁾‖ falls below this (1/s).
    pub tolerance: f64,
    pub dt: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: 1e-8, dt: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    /// θ⁽⁰⁾, θ⁽¹⁾, …; one more entry than iterations run.
    pub theta_history: Vec<ThetaParams>,
    /// M-step objective at the incoming θ, per iteration.
    pub objective_before: Vec<f64>,
    /// M-step objective at the minimiser, per iteration.
    pub objective_after: Vec<f64>,
    pub converged: bool,
}

impl CalibrationReport {
    pub fn theta(&self) -> ThetaParams {
        *self.theta_history.last().expect("history holds the initial θ")
    }

    pub fn iterations(&self) -> usize {
        self.objective_after.len()
    }

    /// True when every M-step did not increase its objective beyond `slack`.
    pub fn m_steps_monotone(&self, slack: f64) -> bool {
        self.objective_before.iter().zip(&self.objective_after).all(|(b, a)| *a <= *b + slack)
    }

    /// Plain-text report, one `key = value` per line.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let th = self.theta();
        for (k, v) in ThetaParams::KEYS.iter().zip(th.to_array()) {
            let _ = writeln!(s, "{k} = {v:e} 1/s");
        }
        let _ = writeln!(s, "# iterations = {}", self.iterations());
        let _ = writeln!(s, "# converged = {}", self.converged);
        for (i, (b, a)) in self.objective_before.iter().zip(&self.objective_after).enumerate() {
            let t = self.theta_history[i + 1].to_array();
            let _ = writeln!(
                s,
                "# iter {} objective {b:e} -> {a:e} theta [{:e}, {:e}, {:e}, {:e}, {:e}]",
                i + 1,
                t[0],
                t[1],
                t[2],
                t[3],
                t[4]
            );
        }
        s
    }
}

/// Per-step regression data: residual without θ and the θ design matrix.
struct Regression {
    r: Vec<[f64; STATE_DIM]>,
    b: Vec<[[f64; STATE_DIM]; STATE_DIM]>,
    weights: [f64; STATE_DIM],
    dt: f64,
}

impl Regression {
    fn build(model: &TwinModel, states: &[StateVector], inputs: &[InputVector], dt: f64) -> Result<Self> {
        let zero = ThetaParams::zero();
        let v_v = model.params.geometry.v_vial;
        let var = model.params.noise.process_covariance();
        let weights = var.map(|v| 1.0 / (v * dt));
        let mut r = Vec::with_capacity(states.len());
        let mut b = Vec::with_capacity(states.len());
        for j in 0..states.len().saturating_sub(1) {
            let x = &states[j];
            let f0 = model.transition_f(x, &inputs[j], &zero)?.to_array();
            let a = x.to_array();
            let a1 = states[j + 1].to_array();
            let mut rj = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                rj[i] = a1[i] - a[i] - dt * f0[i];
            }
            let mut bj = [[0.0; STATE_DIM]; STATE_DIM];
            for i in 0..STATE_DIM {
                bj[i][i] = a[i];
            }
            bj[StateVector::PHI_A][StateVector::V_L] = x.phi_a * x.v_l / (v_v - x.v_l);
            r.push(rj);
            b.push(bj);
        }
        Ok(Self { r, b, weights, dt })
    }

    fn objective(&self, theta: &ThetaParams) -> f64 {
        let t = theta.to_array();
        let mut acc = 0.0;
        for (rj, bj) in self.r.iter().zip(&self.b) {
            for i in 0..STATE_DIM {
                let pred: f64 = (0..STATE_DIM).map(|c| bj[i][c] * t[c]).sum();
                let e = rj[i] - self.dt * pred;
                acc += self.weights[i] * e * e;
            }
        }
        acc
    }

    fn solve(&self) -> ThetaParams {
        let mut a = DMatrix::<f64>::zeros(STATE_DIM, STATE_DIM);
        let mut rhs = DVector::<f64>::zeros(STATE_DIM);
        for (rj, bj) in self.r.iter().zip(&self.b) {
            for i in 0..STATE_DIM {
                let w = self.weights[i];
                for c in 0..STATE_DIM {
                    if bj[i][c] == 0.0 {
                        continue;
                    }
                    rhs[c] += self.dt * w * bj[i][c] * rj[i];
                    for c2 in 0..STATE_DIM {
                        a[(c, c2)] += self.dt * self.dt * w * bj[i][c] * bj[i][c2];
                    }
                }
            }
        }
        // Coefficients whose state never leaves zero are unidentifiable.
        let active: Vec<usize> = (0..STATE_DIM).filter(|&c| a[(c, c)] > 0.0).collect();
        let mut theta = [0.0; STATE_DIM];
        if active.is_empty() {
            return ThetaParams::from_array(theta);
        }
        let m = active.len();
        let scale: Vec<f64> = active.iter().map(|&c| 1.0 / a[(c, c)].sqrt()).collect();
        let sub = DMatrix::from_fn(m, m, |i, j| a[(active[i], active[j])] * scale[i] * scale[j]);
        let sub_rhs = DVector::from_fn(m, |i, _| rhs[active[i]] * scale[i]);
        if !sub.iter().chain(sub_rhs.iter()).all(|v| v.is_finite()) {
            return ThetaParams::from_array([f64::NAN; STATE_DIM]);
        }
        let svd = sub.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let sol = svd.solve(&sub_rhs, tol).unwrap_or_else(|_| DVector::zeros(m));
        for (i, &c) in active.iter().enumerate() {
            theta[c] = sol[i] * scale[i];
        }
        ThetaParams::from_array(theta)
    }
}

/// Alternates smoothing under the current θ with the closed-form M-step.
/// The prior `(x0, p0)` stays fixed across iterations.
pub fn em_calibrate(
    model: &TwinModel,
    records: &[TimeSeriesRecord],
    x0: &StateVector,
    p0: &DMatrix<f64>,
    theta0: ThetaParams,
    settings: &EmSettings,
) -> Result<CalibrationReport> {
    if records.len() < 2 {
        return Err(TwinError::InvalidInput("calibration needs at least two records".into()));
    }
    if !model.params.noise.process_covariance().iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(TwinError::InvalidInput("calibration needs a positive process-noise covariance".into()));
    }
    let data = filter_data(records);
    let inputs: Vec<InputVector> = records.iter().map(|r| r.u).collect();
    let bounds = StateBounds::filter(&model.params);
    let mut report = CalibrationReport {
        theta_history: vec![theta0],
        objective_before: Vec::new(),
        objective_after: Vec::new(),
        converged: false,
    };
    let mut theta = theta0;
    for iteration in 1..=settings.max_iterations {
        let wrap = |e: TwinError| TwinError::Calibration { iteration, source: Box::new(e) };
        let ss = TwinStateSpace::new(model, theta, settings.dt);
        let filt = ekf_run(&ss, &data, &x0.to_dvector(), p0).map_err(wrap)?;
        let smooth = rts_smooth(&filt).map_err(wrap)?;
        let states: Vec<StateVector> = (0..smooth.len())
            .map(|k| bounds.clamp(&StateVector::from_slice(smooth.mean(k).as_slice())).0)
            .collect();
        let reg = Regression::build(model, &states, &inputs, settings.dt).map_err(wrap)?;
        let next = reg.solve();
        if !next.is_finite() {
            return Err(wrap(TwinError::InvalidInput("non-finite θ from the M-step".into())));
        }
        report.objective_before.push(reg.objective(&theta));
        report.objective_after.push(reg.objective(&next));
        let delta = theta.to_array().iter().zip(next.to_array()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        theta = next;
        report.theta_history.push(theta);
        if delta < settings.tolerance {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}
