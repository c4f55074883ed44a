//! Initial-state fit from the first few records.
//!
//! Deposits are pinned to zero (fresh tube and nozzle). The liquid volume
//! does not enter the output map at all, so it cannot be fitted from a short
//! window and is fixed at the configured fill level. The remaining free
//! states, droplet median and aerosol fraction, are fitted by projected
//! Gauss–Newton from several starts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TwinError};
use crate::physics::model::MIN_DROPLET_MEDIAN;
use crate::physics::TwinModel;
use crate::types::{StateVector, TimeSeriesRecord, OUTPUT_DIM};

pub const DEFAULT_WINDOW: usize = 10;
pub const MAX_ITERATIONS: usize = 200;

const FREE: [usize; 2] = [StateVector::D_A, StateVector::PHI_A];

#[derive(Debug, Clone, PartialEq)]
pub struct InitialFit {
    pub state: StateVector,
    /// Weighted sum of squared residuals at the optimum.
    pub cost: f64,
    pub iterations: usize,
}

fn residuals(model: &TwinModel, x: &StateVector, window: &[TimeSeriesRecord]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sigma = model.params.noise.sigma_w;
    let rows: usize = window.iter().map(|r| r.y.observed_count()).sum();
    let mut res = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, FREE.len());
    let mut row = 0;
    for rec in window {
        let y = model.output_g(x, &rec.u)?.to_array();
        let h = model.jacobian_h(x, &rec.u)?;
        for i in 0..OUTPUT_DIM {
            if let Some(obs) = rec.y.get(i) {
                res[row] = (obs - y[i]) / sigma[i];
                for (c, &j) in FREE.iter().enumerate() {
                    jac[(row, c)] = h[(i, j)] / sigma[i];
                }
                row += 1;
            }
        }
    }
    Ok((res, jac))
}

fn project(x: StateVector) -> StateVector {
    StateVector { d_a: x.d_a.max(MIN_DROPLET_MEDIAN), phi_a: x.phi_a.max(0.0), ..x }
}

fn gauss_newton(model: &TwinModel, start: StateVector, window: &[TimeSeriesRecord]) -> Result<(StateVector, f64, usize, bool)> {
    let mut x = project(start);
    let (mut r, mut j) = residuals(model, &x, window)?;
    let mut cost = r.norm_squared();
    for it in 1..=MAX_ITERATIONS {
        // Column scaling keeps the normal equations well conditioned across
        // the µm / 1e-7 magnitudes of the two free states.
        let col: Vec<f64> = (0..FREE.len()).map(|c| j.column(c).norm().max(f64::MIN_POSITIVE)).collect();
        let js = DMatrix::from_fn(j.nrows(), j.ncols(), |a, b| j[(a, b)] / col[b]);
        let step = js.svd(true, true).solve(&r, 1e-14).map_err(|_| TwinError::InitializationFailure {
            iterations: it,
            best: Box::new(x),
        })?;
        let mut trial = x;
        for (c, &idx) in FREE.iter().enumerate() {
            trial = trial.with(idx, trial.get(idx) + step[c] / col[c]);
        }
        let mut trial = project(trial);
        let (mut tr, mut tj) = residuals(model, &trial, window)?;
        let mut tcost = tr.norm_squared();
        let mut damping = 1.0;
        while tcost > cost && damping > 1e-6 {
            damping *= 0.5;
            let mut t = x;
            for (c, &idx) in FREE.iter().enumerate() {
                t = t.with(idx, t.get(idx) + damping * step[c] / col[c]);
            }
            trial = project(t);
            (tr, tj) = residuals(model, &trial, window)?;
            tcost = tr.norm_squared();
        }
        let stalled = FREE.iter().all(|&i| {
            let a = x.get(i);
            let b = trial.get(i);
            (a - b).abs() <= 1e-13 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
        });
        if tcost <= cost {
            x = trial;
            r = tr;
            j = tj;
            let improvement = cost - tcost;
            cost = tcost;
            if stalled || improvement <= 1e-14 * cost.max(1e-300) {
                return Ok((x, cost, it, true));
            }
        } else {
            return Ok((x, cost, it, true));
        }
    }
    Ok((x, cost, MAX_ITERATIONS, false))
}

/// Best constrained fit over the window.
pub fn estimate_initial_state(model: &TwinModel, window: &[TimeSeriesRecord]) -> Result<InitialFit> {
    if window.len() < 2 {
        return Err(TwinError::InvalidInput("initial fit needs at least two records".into()));
    }
    if window.iter().all(|r| r.y.observed_count() == 0) {
        return Err(TwinError::InvalidInput("initial-fit window has no observations".into()));
    }
    let v_l = model.params.process.initial_fill;
    let mut best: Option<InitialFit> = None;
    let mut last = StateVector::default();
    let mut any_converged = false;
    for d in [1.0e-6, 2.0e-6, 4.0e-6, 8.0e-6] {
        for phi in [1.0e-7, 1.0e-6] {
            let start = StateVector::new(d, v_l, 0.0, 0.0, phi);
            let (x, cost, iterations, converged) = gauss_newton(model, start, window)?;
            last = x;
            if !converged {
                continue;
            }
            any_converged = true;
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(InitialFit { state: x, cost, iterations });
            }
        }
    }
    match best {
        Some(b) if any_converged => Ok(b),
        _ => Err(TwinError::InitializationFailure { iterations: MAX_ITERATIONS, best: Box::new(last) }),
    }
}
