//! Transition field f, output map g and the Euler step of the twin.

use crate::error::{Result, TwinError};
use crate::params::ModelParams;
use crate::physics::deposition::{gravitational_deposition_from_alpha, NozzleKernel};
use crate::physics::droplet::DropletDistribution;
use crate::physics::generation::net_generation_h;
use crate::physics::quadrature::QuadratureRule;
use crate::physics::resistance::Network;
use crate::types::{InputVector, OutputVector, StateVector, ThetaParams, STATE_DIM};

use std::f64::consts::PI;

/// Smallest droplet median the state is allowed to reach (m).
pub const MIN_DROPLET_MEDIAN: f64 = 1e-9;
/// Fraction of the bore a deposit may fill before it counts as blocked.
pub const MAX_DEPOSIT_FRACTION: f64 = 0.999;
/// Lower bound on tube deposit inside the filter, as a fraction of r_T0.
pub const FILTER_TUBE_EXPANSION: f64 = 0.2;

/// Dynamics perturbations used by the fault injector; neutral by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modifiers {
    /// Multiplies the net generation rate.
    pub generation_scale: f64,
    /// Extra nozzle deposit growth (m/s).
    pub nozzle_extra_rate: f64,
}

impl Default for Modifiers {
    fn default() -> Self {
        Self { generation_scale: 1.0, nozzle_extra_rate: 0.0 }
    }
}

/// Box the state is clamped into after each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub lower: [f64; STATE_DIM],
    pub upper: [f64; STATE_DIM],
}

impl StateBounds {
    /// Physical invariants used for the simulated truth.
    pub fn truth(p: &ModelParams) -> Self {
        let g = &p.geometry;
        Self {
            lower: [MIN_DROPLET_MEDIAN, 0.0, 0.0, 0.0, 0.0],
            upper: [
                f64::INFINITY,
                g.v_vial * (1.0 - 1e-6),
                MAX_DEPOSIT_FRACTION * g.r_tube0,
                MAX_DEPOSIT_FRACTION * g.r_nozzle0,
                f64::INFINITY,
            ],
        }
    }

    /// As [`StateBounds::truth`] but tube deposit may go negative, letting
    /// the filter absorb apparent widening of the carrier path.
    pub fn filter(p: &ModelParams) -> Self {
        let mut b = Self::truth(p);
        b.lower[StateVector::DR_TUBE] = -FILTER_TUBE_EXPANSION * p.geometry.r_tube0;
        b
    }

    pub fn clamp(&self, x: &StateVector) -> (StateVector, [bool; STATE_DIM]) {
        let a = x.to_array();
        let mut out = a;
        let mut hit = [false; STATE_DIM];
        for i in 0..STATE_DIM {
            out[i] = a[i].clamp(self.lower[i], self.upper[i]);
            hit[i] = out[i] != a[i];
        }
        (StateVector::from_array(out), hit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    /// Components that were clamped back into the bounds.
    pub clamped: [bool; STATE_DIM],
}

impl StepOutcome {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|c| *c)
    }
}

/// Per-input precomputation shared by all evaluations at the same `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputKernel {
    pub u: InputVector,
    nozzle: Option<NozzleKernel>,
}

/// Parameter bundle plus its quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinModel {
    pub params: ModelParams,
    pub rule: QuadratureRule,
}

impl TwinModel {
    pub fn new(params: ModelParams) -> Self {
        let p = &params.process;
        let rule = QuadratureRule::new(p.quadrature_nodes, p.diameter_min, p.diameter_max);
        Self { params, rule }
    }

    pub fn with_nodes(params: ModelParams, nodes: usize) -> Self {
        let mut params = params;
        params.process.quadrature_nodes = nodes;
        Self::new(params)
    }

    pub fn kernel(&self, u: &InputVector) -> Result<InputKernel> {
        let q_total = u.q_c + u.q_s;
        let nozzle = if q_total > 0.0 {
            Some(NozzleKernel::new(q_total, &self.params.geometry, &self.rule)?)
        } else {
            None
        };
        Ok(InputKernel { u: *u, nozzle })
    }

    /// Physics deposition rates `(dΔr_T/dt, dΔr_N/dt)` without θ terms.
    pub fn deposition_rates(&self, x: &StateVector, kernel: &InputKernel) -> Result<(f64, f64)> {
        let g = &self.params.geometry;
        let u = &kernel.u;
        if !(x.dr_tube < g.r_tube0) {
            return Err(TwinError::BlockedTube { dr: x.dr_tube, radius: g.r_tube0 });
        }
        if !(x.dr_nozzle < g.r_nozzle0) {
            return Err(TwinError::CloggedNozzle { dr: x.dr_nozzle, radius: g.r_nozzle0 });
        }
        let q_d = x.phi_a * u.q_c;
        if q_d == 0.0 {
            return Ok((0.0, 0.0));
        }
        let nozzle = kernel.nozzle.as_ref().ok_or(TwinError::UndefinedTransport)?;
        let dist = DropletDistribution::from_median(x.d_a)?;
        let r_t = g.r_tube0 - x.dr_tube;
        let mean_velocity = u.q_c / (PI * r_t * r_t);
        let ts_per_d2 = g.rho_p * g.gravity * g.slip_correction / (18.0 * g.eta_g);
        let k = 3.0 * g.l_tube * ts_per_d2 / (8.0 * mean_velocity * r_t);
        let mut tube = 0.0;
        let mut noz = 0.0;
        for i in 0..self.rule.len() {
            let w = self.rule.weights[i] * dist.log_density(self.rule.ln_d[i]);
            let d = self.rule.d[i];
            tube += w * gravitational_deposition_from_alpha((k * d * d).cbrt().min(1.0));
            noz += w * nozzle.deposition[i];
        }
        let r_n = g.r_nozzle0 - x.dr_nozzle;
        Ok((q_d / (2.0 * PI * r_t * g.l_tube) * tube, q_d / (2.0 * PI * r_n * g.l_nozzle) * noz))
    }

    /// Drift field ẋ = f(x, u; θ) (no noise).
    pub fn transition_f(&self, x: &StateVector, u: &InputVector, theta: &ThetaParams) -> Result<StateVector> {
        self.transition_with(x, theta, &self.kernel(u)?, &Modifiers::default())
    }

    pub fn transition_with(
        &self,
        x: &StateVector,
        theta: &ThetaParams,
        kernel: &InputKernel,
        m: &Modifiers,
    ) -> Result<StateVector> {
        let g = &self.params.geometry;
        let u = &kernel.u;
        if !(x.v_l < g.v_vial) {
            return Err(TwinError::DegenerateHeadspace { v_l: x.v_l, v_v: g.v_vial });
        }
        let (tube, nozzle) = self.deposition_rates(x, kernel)?;
        let h = net_generation_h(u.q_c, x.v_l, u.i_a, &self.params.generation)?.rate * m.generation_scale;
        let vl_dot = -x.phi_a * u.q_c + theta.theta_vl * x.v_l;
        let phi_dot = (h - x.phi_a * u.q_c + x.phi_a * vl_dot) / (g.v_vial - x.v_l) + theta.theta_phia * x.phi_a;
        Ok(StateVector {
            d_a: theta.theta_da * x.d_a,
            v_l: vl_dot,
            dr_tube: tube + theta.theta_drt * x.dr_tube,
            dr_nozzle: nozzle + theta.theta_drn * x.dr_nozzle + m.nozzle_extra_rate,
            phi_a: phi_dot,
        })
    }

    /// One explicit Euler step followed by clamping into `bounds`.
    pub fn step_euler(
        &self,
        x: &StateVector,
        u: &InputVector,
        theta: &ThetaParams,
        dt: f64,
        bounds: &StateBounds,
    ) -> Result<StepOutcome> {
        if dt == 0.0 {
            return Ok(StepOutcome { state: *x, clamped: [false; STATE_DIM] });
        }
        let kernel = self.kernel(u)?;
        let xdot = self.transition_with(x, theta, &kernel, &Modifiers::default())?;
        Ok(euler_update(x, &xdot, dt, None, bounds))
    }

    /// Mean output y = g(x, u) (no noise).
    pub fn output_g(&self, x: &StateVector, u: &InputVector) -> Result<OutputVector> {
        output_g(x, u, &self.params)
    }
}

/// `clamp(x + dt·ẋ + noise)`.
pub fn euler_update(
    x: &StateVector,
    xdot: &StateVector,
    dt: f64,
    noise: Option<&[f64; STATE_DIM]>,
    bounds: &StateBounds,
) -> StepOutcome {
    let a = x.to_array();
    let d = xdot.to_array();
    let mut next = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        next[i] = a[i] + dt * d[i] + noise.map_or(0.0, |n| n[i]);
    }
    let (state, clamped) = bounds.clamp(&StateVector::from_array(next));
    StepOutcome { state, clamped }
}

/// Linewidth, overspray, pressures and deposited material flow.
pub fn output_g(x: &StateVector, u: &InputVector, p: &ModelParams) -> Result<OutputVector> {
    let net = Network::new(x.dr_tube, x.dr_nozzle, &p.geometry)?;
    let (p_c, p_s) = net.pressures(u.q_c, u.q_s);
    let line = |c: &crate::params::LineCoefficients| {
        let dr = x.dr_nozzle;
        c.alpha_da * x.d_a
            + c.alpha_phia * x.phi_a
            + dr * (c.alpha_drn[0] + dr * (c.alpha_drn[1] + dr * c.alpha_drn[2]))
            + c.beta_c * u.q_c
            + c.beta_s * u.q_s
            + c.gamma
    };
    Ok(OutputVector {
        l_w: line(&p.outputs.linewidth),
        l_o: line(&p.outputs.overspray),
        p_c,
        p_s,
        q_m: p.outputs.phi_m * x.phi_a * u.q_c,
    })
}
