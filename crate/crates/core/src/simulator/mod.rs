//! Seeded virtual printer: integrates the stochastic model, produces noisy
//! sensor outputs, injects faults and synthesizes line profiles.

pub mod rng;
pub mod scenario;
pub mod synth;

pub use rng::CounterNormal;
pub use scenario::{equilibrium_phi, FaultKind, FaultSpec, InitialPhi, Scenario, ScheduleEntry};
pub use synth::{render_grayscale, synth_profile, Template};

use crate::error::{Result, TwinError};
use crate::params::ModelParams;
use crate::physics::{euler_update, InputKernel, Modifiers, StateBounds, TwinModel};
use crate::table::{format_number, round_display, Table, TimeSeriesTable};
use crate::types::{
    InputVector, Observation, OutputVector, StateVector, ThetaParams, TimeSeriesRecord, OUTPUT_DIM, OUTPUT_NAMES,
    STATE_DIM,
};
use crate::units::{from_si, Unit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalEvent {
    /// Nozzle deposit reached the clamp bound at the given step.
    NozzleClogged { step: usize, t: f64 },
}

/// Immutable result of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub inputs: Vec<InputVector>,
    pub clean: Vec<OutputVector>,
    pub noisy: Vec<OutputVector>,
    /// Per step, one flag per scenario fault.
    pub faults_active: Vec<Vec<bool>>,
    pub terminal: Option<TerminalEvent>,
}

/// Runs `scenario` against `params` (with the scenario's noise overrides).
pub fn simulate(scenario: &Scenario, params: &ModelParams) -> Result<SimulationTrace> {
    scenario.validate()?;
    let params = scenario.effective_params(params);
    let model = TwinModel::new(params);
    simulate_with(scenario, &model)
}

/// As [`simulate`] with a prebuilt model whose parameters are used as-is.
pub fn simulate_with(scenario: &Scenario, model: &TwinModel) -> Result<SimulationTrace> {
    let n = scenario.steps();
    let mut stepper = Stepper::new(scenario, model)?;
    let mut trace = SimulationTrace {
        dt: scenario.dt,
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        clean: Vec::with_capacity(n),
        noisy: Vec::with_capacity(n),
        faults_active: Vec::with_capacity(n),
        terminal: None,
    };
    for k in 0..n {
        let u = scenario.input_at(k as f64 * scenario.dt);
        let tick = stepper.tick(model, &u, k + 1 < n)?;
        trace.times.push(tick.t);
        trace.states.push(tick.state);
        trace.inputs.push(u);
        trace.clean.push(tick.clean);
        trace.noisy.push(tick.noisy);
        trace.faults_active.push(tick.faults_active);
        if let Some(ev) = stepper.terminal {
            trace.terminal = Some(ev);
            break;
        }
    }
    Ok(trace)
}

/// One recorded step of a [`Stepper`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub step: usize,
    pub t: f64,
    pub state: StateVector,
    pub clean: OutputVector,
    pub noisy: OutputVector,
    pub faults_active: Vec<bool>,
}

/// Incremental form of [`simulate_with`] whose input is chosen per step.
/// Driving it with `scenario.input_at(t)` reproduces the batch trace.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub dt: f64,
    pub theta: ThetaParams,
    pub faults: Vec<FaultSpec>,
    pub terminal: Option<TerminalEvent>,
    bounds: StateBounds,
    rng: CounterNormal,
    x: StateVector,
    k: usize,
    kernel: Option<InputKernel>,
}

impl Stepper {
    pub fn new(scenario: &Scenario, model: &TwinModel) -> Result<Self> {
        Ok(Self {
            dt: scenario.dt,
            theta: scenario.theta,
            faults: scenario.faults.clone(),
            terminal: None,
            bounds: StateBounds::truth(&model.params),
            rng: CounterNormal::new(scenario.seed),
            x: scenario.initial_state(&model.params)?,
            k: 0,
            kernel: None,
        })
    }

    /// Index of the next step.
    pub fn step_index(&self) -> usize {
        self.k
    }

    /// True state that the next tick will record.
    pub fn state(&self) -> StateVector {
        self.x
    }

    /// Records outputs at the current state under `u`, then (if `advance`)
    /// integrates one step with the same input.
    pub fn tick(&mut self, model: &TwinModel, u: &InputVector, advance: bool) -> Result<Tick> {
        if self.terminal.is_some() {
            return Err(TwinError::InvalidInput("the simulated nozzle is clogged".into()));
        }
        let p = &model.params;
        let k = self.k;
        let t = k as f64 * self.dt;
        if self.kernel.as_ref().is_none_or(|kn| kn.u != *u) {
            self.kernel = Some(model.kernel(u)?);
        }
        let active: Vec<bool> = self.faults.iter().map(|f| f.active(t)).collect();
        let clean = model.output_g(&self.x, u)?;
        let mut y = clean.to_array();
        for (i, v) in y.iter_mut().enumerate() {
            *v += p.noise.sigma_w[i] * self.rng.draw(k as u64, 5 + i);
        }
        let mut modifiers = Modifiers::default();
        for (f, on) in self.faults.iter().zip(&active) {
            if !on {
                continue;
            }
            match f.kind {
                FaultKind::MfcPressureDrift => y[2] += f.magnitude * (t - f.onset),
                FaultKind::NozzleClogAcceleration => modifiers.nozzle_extra_rate += f.magnitude,
                FaultKind::AtomizerDropout => modifiers.generation_scale *= 1.0 - f.magnitude,
            }
        }
        let tick =
            Tick { step: k, t, state: self.x, clean, noisy: OutputVector::from_array(y), faults_active: active };
        self.k += 1;
        if advance {
            let kernel = self.kernel.as_ref().expect("kernel set above");
            let xdot = model.transition_with(&self.x, &self.theta, kernel, &modifiers)?;
            let sq = self.dt.sqrt();
            let noise: [f64; STATE_DIM] =
                std::array::from_fn(|i| p.noise.sigma_xi[i] * sq * self.rng.draw(k as u64, i));
            let next = euler_update(&self.x, &xdot, self.dt, Some(&noise), &self.bounds).state;
            if next.dr_nozzle >= self.bounds.upper[StateVector::DR_NOZZLE] {
                self.terminal = Some(TerminalEvent::NozzleClogged { step: k + 1, t: t + self.dt });
            }
            self.x = next;
        }
        Ok(tick)
    }
}

const STATE_UNITS: [Unit; STATE_DIM] =
    [Unit::Micrometre, Unit::Millilitre, Unit::Micrometre, Unit::Micrometre, Unit::Dimensionless];
const OUTPUT_UNITS: [Unit; OUTPUT_DIM] = [Unit::Micrometre, Unit::Micrometre, Unit::Pascal, Unit::Pascal, Unit::Sccm];

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Noisy measurements as time-series records.
    pub fn records(&self) -> Vec<TimeSeriesRecord> {
        (0..self.len())
            .map(|k| TimeSeriesRecord { t: self.times[k], u: self.inputs[k], y: Observation::complete(&self.noisy[k]) })
            .collect()
    }

    pub fn to_table(&self) -> TimeSeriesTable {
        TimeSeriesTable::from_records(&self.records())
    }

    /// Ground truth: states, clean outputs and fault flags per step.
    pub fn truth_table(&self) -> Table {
        let mut header = vec!["t[s]".to_string()];
        for (name, unit) in crate::types::STATE_NAMES.iter().zip(STATE_UNITS) {
            header.push(format!("{name}[{unit}]"));
        }
        for (name, unit) in OUTPUT_NAMES.iter().zip(OUTPUT_UNITS) {
            header.push(format!("{name}_clean[{unit}]"));
        }
        let n_faults = self.faults_active.first().map_or(0, |f| f.len());
        for i in 0..n_faults {
            header.push(format!("fault{i}[1]"));
        }
        let mut table = Table::new(header);
        for k in 0..self.len() {
            let mut row = vec![Some(round_display(self.times[k]))];
            let x = self.states[k].to_array();
            row.extend(x.iter().zip(STATE_UNITS).map(|(v, u)| Some(round_display(from_si(*v, u)))));
            let y = self.clean[k].to_array();
            row.extend(y.iter().zip(OUTPUT_UNITS).map(|(v, u)| Some(round_display(from_si(*v, u)))));
            row.extend(self.faults_active[k].iter().map(|f| Some(if *f { 1.0 } else { 0.0 })));
            table.rows.push(row);
        }
        table
    }

    fn nearest_step(&self, t: f64) -> Result<usize> {
        let last = *self.times.last().ok_or_else(|| TwinError::InvalidInput("empty trace".into()))?;
        if !(t >= -0.5 * self.dt && t <= last + 0.5 * self.dt) {
            return Err(TwinError::InvalidInput(format!("probe time {} s outside the trace", format_number(t))));
        }
        Ok(((t / self.dt).round().max(0.0) as usize).min(self.len() - 1))
    }

    /// True state at the step nearest `t`.
    pub fn probe_latent(&self, t: f64) -> Result<StateVector> {
        Ok(self.states[self.nearest_step(t)?])
    }

    /// Probe that disturbs the process: returns the state and a copy of the
    /// trace whose measured outputs from the probe step on are shifted by
    /// `shift` (SI, per output).
    pub fn probe_with_disturbance(&self, t: f64, shift: &OutputVector) -> Result<(StateVector, SimulationTrace)> {
        let k = self.nearest_step(t)?;
        let mut out = self.clone();
        let d = shift.to_array();
        for y in out.noisy.iter_mut().skip(k) {
            let mut a = y.to_array();
            for i in 0..OUTPUT_DIM {
                a[i] += d[i];
            }
            *y = OutputVector::from_array(a);
        }
        Ok((self.states[k], out))
    }
}
