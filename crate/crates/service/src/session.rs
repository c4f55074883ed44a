//! One twin session: a data source (live simulation or recorded table), the
//! online estimator, the event log and the advisory what-if/calibration
//! operations. Synchronous; the host drives it from its own thread.

use std::collections::VecDeque;
use std::fmt::Write as _;

use ajtwin_core::estimation::forecast::forecast;
use ajtwin_core::estimation::init::DEFAULT_WINDOW;
use ajtwin_core::estimation::{
    anomaly_score, default_prior_covariance, em_calibrate, estimate_initial_state, Debouncer, Ekf, EkfSnapshot,
    EmSettings, TwinStateSpace,
};
use ajtwin_core::physics::TwinModel;
use ajtwin_core::simulator::{Scenario, Stepper};
use ajtwin_core::table::{format_number, TimeSeriesTable};
use ajtwin_core::units::{MILLIAMP, SCCM};
use ajtwin_core::{GaussianBelief, InputVector, ModelParams, Observation, StateVector, ThetaParams, TimeSeriesRecord};
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::wire;

/// Consecutive flagged frames needed to raise an alert.
pub const ALERT_RUN: usize = 10;
pub const DEFAULT_BUFFER: usize = 3600;
pub const DEFAULT_EM_ITERATIONS: usize = 20;
pub const MAX_HORIZON: usize = 100_000;

/// Operational input bounds (SI), inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for InputBounds {
    fn default() -> Self {
        Self { lower: [250.0 * MILLIAMP, 10.0 * SCCM, 30.0 * SCCM], upper: [500.0 * MILLIAMP, 40.0 * SCCM, 80.0 * SCCM] }
    }
}

impl InputBounds {
    pub fn to_json(&self) -> Value {
        let mut v = json!({});
        for (i, (name, unit)) in wire::INPUT_FIELDS.iter().enumerate() {
            let show = |x: f64| ajtwin_core::table::round_display(ajtwin_core::units::from_si(x, *unit));
            v[*name] = json!([show(self.lower[i]), show(self.upper[i])]);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub params: ModelParams,
    /// Frames used for the initial-state fit.
    pub window: usize,
    /// Frames kept for subscriber catch-up.
    pub buffer: usize,
    pub bounds: InputBounds,
    /// Starting θ of the estimator.
    pub theta: ThetaParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            window: DEFAULT_WINDOW,
            buffer: DEFAULT_BUFFER,
            bounds: InputBounds::default(),
            theta: ThetaParams::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunState {
    Paused,
    /// Simulated seconds per wall-clock second.
    Running { rate: f64 },
    Finished,
}

impl RunState {
    pub fn name(&self) -> &'static str {
        match self {
            RunState::Paused => "paused",
            RunState::Running { .. } => "running",
            RunState::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    InputChange,
    FaultOnset,
    AnomalyFlag,
    AnomalyAlert,
    ThetaSwap,
    Probe,
    Terminal,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::InputChange => "input-change",
            EventKind::FaultOnset => "fault-onset",
            EventKind::AnomalyFlag => "anomaly-flag",
            EventKind::AnomalyAlert => "anomaly-alert",
            EventKind::ThetaSwap => "theta-swap",
            EventKind::Probe => "probe",
            EventKind::Terminal => "terminal",
        }
    }
}

/// Logged occurrence; `seq` is the first frame it affects.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub seq: u64,
    pub t: f64,
    pub kind: EventKind,
    /// `key=value` pairs separated by `;`.
    pub detail: String,
}

impl Event {
    pub fn to_json(&self) -> Value {
        json!({ "seq": self.seq, "t": self.t, "kind": self.kind.name(), "detail": self.detail })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub seq: u64,
    pub record: TimeSeriesRecord,
    pub belief: Option<(StateVector, [f64; 5])>,
    pub nis: Option<f64>,
    pub nis_dof: usize,
    pub anomaly: bool,
    pub theta: ThetaParams,
}

impl Frame {
    pub fn to_json(&self) -> Value {
        json!({
            "seq": self.seq,
            "t": self.record.t,
            "u": wire::input(&self.record.u),
            "y": wire::observation(&self.record.y),
            "x_hat": self.belief.map(|(x, _)| wire::state(&x)),
            "x_var": self.belief.map(|(_, d)| wire::state_variance(d)),
            "nis": self.nis,
            "nis_dof": self.nis_dof,
            "anomaly": self.anomaly,
            "theta": wire::theta(&self.theta),
        })
    }
}

/// Output of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub frame: Frame,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
struct Live {
    scenario: Scenario,
    truth_model: TwinModel,
    stepper: Stepper,
    next_schedule: usize,
    truth: Vec<StateVector>,
    shift: [f64; 5],
    faults_seen: Vec<bool>,
}

#[derive(Debug, Clone)]
struct Replay {
    records: Vec<TimeSeriesRecord>,
    swaps: Vec<(u64, ThetaParams)>,
}

#[derive(Debug, Clone)]
enum Source {
    Live(Box<Live>),
    Replay(Replay),
}

/// Belief mean and variances (once a belief exists), NIS and its dof.
type Estimate = (Option<(StateVector, [f64; 5])>, Option<f64>, usize);

/// Measurement as it appears in an exported table, so that live and replayed
/// sessions feed the estimator identical numbers.
pub fn quantize(rec: &TimeSeriesRecord) -> TimeSeriesRecord {
    TimeSeriesTable::from_records(std::slice::from_ref(rec)).record(0)
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    model: TwinModel,
    dt: f64,
    source: Source,
    pub state: RunState,
    /// Setpoint used by the next tick.
    u: InputVector,
    theta: ThetaParams,
    records: Vec<TimeSeriesRecord>,
    means: Vec<Option<StateVector>>,
    frames: VecDeque<Frame>,
    events: Vec<Event>,
    filter: Option<EkfSnapshot<InputVector>>,
    debouncer: Debouncer,
    alerts: usize,
}

impl Session {
    /// Live session driven by the virtual printer.
    pub fn live(id: String, scenario: Scenario, config: SessionConfig) -> ApiResult<Self> {
        scenario.validate()?;
        let params = scenario.effective_params(&config.params);
        let model = TwinModel::new(params);
        let stepper = Stepper::new(&scenario, &model)?;
        let u = scenario.schedule[0].u;
        let live = Live {
            truth_model: model.clone(),
            stepper,
            next_schedule: 1,
            truth: Vec::new(),
            shift: [0.0; 5],
            faults_seen: vec![false; scenario.faults.len()],
            scenario,
        };
        Ok(Self::assemble(id, config, model, live.scenario.dt, Source::Live(Box::new(live)), u))
    }

    /// Replays a recorded table; `theta-swap` events from an exported log
    /// are re-applied at their frames.
    pub fn replay(id: String, table: &TimeSeriesTable, events: Option<&str>, dt: Option<f64>, config: SessionConfig) -> ApiResult<Self> {
        let records = table.to_records();
        let dt = match dt {
            Some(d) if d > 0.0 => d,
            Some(_) => return Err(ApiError::bad_request("dt must be positive")),
            None => table.uniform_dt().unwrap_or(1.0),
        };
        if table.len() >= 2 && table.uniform_dt().is_none() {
            return Err(ApiError::bad_request("replay table must be uniformly sampled"));
        }
        let swaps = match events {
            Some(text) => parse_theta_swaps(text)?,
            None => Vec::new(),
        };
        let u = records.first().map(|r| r.u).unwrap_or_default();
        let model = TwinModel::new(config.params.clone());
        let source = Source::Replay(Replay { records, swaps });
        Ok(Self::assemble(id, config, model, dt, source, u))
    }

    fn assemble(id: String, config: SessionConfig, model: TwinModel, dt: f64, source: Source, u: InputVector) -> Self {
        let theta = config.theta;
        let mut s = Self {
            id,
            model,
            dt,
            source,
            state: RunState::Paused,
            u,
            theta,
            records: Vec::new(),
            means: Vec::new(),
            frames: VecDeque::new(),
            events: Vec::new(),
            filter: None,
            debouncer: Debouncer::new(ALERT_RUN),
            alerts: 0,
            config,
        };
        if s.exhausted() {
            s.state = RunState::Finished;
        }
        s
    }

    pub fn mode(&self) -> &'static str {
        match self.source {
            Source::Live(_) => "live-sim",
            Source::Replay(_) => "replay",
        }
    }

    /// Parameter bundle of the estimator (scenario noise overrides applied).
    pub fn model_params(&self) -> &ModelParams {
        &self.model.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Sequence number of the next frame.
    pub fn next_seq(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn theta(&self) -> ThetaParams {
        self.theta
    }

    pub fn records(&self) -> &[TimeSeriesRecord] {
        &self.records
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Buffered frames with `seq >= from`.
    pub fn frames_since(&self, from: u64) -> Vec<Frame> {
        self.frames.iter().filter(|f| f.seq >= from).cloned().collect()
    }

    pub fn last_frame(&self) -> Option<&Frame> {
        self.frames.back()
    }

    fn exhausted(&self) -> bool {
        match &self.source {
            Source::Live(l) => l.stepper.terminal.is_some() || self.records.len() >= l.scenario.steps(),
            Source::Replay(r) => self.records.len() >= r.records.len(),
        }
    }

    fn next_t(&self) -> f64 {
        match &self.source {
            Source::Replay(r) => r.records.get(self.records.len()).map_or(self.records.len() as f64 * self.dt, |r| r.t),
            Source::Live(_) => self.records.len() as f64 * self.dt,
        }
    }

    fn event(&mut self, kind: EventKind, detail: String) -> Event {
        let ev = Event { seq: self.next_seq(), t: self.next_t(), kind, detail };
        self.events.push(ev.clone());
        ev
    }

    pub fn status(&self) -> Value {
        json!({
            "session": self.id,
            "protocol": crate::PROTOCOL_VERSION,
            "mode": self.mode(),
            "state": self.state.name(),
            "seq": self.next_seq(),
            "t": self.next_t(),
            "dt": self.dt,
            "u": wire::input(&self.u),
            "theta": wire::theta(&self.theta),
            "belief": self.filter.is_some(),
            "frames": self.records.len(),
            "events": self.events.len(),
            "alerts": self.alerts,
            "bounds": self.config.bounds.to_json(),
        })
    }

    /// Changes one setpoint from the next tick on.
    pub fn set_input(&mut self, which: &str, value: f64) -> ApiResult<Value> {
        if !matches!(self.source, Source::Live(_)) {
            return Err(ApiError::invalid_state("inputs of a replay session come from its table"));
        }
        if self.state == RunState::Finished {
            return Err(ApiError::invalid_state("session has finished"));
        }
        let i = wire::input_index(which)?;
        let unit = wire::INPUT_FIELDS[i].1;
        let si = ajtwin_core::units::to_si(value, unit);
        let b = self.config.bounds;
        if !(si >= b.lower[i] && si <= b.upper[i]) {
            return Err(ApiError::new("out-of-bounds", format!("{which} = {value} outside the operational bounds"))
                .with_data(json!({ which: b.to_json()[which].clone() })));
        }
        let mut a = [self.u.i_a, self.u.q_c, self.u.q_s];
        a[i] = si;
        self.u = InputVector::new(a[0], a[1], a[2]);
        self.event(EventKind::InputChange, format!("{which}={};source=operator", format_number(value)));
        Ok(json!({ "accepted": true, "effective_from": self.next_seq(), "u": wire::input(&self.u) }))
    }

    /// Advances one frame.
    pub fn tick(&mut self) -> ApiResult<TickOutput> {
        if self.exhausted() {
            self.state = RunState::Finished;
            return Err(ApiError::invalid_state("no more frames"));
        }
        let first_event = self.events.len();
        let seq = self.next_seq();
        let raw = match &mut self.source {
            Source::Replay(r) => {
                let rec = r.records[seq as usize];
                if let Some((_, th)) = r.swaps.iter().rev().find(|(s, _)| *s == seq) {
                    self.theta = *th;
                }
                rec
            }
            Source::Live(_) => self.live_tick()?,
        };
        let rec = quantize(&raw);
        self.u = match self.source {
            Source::Replay(_) => rec.u,
            Source::Live(_) => self.u,
        };
        self.records.push(rec);
        let (belief, nis, dof) = self.estimate(&rec)?;
        self.means.push(belief.map(|(x, _)| x));
        let anomaly = nis.is_some_and(|n| n > ajtwin_core::estimation::nis_threshold(dof));
        let frame = Frame { seq, record: rec, belief, nis, nis_dof: dof, anomaly, theta: self.theta };
        if anomaly {
            let ev = Event {
                seq,
                t: rec.t,
                kind: EventKind::AnomalyFlag,
                detail: format!("nis={};dof={dof}", format_number(nis.unwrap_or(0.0))),
            };
            self.events.push(ev);
        }
        if belief.is_some() && self.debouncer.push(anomaly) {
            self.alerts += 1;
            let ev = Event { seq, t: rec.t, kind: EventKind::AnomalyAlert, detail: format!("run={ALERT_RUN}") };
            self.events.push(ev);
        }
        self.frames.push_back(frame.clone());
        while self.frames.len() > self.config.buffer.max(1) {
            self.frames.pop_front();
        }
        if self.exhausted() {
            if let Source::Live(l) = &self.source {
                if let Some(ajtwin_core::simulator::TerminalEvent::NozzleClogged { step, t }) = l.stepper.terminal {
                    let ev = Event {
                        seq: step as u64,
                        t,
                        kind: EventKind::Terminal,
                        detail: "reason=nozzle-clogged".into(),
                    };
                    self.events.push(ev);
                }
            }
            self.state = RunState::Finished;
        }
        Ok(TickOutput { frame, events: self.events[first_event..].to_vec() })
    }

    fn live_tick(&mut self) -> ApiResult<TimeSeriesRecord> {
        let seq = self.next_seq();
        let Source::Live(live) = &mut self.source else { unreachable!() };
        let t = seq as f64 * self.dt;
        let mut changes = Vec::new();
        while let Some(e) = live.scenario.schedule.get(live.next_schedule) {
            if e.t > t + 1e-9 * self.dt {
                break;
            }
            let old = [self.u.i_a, self.u.q_c, self.u.q_s];
            let new = [e.u.i_a, e.u.q_c, e.u.q_s];
            for i in 0..3 {
                if old[i] != new[i] {
                    let (name, unit) = wire::INPUT_FIELDS[i];
                    changes.push(format!(
                        "{name}={};source=schedule",
                        format_number(ajtwin_core::table::round_display(ajtwin_core::units::from_si(new[i], unit)))
                    ));
                }
            }
            self.u = e.u;
            live.next_schedule += 1;
        }
        let last = live.stepper.step_index() + 1 >= live.scenario.steps();
        let tick = live.stepper.tick(&live.truth_model, &self.u, !last)?;
        let mut onsets = Vec::new();
        for (i, on) in tick.faults_active.iter().enumerate() {
            if *on && !live.faults_seen[i] {
                live.faults_seen[i] = true;
                let f = live.scenario.faults[i];
                onsets.push(format!(
                    "fault={i};kind={};magnitude={}",
                    f.kind.name(),
                    format_number(ajtwin_core::table::round_display(f.magnitude))
                ));
            }
        }
        live.truth.push(tick.state);
        let mut y = tick.noisy.to_array();
        for (v, s) in y.iter_mut().zip(live.shift) {
            *v += s;
        }
        for c in changes {
            self.event(EventKind::InputChange, c);
        }
        for o in onsets {
            self.event(EventKind::FaultOnset, o);
        }
        Ok(TimeSeriesRecord {
            t: tick.t,
            u: self.u,
            y: Observation::complete(&ajtwin_core::OutputVector::from_array(y)),
        })
    }

    fn estimate(&mut self, rec: &TimeSeriesRecord) -> ApiResult<Estimate> {
        let ss = TwinStateSpace::new(&self.model, self.theta, self.dt);
        let step = match &self.filter {
            Some(snap) => {
                let mut ekf = Ekf::resume(&ss, snap);
                let step = ekf.step(&rec.u, &rec.y.0)?;
                self.filter = Some(ekf.snapshot());
                Some((step, ekf.mean_si(), ekf.covariance_si()))
            }
            None if self.records.len() >= self.config.window.max(1) => {
                let start = self.records.len() - self.config.window.max(1);
                let window = &self.records[start..];
                match estimate_initial_state(&self.model, window) {
                    Ok(fit) => {
                        let p0 = default_prior_covariance(&self.model.params);
                        let mut ekf = Ekf::new(&ss, &fit.state.to_dvector(), &p0);
                        let mut last = None;
                        for r in window {
                            last = Some(ekf.step(&r.u, &r.y.0)?);
                        }
                        self.filter = Some(ekf.snapshot());
                        last.map(|s| (s, ekf.mean_si(), ekf.covariance_si()))
                    }
                    Err(_) => None,
                }
            }
            None => None,
        };
        Ok(match step {
            None => (None, None, 0),
            Some((st, mean, cov)) => {
                let score = anomaly_score(&st)?;
                let diag = std::array::from_fn(|i| cov[(i, i)].max(0.0));
                (Some((StateVector::from_slice(mean.as_slice()), diag)), Some(score.nis), score.dof)
            }
        })
    }

    fn belief(&self) -> Option<GaussianBelief> {
        let snap = self.filter.as_ref()?;
        let ss = TwinStateSpace::new(&self.model, self.theta, self.dt);
        let ekf = Ekf::resume(&ss, snap);
        Some(GaussianBelief::new(StateVector::from_slice(ekf.mean_si().as_slice()), ekf.covariance_si()))
    }

    /// Advisory forecast from the current belief; never touches live state.
    pub fn what_if(&self, schedule: &[Value], horizon: usize) -> ApiResult<Value> {
        let belief = self.belief().ok_or_else(|| ApiError::new("not-ready", "no belief yet"))?;
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(ApiError::bad_request(format!("horizon must be in 1..={MAX_HORIZON}")));
        }
        let current = self.records.last().map(|r| r.u).unwrap_or(self.u);
        let mut inputs = Vec::with_capacity(horizon);
        let mut u = self.u;
        for j in 0..horizon {
            if let Some(entry) = schedule.get(j) {
                u = wire::parse_input(entry, u)?;
            }
            if !u.is_valid() {
                return Err(ApiError::bad_request(format!("invalid input at lead {}", j + 1)));
            }
            inputs.push(u);
        }
        let t0 = self.records.last().map_or(0.0, |r| r.t);
        let out = forecast(&self.model, &belief, &self.theta, &current, &inputs, self.dt)?;
        let steps: Vec<Value> = out
            .iter()
            .map(|s| {
                let sd = s.output_std();
                let m = s.output_mean.to_array();
                json!({
                    "lead": s.lead,
                    "t": t0 + s.lead as f64 * self.dt,
                    "u": wire::input(&s.input),
                    "y_mean": wire::outputs(&s.output_mean),
                    "y_lo": wire::outputs_raw(std::array::from_fn(|i| m[i] - 2.0 * sd[i])),
                    "y_hi": wire::outputs_raw(std::array::from_fn(|i| m[i] + 2.0 * sd[i])),
                })
            })
            .collect();
        Ok(json!({ "from_seq": self.next_seq(), "theta": wire::theta(&self.theta), "steps": steps }))
    }

    /// EM over the last `window` frames; on success the estimator switches
    /// to the new θ from the next frame.
    pub fn calibrate_now(&mut self, window: usize, max_iterations: usize) -> ApiResult<Value> {
        if window < 2 {
            return Err(ApiError::bad_request("calibration window must be at least 2 frames"));
        }
        if self.records.len() < window {
            return Err(ApiError::new(
                "not-ready",
                format!("{} frames buffered, calibration window needs {window}", self.records.len()),
            ));
        }
        let start = self.records.len() - window;
        let recs = &self.records[start..];
        let x0 = match self.means[start] {
            Some(x) => x,
            None => estimate_initial_state(&self.model, &recs[..self.config.window.clamp(1, window)])?.state,
        };
        let p0 = default_prior_covariance(&self.model.params);
        let settings = EmSettings { max_iterations, dt: self.dt, ..Default::default() };
        let rep = em_calibrate(&self.model, recs, &x0, &p0, self.theta, &settings)
            .map_err(|e| ApiError::new("calibration-failed", e.to_string()))?;
        let previous = self.theta;
        self.theta = rep.theta();
        let detail = wire::THETA_FIELDS
            .iter()
            .zip(self.theta.to_array())
            .map(|(k, v)| format!("{k}={v:?}"))
            .collect::<Vec<_>>()
            .join(";");
        self.event(EventKind::ThetaSwap, detail);
        Ok(json!({
            "theta": wire::theta(&self.theta),
            "previous_theta": wire::theta(&previous),
            "iterations": rep.iterations(),
            "converged": rep.converged,
            "objective_before": rep.objective_before,
            "objective_after": rep.objective_after,
            "monotone": rep.m_steps_monotone(1e-9),
            "window": window,
            "effective_from": self.next_seq(),
        }))
    }

    /// True state (live only). Without `t`, the state of the latest frame.
    /// A disturbance shifts every later measurement.
    pub fn probe(&mut self, t: Option<f64>, disturbance: Option<[f64; 5]>) -> ApiResult<Value> {
        let dt = self.dt;
        let Source::Live(live) = &mut self.source else {
            return Err(ApiError::invalid_state("replay sessions have no true state"));
        };
        if live.truth.is_empty() {
            return Err(ApiError::new("not-ready", "no frames yet"));
        }
        let k = match t {
            None => live.truth.len() - 1,
            Some(t) => {
                let last = (live.truth.len() - 1) as f64 * dt;
                if !(t >= -0.5 * dt && t <= last + 0.5 * dt) {
                    return Err(ApiError::bad_request(format!("probe time {t} s outside the recorded frames")));
                }
                ((t / dt).round().max(0.0) as usize).min(live.truth.len() - 1)
            }
        };
        let x = live.truth[k];
        if let Some(d) = disturbance {
            for (s, v) in live.shift.iter_mut().zip(d) {
                *s += v;
            }
        }
        let detail = format!("frame={k};disturbed={}", disturbance.is_some());
        self.event(EventKind::Probe, detail);
        Ok(json!({ "seq": k, "t": k as f64 * dt, "x": wire::state(&x) }))
    }

    /// Frames `[from, to)` as a time-series table plus the events in range.
    pub fn export(&self, from: Option<u64>, to: Option<u64>) -> ApiResult<(String, String, Vec<Event>)> {
        let n = self.records.len() as u64;
        let from = from.unwrap_or(0);
        let to = to.unwrap_or(n);
        if from > to || to > n {
            return Err(ApiError::new("bad-range", format!("range [{from}, {to}) not within [0, {n})")));
        }
        let table = TimeSeriesTable::from_records(&self.records[from as usize..to as usize]).to_csv();
        let events: Vec<Event> = self.events.iter().filter(|e| e.seq >= from && e.seq < to).cloned().collect();
        let mut log = String::from("seq,t[s],kind,detail\n");
        for e in &events {
            let _ = writeln!(log, "{},{},{},{}", e.seq, format_number(e.t), e.kind.name(), e.detail);
        }
        Ok((table, log, events))
    }
}

/// `theta-swap` lines of an exported event log.
pub fn parse_theta_swaps(text: &str) -> ApiResult<Vec<(u64, ThetaParams)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 && line.starts_with("seq,") || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let bad = || ApiError::bad_request(format!("event log line {}: malformed", n + 1));
        let seq: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let _t = parts.next().ok_or_else(bad)?;
        let kind = parts.next().ok_or_else(bad)?;
        let detail = parts.next().ok_or_else(bad)?;
        if kind != EventKind::ThetaSwap.name() {
            continue;
        }
        let mut a = [0.0; 5];
        for kv in detail.split(';') {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            let i = wire::THETA_FIELDS.iter().position(|f| *f == k).ok_or_else(bad)?;
            a[i] = v.parse().map_err(|_| bad())?;
        }
        out.push((seq, ThetaParams::from_array(a)));
    }
    Ok(out)
}
