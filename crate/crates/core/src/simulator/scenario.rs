//! Scenario files: initial state, θ, input schedule, faults and noise
//! overrides in the flat configuration format.
//!
//! ```text
//! duration = 90 min
//! dt = 1 s
//! seed = 7
//! initial.d_a = 3 um
//! initial.V_l = 1 mL
//! initial.phi_A = equilibrium
//! theta.da = -2e-5 1/s
//! schedule.0.t = 0 s
//! schedule.0.I_A = 370 mA
//! schedule.0.Q_c = 25 sccm
//! schedule.0.Q_s = 50 sccm
//! fault.0.kind = mfc-pressure-drift
//! fault.0.onset = 30 min
//! fault.0.magnitude = 800 Pa/s
//! noise.sigma_da = 0.01 um/s
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{format_value, FlatConfig};
use crate::error::{Result, TwinError};
use crate::params::ModelParams;
use crate::physics::generation::net_generation_h;
use crate::types::{InputVector, StateVector, ThetaParams};
use crate::units::{Dimension, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Ramp added to the carrier-pressure reading; magnitude in Pa/s.
    MfcPressureDrift,
    /// Extra nozzle deposit growth; magnitude in m/s.
    NozzleClogAcceleration,
    /// Fraction of aerosol generation lost; magnitude in [0, 1].
    AtomizerDropout,
}

impl FaultKind {
    pub fn name(self) -> &'static str {
        match self {
            FaultKind::MfcPressureDrift => "mfc-pressure-drift",
            FaultKind::NozzleClogAcceleration => "nozzle-clog-acceleration",
            FaultKind::AtomizerDropout => "atomizer-dropout",
        }
    }

    fn magnitude_unit(self) -> Unit {
        match self {
            FaultKind::MfcPressureDrift => Unit::PascalPerSecond,
            FaultKind::NozzleClogAcceleration => Unit::MicrometrePerSecond,
            FaultKind::AtomizerDropout => Unit::Dimensionless,
        }
    }
}

impl std::str::FromStr for FaultKind {
    type Err = TwinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfc-pressure-drift" => Ok(Self::MfcPressureDrift),
            "nozzle-clog-acceleration" => Ok(Self::NozzleClogAcceleration),
            "atomizer-dropout" => Ok(Self::AtomizerDropout),
            other => Err(TwinError::InvalidInput(format!("unknown fault kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub onset: f64,
    pub magnitude: f64,
}

impl FaultSpec {
    pub fn active(&self, t: f64) -> bool {
        t >= self.onset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    pub t: f64,
    pub u: InputVector,
}

/// Initial aerosol fraction: explicit, or the steady state of the φ_A
/// balance at the initial input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialPhi {
    Value(f64),
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Initial state with φ_A possibly still to be resolved.
    pub initial: StateVector,
    pub initial_phi: InitialPhi,
    pub theta: ThetaParams,
    pub schedule: Vec<ScheduleEntry>,
    pub faults: Vec<FaultSpec>,
    /// `noise.*` overrides in SI, keyed like the parameter bundle.
    pub noise: Vec<(String, f64)>,
}

const NOISE_KEYS: [(&str, Unit); 10] = [
    ("noise.sigma_da", Unit::MicrometrePerSecond),
    ("noise.sigma_Vl", Unit::MillilitrePerSecond),
    ("noise.sigma_drT", Unit::MicrometrePerSecond),
    ("noise.sigma_drN", Unit::MicrometrePerSecond),
    ("noise.sigma_phiA", Unit::PerSecond),
    ("noise.sigma_Lw", Unit::Micrometre),
    ("noise.sigma_Lo", Unit::Micrometre),
    ("noise.sigma_Pc", Unit::Pascal),
    ("noise.sigma_Ps", Unit::Pascal),
    ("noise.sigma_Qm", Unit::Sccm),
];

const INITIAL_KEYS: [(&str, Dimension); 4] = [
    ("initial.d_a", Dimension::Length),
    ("initial.V_l", Dimension::Volume),
    ("initial.dr_T", Dimension::Length),
    ("initial.dr_N", Dimension::Length),
];

impl Scenario {
    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        let need = |key: &str| cfg.get(key).ok_or_else(|| TwinError::Config {
            path: cfg.source.clone(),
            line: 0,
            message: format!("missing key `{key}`"),
        });
        let duration = cfg.number(need("duration")?, Dimension::Time)?;
        let dt = match cfg.get("dt") {
            Some(e) => cfg.number(e, Dimension::Time)?,
            None => 1.0,
        };
        let seed = match cfg.get("seed") {
            Some(e) => cfg.integer(e)?,
            None => 0,
        };
        let mut init = [0.0; 5];
        for (i, (key, dim)) in INITIAL_KEYS.iter().enumerate() {
            init[i] = match cfg.get(key) {
                Some(e) => cfg.number(e, *dim)?,
                None if i >= 2 => 0.0,
                None => return Err(need(key).unwrap_err()),
            };
        }
        let initial_phi = match cfg.get("initial.phi_A") {
            None => InitialPhi::Equilibrium,
            Some(e) if e.raw == "equilibrium" => InitialPhi::Equilibrium,
            Some(e) => InitialPhi::Value(cfg.number(e, Dimension::Scalar)?),
        };
        let mut theta = [0.0; 5];
        for (i, key) in ThetaParams::KEYS.iter().enumerate() {
            if let Some(e) = cfg.get(key) {
                theta[i] = cfg.number(e, Dimension::Rate)?;
            }
        }

        let mut schedule = Vec::new();
        let mut carry: Option<InputVector> = None;
        for (idx, entries) in cfg.indexed("schedule")? {
            let field = |name: &str| entries.iter().find(|e| e.key == format!("schedule.{idx}.{name}")).copied();
            for e in &entries {
                let name = e.key.rsplit('.').next().unwrap_or("");
                if !["t", "I_A", "Q_c", "Q_s"].contains(&name) {
                    return Err(cfg.err(e, &format!("unknown schedule field `{name}`")));
                }
            }
            let t_entry = field("t").ok_or_else(|| cfg.err(entries[0], "schedule entry lacks `t`"))?;
            let t = cfg.number(t_entry, Dimension::Time)?;
            let get = |name: &str, dim: Dimension, prev: Option<f64>| -> Result<f64> {
                match field(name) {
                    Some(e) => cfg.number(e, dim),
                    None => prev.ok_or_else(|| cfg.err(t_entry, &format!("first schedule entry needs `{name}`"))),
                }
            };
            let u = InputVector::new(
                get("I_A", Dimension::Current, carry.map(|u| u.i_a))?,
                get("Q_c", Dimension::Flow, carry.map(|u| u.q_c))?,
                get("Q_s", Dimension::Flow, carry.map(|u| u.q_s))?,
            );
            carry = Some(u);
            schedule.push(ScheduleEntry { t, u });
        }

        let mut faults = Vec::new();
        for (idx, entries) in cfg.indexed("fault")? {
            let field = |name: &str| entries.iter().find(|e| e.key == format!("fault.{idx}.{name}")).copied();
            let kind_e = field("kind").ok_or_else(|| cfg.err(entries[0], "fault lacks `kind`"))?;
            let kind: FaultKind = kind_e.raw.parse().map_err(|e: TwinError| cfg.err(kind_e, &e.to_string()))?;
            let onset = cfg.number(field("onset").ok_or_else(|| cfg.err(kind_e, "fault lacks `onset`"))?, Dimension::Time)?;
            let mag_e = field("magnitude").ok_or_else(|| cfg.err(kind_e, "fault lacks `magnitude`"))?;
            let magnitude = cfg.number(mag_e, kind.magnitude_unit().dimension())?;
            faults.push(FaultSpec { kind, onset, magnitude });
        }

        let mut noise = Vec::new();
        for (key, unit) in NOISE_KEYS {
            if let Some(e) = cfg.get(key) {
                noise.push((key.to_string(), cfg.number(e, unit.dimension())?));
            }
        }

        for e in &cfg.entries {
            let k = e.key.as_str();
            let known = ["duration", "dt", "seed", "initial.phi_A"].contains(&k)
                || INITIAL_KEYS.iter().any(|(n, _)| *n == k)
                || ThetaParams::KEYS.contains(&k)
                || NOISE_KEYS.iter().any(|(n, _)| *n == k)
                || k.starts_with("schedule.")
                || k.starts_with("fault.");
            if !known {
                return Err(cfg.err(e, &format!("unknown key `{k}`")));
            }
        }

        let s = Self {
            duration,
            dt,
            seed,
            initial: StateVector::from_array([init[0], init[1], init[2], init[3], 0.0]),
            initial_phi,
            theta: ThetaParams::from_array(theta),
            schedule,
            faults,
            noise,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn parse(source: &str, text: &str) -> Result<Self> {
        Self::from_config(&FlatConfig::parse(source, text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(&FlatConfig::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TwinError::InvalidInput(m));
        if !(self.duration >= 0.0) || !(self.dt > 0.0) || (self.duration > 0.0 && self.dt > self.duration) {
            return bad("need dt > 0, duration >= 0 and dt <= duration".into());
        }
        let Some(first) = self.schedule.first() else {
            return bad("schedule is empty".into());
        };
        if first.t != 0.0 {
            return bad("first schedule entry must be at t = 0".into());
        }
        for w in self.schedule.windows(2) {
            if !(w[1].t > w[0].t) {
                return bad("schedule times must be strictly increasing".into());
            }
        }
        for e in &self.schedule {
            if e.t > self.duration {
                return bad(format!("schedule time {} s beyond duration", e.t));
            }
            if !e.u.is_valid() {
                return bad(format!("invalid input at t = {} s", e.t));
            }
        }
        for f in &self.faults {
            if !(f.onset >= 0.0 && f.onset <= self.duration) {
                return bad(format!("{} onset outside the scenario", f.kind.name()));
            }
            if f.kind == FaultKind::AtomizerDropout && !(0.0..=1.0).contains(&f.magnitude) {
                return bad("atomizer-dropout magnitude must lie in [0, 1]".into());
            }
        }
        let x = self.initial;
        if !(x.d_a > 0.0) || x.v_l < 0.0 || x.dr_tube < 0.0 || x.dr_nozzle < 0.0 {
            return bad("initial state outside the physical range".into());
        }
        if let InitialPhi::Value(p) = self.initial_phi {
            if !(p >= 0.0) {
                return bad("initial phi_A must be >= 0".into());
            }
        }
        if !self.theta.is_finite() {
            return bad("theta must be finite".into());
        }
        for (k, v) in &self.noise {
            if !(*v >= 0.0) {
                return bad(format!("{k} must be >= 0"));
            }
        }
        Ok(())
    }

    /// Number of recorded steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn input_at(&self, t: f64) -> InputVector {
        let eps = 1e-9 * self.dt;
        self.schedule.iter().rev().find(|e| e.t <= t + eps).unwrap_or(&self.schedule[0]).u
    }

    /// Parameters with the scenario's noise overrides applied.
    pub fn effective_params(&self, params: &ModelParams) -> ModelParams {
        let mut p = params.clone();
        for (k, v) in &self.noise {
            let i = NOISE_KEYS.iter().position(|(n, _)| n == k).expect("validated key");
            if i < 5 {
                p.noise.sigma_xi[i] = *v;
            } else {
                p.noise.sigma_w[i - 5] = *v;
            }
        }
        p
    }

    /// Initial state with φ_A resolved against `params`.
    pub fn initial_state(&self, params: &ModelParams) -> Result<StateVector> {
        let mut x = self.initial;
        x.phi_a = match self.initial_phi {
            InitialPhi::Value(v) => v,
            InitialPhi::Equilibrium => equilibrium_phi(&x, &self.schedule[0].u, params)?,
        };
        Ok(x)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "duration = {}", format_value(self.duration, Unit::Second));
        let _ = writeln!(s, "dt = {}", format_value(self.dt, Unit::Second));
        let _ = writeln!(s, "seed = {}", self.seed);
        let units = [Unit::Micrometre, Unit::Millilitre, Unit::Micrometre, Unit::Micrometre];
        for (i, ((key, _), unit)) in INITIAL_KEYS.iter().zip(units).enumerate() {
            let _ = writeln!(s, "{key} = {}", format_value(self.initial.get(i), unit));
        }
        match self.initial_phi {
            InitialPhi::Equilibrium => s.push_str("initial.phi_A = equilibrium\n"),
            InitialPhi::Value(v) => {
                let _ = writeln!(s, "initial.phi_A = {v:e}");
            }
        }
        for (key, v) in ThetaParams::KEYS.iter().zip(self.theta.to_array()) {
            if v != 0.0 {
                let _ = writeln!(s, "{key} = {v:e} 1/s");
            }
        }
        for (i, e) in self.schedule.iter().enumerate() {
            let _ = writeln!(s, "schedule.{i}.t = {}", format_value(e.t, Unit::Second));
            let _ = writeln!(s, "schedule.{i}.I_A = {}", format_value(e.u.i_a, Unit::Milliamp));
            let _ = writeln!(s, "schedule.{i}.Q_c = {}", format_value(e.u.q_c, Unit::Sccm));
            let _ = writeln!(s, "schedule.{i}.Q_s = {}", format_value(e.u.q_s, Unit::Sccm));
        }
        for (i, f) in self.faults.iter().enumerate() {
            let _ = writeln!(s, "fault.{i}.kind = {}", f.kind.name());
            let _ = writeln!(s, "fault.{i}.onset = {}", format_value(f.onset, Unit::Second));
            let _ = writeln!(s, "fault.{i}.magnitude = {}", format_value(f.magnitude, f.kind.magnitude_unit()));
        }
        for (k, v) in &self.noise {
            let unit = NOISE_KEYS.iter().find(|(n, _)| n == k).map(|(_, u)| *u).unwrap_or(Unit::Dimensionless);
            let _ = writeln!(s, "{k} = {}", format_value(*v, unit));
        }
        s
    }
}

/// Steady state of the φ_A balance with θ = 0: `Q_c φ² + Q_c φ − H = 0`.
pub fn equilibrium_phi(x: &StateVector, u: &InputVector, params: &ModelParams) -> Result<f64> {
    let h = net_generation_h(u.q_c, x.v_l, u.i_a, &params.generation)?.rate;
    if h <= 0.0 || u.q_c <= 0.0 {
        return Ok(0.0);
    }
    let q = u.q_c;
    Ok(2.0 * h / (q + (q * q + 4.0 * q * h).sqrt()))
}
