//! Flat `key = value [unit]` text format used for parameter bundles,
//! scenarios and θ files.
//!
//! ```text
//! # comment
//! geometry.r_N0 = 35 um
//! outputs.phi_m = 0.087
//! fault.0.kind = mfc-pressure-drift
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, TwinError};
use crate::params::ModelParams;
use crate::types::ThetaParams;
use crate::units::{Dimension, Unit};

/// Environment variable that overrides the parameter-bundle path.
pub const PARAMS_ENV: &str = "AJTWIN_PARAMS";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub raw: String,
    pub line: usize,
}

/// Parsed flat file, keys in file order.
#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    pub source: String,
    pub entries: Vec<Entry>,
}

impl FlatConfig {
    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_err(source, line, "expected `key = value`"));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(config_err(source, line, "malformed key"));
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(config_err(source, line, &format!("duplicate key `{key}`")));
            }
            entries.push(Entry { key: key.to_string(), raw: value.trim().to_string(), line });
        }
        Ok(Self { source: source.to_string(), entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn err(&self, entry: &Entry, message: &str) -> TwinError {
        config_err(&self.source, entry.line, message)
    }

    /// Numeric value converted to SI; the unit must match `dim`.
    pub fn number(&self, entry: &Entry, dim: Dimension) -> Result<f64> {
        let mut parts = entry.raw.split_whitespace();
        let num = parts.next().ok_or_else(|| self.err(entry, "missing value"))?;
        let value: f64 = num.parse().map_err(|_| self.err(entry, &format!("not a number: `{num}`")))?;
        if !value.is_finite() {
            return Err(self.err(entry, "value must be finite"));
        }
        let unit: Unit = match parts.next() {
            Some(tag) => tag.parse().map_err(|e: TwinError| self.err(entry, &e.to_string()))?,
            None => Unit::Dimensionless,
        };
        if parts.next().is_some() {
            return Err(self.err(entry, "trailing tokens after unit"));
        }
        if unit.dimension() != dim {
            return Err(self.err(entry, &format!("unit `{unit}` does not match the expected quantity")));
        }
        Ok(crate::units::to_si(value, unit))
    }

    pub fn integer(&self, entry: &Entry) -> Result<u64> {
        entry.raw.parse().map_err(|_| self.err(entry, "expected a non-negative integer"))
    }

    /// Groups `prefix.N.field` keys by their index N.
    pub fn indexed(&self, prefix: &str) -> Result<BTreeMap<usize, Vec<&Entry>>> {
        let mut out: BTreeMap<usize, Vec<&Entry>> = BTreeMap::new();
        let dotted = format!("{prefix}.");
        for e in &self.entries {
            if let Some(rest) = e.key.strip_prefix(&dotted) {
                let (idx, _) = rest.split_once('.').ok_or_else(|| self.err(e, "expected prefix.N.field"))?;
                let idx: usize = idx.parse().map_err(|_| self.err(e, "list index must be an integer"))?;
                out.entry(idx).or_default().push(e);
            }
        }
        Ok(out)
    }
}

fn config_err(source: &str, line: usize, message: &str) -> TwinError {
    TwinError::Config { path: source.to_string(), line, message: message.to_string() }
}

/// Formats a value with a unit for writing; shortest round-trip float text.
pub fn format_value(si: f64, unit: Unit) -> String {
    let v = crate::units::from_si(si, unit);
    match unit {
        Unit::Dimensionless => format!("{v:e}"),
        _ => format!("{v} {unit}"),
    }
}

type Getter = fn(&ModelParams) -> f64;
type Setter = fn(&mut ModelParams, f64);

struct Field {
    key: &'static str,
    unit: Unit,
    get: Getter,
    set: Setter,
}

macro_rules! field {
    ($key:literal, $unit:expr, |$p:ident| $path:expr) => {
        Field {
            key: $key,
            unit: $unit,
            get: |$p: &ModelParams| $path,
            set: |$p: &mut ModelParams, v: f64| $path = v,
        }
    };
}

fn fields() -> Vec<Field> {
    use Unit::*;
    let mut f = vec![
        field!("geometry.L_T", Metre, |p| p.geometry.l_tube),
        field!("geometry.r_T0", Micrometre, |p| p.geometry.r_tube0),
        field!("geometry.L_N", Metre, |p| p.geometry.l_nozzle),
        field!("geometry.r_N0", Micrometre, |p| p.geometry.r_nozzle0),
        field!("geometry.V_v", Millilitre, |p| p.geometry.v_vial),
        field!("geometry.rho_p_kg_per_m3", Dimensionless, |p| p.geometry.rho_p),
        field!("geometry.eta_g_Pa_s", Dimensionless, |p| p.geometry.eta_g),
        field!("geometry.eta_ink_Pa_s", Dimensionless, |p| p.geometry.eta_ink),
        field!("geometry.g_m_per_s2", Dimensionless, |p| p.geometry.gravity),
        field!("geometry.k_B_J_per_K", Dimensionless, |p| p.geometry.k_boltzmann),
        field!("geometry.T_amb", Kelvin, |p| p.geometry.t_ambient),
        field!("geometry.C_c", Dimensionless, |p| p.geometry.slip_correction),
        field!("geometry.R_1", Dimensionless, |p| p.geometry.r1),
        field!("geometry.R_2", Dimensionless, |p| p.geometry.r2),
        field!("geometry.R_3", Dimensionless, |p| p.geometry.r3),
        field!("geometry.R_1sh", Dimensionless, |p| p.geometry.r1_sh),
        field!("geometry.R_2sh", Dimensionless, |p| p.geometry.r2_sh),
        field!("geometry.R_3sh", Dimensionless, |p| p.geometry.r3_sh),
        field!("geometry.R_1N", Dimensionless, |p| p.geometry.r1_n),
        field!("geometry.R_2N", Dimensionless, |p| p.geometry.r2_n),
        field!("geometry.tip.a0", Dimensionless, |p| p.geometry.tip_poly[0]),
        field!("geometry.tip.a1", Dimensionless, |p| p.geometry.tip_poly[1]),
        field!("geometry.tip.a2", Dimensionless, |p| p.geometry.tip_poly[2]),
        field!("geometry.tip.a3", Dimensionless, |p| p.geometry.tip_poly[3]),
        field!("geometry.tip.a4", Dimensionless, |p| p.geometry.tip_poly[4]),
        field!("geometry.tip.a5", Dimensionless, |p| p.geometry.tip_poly[5]),
        field!("geometry.tip.a6", Dimensionless, |p| p.geometry.tip_poly[6]),
        field!("geometry.tip.a7", Dimensionless, |p| p.geometry.tip_poly[7]),
    ];
    f.extend([
        field!("outputs.lw.alpha_da", Dimensionless, |p| p.outputs.linewidth.alpha_da),
        field!("outputs.lw.alpha_phiA_m", Dimensionless, |p| p.outputs.linewidth.alpha_phia),
        field!("outputs.lw.alpha_drN1", Dimensionless, |p| p.outputs.linewidth.alpha_drn[0]),
        field!("outputs.lw.alpha_drN2_per_m", Dimensionless, |p| p.outputs.linewidth.alpha_drn[1]),
        field!("outputs.lw.alpha_drN3_per_m2", Dimensionless, |p| p.outputs.linewidth.alpha_drn[2]),
        field!("outputs.lw.beta_c_s_per_m2", Dimensionless, |p| p.outputs.linewidth.beta_c),
        field!("outputs.lw.beta_s_s_per_m2", Dimensionless, |p| p.outputs.linewidth.beta_s),
        field!("outputs.lw.gamma", Micrometre, |p| p.outputs.linewidth.gamma),
        field!("outputs.lo.alpha_da", Dimensionless, |p| p.outputs.overspray.alpha_da),
        field!("outputs.lo.alpha_phiA_m", Dimensionless, |p| p.outputs.overspray.alpha_phia),
        field!("outputs.lo.alpha_drN1", Dimensionless, |p| p.outputs.overspray.alpha_drn[0]),
        field!("outputs.lo.alpha_drN2_per_m", Dimensionless, |p| p.outputs.overspray.alpha_drn[1]),
        field!("outputs.lo.alpha_drN3_per_m2", Dimensionless, |p| p.outputs.overspray.alpha_drn[2]),
        field!("outputs.lo.beta_c_s_per_m2", Dimensionless, |p| p.outputs.overspray.beta_c),
        field!("outputs.lo.beta_s_s_per_m2", Dimensionless, |p| p.outputs.overspray.beta_s),
        field!("outputs.lo.gamma", Micrometre, |p| p.outputs.overspray.gamma),
        field!("outputs.phi_m", Dimensionless, |p| p.outputs.phi_m),
        field!("generation.qc_qc", Dimensionless, |p| p.generation.qc_qc),
        field!("generation.vl_qc", Dimensionless, |p| p.generation.vl_qc),
        field!("generation.qc_ia", Dimensionless, |p| p.generation.qc_ia),
        field!("generation.ia_vl", Dimensionless, |p| p.generation.ia_vl),
        field!("generation.vl", Dimensionless, |p| p.generation.vl),
        field!("generation.qc", Dimensionless, |p| p.generation.qc),
        field!("generation.ia", Dimensionless, |p| p.generation.ia),
        field!("generation.constant", Dimensionless, |p| p.generation.constant),
        field!("noise.sigma_da", MicrometrePerSecond, |p| p.noise.sigma_xi[0]),
        field!("noise.sigma_Vl", MillilitrePerSecond, |p| p.noise.sigma_xi[1]),
        field!("noise.sigma_drT", MicrometrePerSecond, |p| p.noise.sigma_xi[2]),
        field!("noise.sigma_drN", MicrometrePerSecond, |p| p.noise.sigma_xi[3]),
        field!("noise.sigma_phiA", PerSecond, |p| p.noise.sigma_xi[4]),
        field!("noise.sigma_Lw", Micrometre, |p| p.noise.sigma_w[0]),
        field!("noise.sigma_Lo", Micrometre, |p| p.noise.sigma_w[1]),
        field!("noise.sigma_Pc", Pascal, |p| p.noise.sigma_w[2]),
        field!("noise.sigma_Ps", Pascal, |p| p.noise.sigma_w[3]),
        field!("noise.sigma_Qm", Sccm, |p| p.noise.sigma_w[4]),
        field!("process.platen_speed", MetrePerSecond, |p| p.process.platen_speed),
        field!("process.initial_fill", Millilitre, |p| p.process.initial_fill),
        field!("process.diameter_min", Micrometre, |p| p.process.diameter_min),
        field!("process.diameter_max", Micrometre, |p| p.process.diameter_max),
    ]);
    f
}

impl ModelParams {
    /// Reads a bundle; keys not present keep their defaults, unknown keys are
    /// errors.
    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        let table = fields();
        let mut p = ModelParams::default();
        for e in &cfg.entries {
            if e.key == "process.quadrature_nodes" {
                p.process.quadrature_nodes = cfg.integer(e)? as usize;
                continue;
            }
            let f = table
                .iter()
                .find(|f| f.key == e.key)
                .ok_or_else(|| cfg.err(e, &format!("unknown key `{}`", e.key)))?;
            (f.set)(&mut p, cfg.number(e, f.unit.dimension())?);
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(&FlatConfig::load(path)?)
    }

    /// Bundle path from the environment override, else `fallback`.
    pub fn resolve_path(fallback: &Path) -> std::path::PathBuf {
        match std::env::var_os(PARAMS_ENV) {
            Some(p) if !p.is_empty() => p.into(),
            _ => fallback.to_path_buf(),
        }
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# aerosol-jet twin parameter bundle\n");
        let mut section = "";
        for f in fields() {
            let head = f.key.split('.').next().unwrap_or("");
            if head != section {
                section = head;
                let _ = writeln!(out, "\n# {head}");
            }
            let _ = writeln!(out, "{} = {}", f.key, format_value((f.get)(self), f.unit));
            if f.key == "process.diameter_max" {
                let _ = writeln!(out, "process.quadrature_nodes = {}", self.process.quadrature_nodes);
            }
        }
        out
    }
}

impl ThetaParams {
    pub const KEYS: [&'static str; 5] = ["theta.da", "theta.Vl", "theta.drT", "theta.drN", "theta.phiA"];

    pub fn from_config(cfg: &FlatConfig) -> Result<Self> {
        let mut a = [0.0; 5];
        for e in &cfg.entries {
            let i = Self::KEYS
                .iter()
                .position(|k| *k == e.key)
                .ok_or_else(|| cfg.err(e, &format!("unknown key `{}`", e.key)))?;
            a[i] = cfg.number(e, Dimension::Rate)?;
        }
        Ok(Self::from_array(a))
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(self.to_array()) {
            let _ = writeln!(out, "{k} = {v:e} 1/s");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bundle_round_trips() {
        let p = ModelParams::default();
        let text = p.to_config_string();
        let back = ModelParams::from_config(&FlatConfig::parse("mem", &text).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn shipped_default_matches_code() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/params/default.params");
        let p = ModelParams::load(&path).unwrap();
        assert_eq!(p, ModelParams::default());
    }

    #[test]
    fn unit_mismatch_and_unknown_keys() {
        let cfg = FlatConfig::parse("mem", "geometry.r_N0 = 35 sccm").unwrap();
        assert!(matches!(ModelParams::from_config(&cfg), Err(TwinError::Config { line: 1, .. })));
        let cfg = FlatConfig::parse("mem", "\n\nbogus.key = 1").unwrap();
        assert!(matches!(ModelParams::from_config(&cfg), Err(TwinError::Config { line: 3, .. })));
        let cfg = FlatConfig::parse("mem", "geometry.r_N0 = 35 furlong").unwrap();
        assert!(ModelParams::from_config(&cfg).is_err());
    }

    #[test]
    fn display_units_are_converted() {
        let cfg = FlatConfig::parse("mem", "geometry.r_N0 = 75 um # tip radius\nnoise.sigma_Lw = 4 um").unwrap();
        let p = ModelParams::from_config(&cfg).unwrap();
        assert!((p.geometry.r_nozzle0 - 75e-6).abs() < 1e-18);
        assert!((p.noise.sigma_w[0] - 4e-6).abs() < 1e-18);
    }

    #[test]
    fn theta_round_trip() {
        let t = ThetaParams::from_array([-2e-5, 0.0, 1e-7, 0.0, 3e-3]);
        let cfg = FlatConfig::parse("mem", &t.to_config_string()).unwrap();
        assert_eq!(ThetaParams::from_config(&cfg).unwrap(), t);
    }
}
