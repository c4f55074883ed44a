//! The canonical parameter bundle and its validation.

use crate::units::{MICROMETRE, MILLILITRE, SCCM};

/// Carrier-gas viscosity as printed in the droplet-transport parameter table.
/// The magnitude equals the ink surface tension; kept because the deposition
/// model was tuned against it.
pub const ETA_G_TABLE: f64 = 72.0e-3;
/// Dynamic viscosity of N₂ near room temperature (Pa·s).
pub const ETA_N2: f64 = 1.8e-5;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Tube, nozzle and vial geometry, material constants and the fixed part of
/// the fluidic resistance network.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConstants {
    pub l_tube: f64,
    pub r_tube0: f64,
    pub l_nozzle: f64,
    pub r_nozzle0: f64,
    pub v_vial: f64,
    pub rho_p: f64,
    /// Gas viscosity used in settling velocity and Stokes–Einstein diffusivity.
    pub eta_g: f64,
    /// Viscosity used for the carrier-tube Poiseuille resistance.
    pub eta_ink: f64,
    pub gravity: f64,
    pub k_boltzmann: f64,
    pub t_ambient: f64,
    pub slip_correction: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r1_sh: f64,
    pub r2_sh: f64,
    pub r3_sh: f64,
    pub r1_n: f64,
    pub r2_n: f64,
    /// Nozzle-tip resistance polynomial, argument in µm, result in Pa·s/m³.
    pub tip_poly: [f64; 8],
}

impl Default for GeometryConstants {
    fn default() -> Self {
        Self {
            l_tube: 0.4572,
            r_tube0: 7.89e-4,
            l_nozzle: 6.32e-3,
            r_nozzle0: 35.0e-6,
            v_vial: 5.0e-6,
            rho_p: 5804.0,
            eta_g: ETA_G_TABLE,
            eta_ink: 17.5,
            gravity: 9.8,
            k_boltzmann: BOLTZMANN,
            t_ambient: 293.0,
            slip_correction: 1.0,
            r1: 1.1972e4,
            r2: 5.6305e4,
            r3: 6.9590e5,
            r1_sh: 2.185e5,
            r2_sh: 175.66,
            r3_sh: 1.28e6,
            r1_n: 5.36e6,
            r2_n: 6.07e7,
            tip_poly: [4.57e9, 2.75e9, -7.96e8, 9.73e7, -5.81e6, 1.83e5, -2.92e3, 18.67],
        }
    }
}

/// Coefficients of one line-quality polynomial (linewidth or overspray). SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCoefficients {
    /// m per m of median diameter.
    pub alpha_da: f64,
    /// m per unit aerosol volume fraction.
    pub alpha_phia: f64,
    /// Nozzle-deposit terms: m/m, 1/m, 1/m².
    pub alpha_drn: [f64; 3],
    /// m per m³/s of carrier flow.
    pub beta_c: f64,
    /// m per m³/s of sheath flow.
    pub beta_s: f64,
    /// m.
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputCoefficients {
    pub linewidth: LineCoefficients,
    pub overspray: LineCoefficients,
    /// Silver volume fraction of the ink.
    pub phi_m: f64,
}

impl Default for OutputCoefficients {
    /// Sign pattern: both widths shrink with droplet size, grow with carrier
    /// flow and aerosol loading, shrink with sheath flow, and grow cubically
    /// with nozzle deposit. Nominal point gives roughly 40 µm / 71 µm.
    fn default() -> Self {
        let per_um = |v: f64| v / MICROMETRE;
        let per_um2 = |v: f64| v / (MICROMETRE * MICROMETRE);
        let um_per_sccm = |v: f64| v * MICROMETRE / SCCM;
        Self {
            linewidth: LineCoefficients {
                alpha_da: -12.0,
                alpha_phia: 1.0 * MICROMETRE / 1.0e-7,
                alpha_drn: [0.5, per_um(0.05), per_um2(0.01)],
                beta_c: um_per_sccm(0.8),
                beta_s: um_per_sccm(-0.3),
                gamma: 66.0 * MICROMETRE,
            },
            overspray: LineCoefficients {
                alpha_da: -8.0,
                alpha_phia: 12.0 * MICROMETRE / 1.0e-7,
                alpha_drn: [1.0, per_um(0.1), per_um2(0.02)],
                beta_c: um_per_sccm(1.5),
                beta_s: um_per_sccm(-0.4),
                gamma: 16.5 * MICROMETRE,
            },
            phi_m: 0.087,
        }
    }
}

/// Quadratic net droplet generation fit, evaluated in sccm / mL / mA and
/// returning µm³/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationCoefficients {
    pub qc_qc: f64,
    pub vl_qc: f64,
    pub qc_ia: f64,
    pub ia_vl: f64,
    pub vl: f64,
    pub qc: f64,
    pub ia: f64,
    pub constant: f64,
}

impl Default for GenerationCoefficients {
    fn default() -> Self {
        Self {
            qc_qc: 3.3e2,
            vl_qc: 2.7e4,
            qc_ia: 66.0,
            ia_vl: 2.1e2,
            vl: -5.2e5,
            qc: -4.8e4,
            ia: -1.1e3,
            constant: 7.7e5,
        }
    }
}

/// Standard deviations of process (per √s) and measurement noise. SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_xi: [f64; 5],
    pub sigma_w: [f64; 5],
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_xi: [0.1 * MICROMETRE, 1e-3 * MILLILITRE, 1e-3 * MICROMETRE, 3.35e-3 * MICROMETRE, 1e-8],
            sigma_w: [3.0 * MICROMETRE, 5.0 * MICROMETRE, 10.0, 10.0, 1e-5 * SCCM],
        }
    }
}

impl NoiseSpec {
    pub fn process_covariance(&self) -> [f64; 5] {
        self.sigma_xi.map(|s| s * s)
    }

    pub fn measurement_covariance(&self) -> [f64; 5] {
        self.sigma_w.map(|s| s * s)
    }
}

/// Numerical and operational settings that are not physics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessSettings {
    /// Platen (print) speed, m/s.
    pub platen_speed: f64,
    /// Assumed vial fill when fitting the initial state (m³).
    pub initial_fill: f64,
    pub quadrature_nodes: usize,
    pub diameter_min: f64,
    pub diameter_max: f64,
}

impl Default for ProcessSettings {
    fn default() -> Self {
        Self {
            platen_speed: 2.0e-3,
            initial_fill: 1.0 * MILLILITRE,
            quadrature_nodes: 64,
            diameter_min: 0.1 * MICROMETRE,
            diameter_max: 20.0 * MICROMETRE,
        }
    }
}

/// Everything the model needs besides state, input and θ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    pub geometry: GeometryConstants,
    pub outputs: OutputCoefficients,
    pub generation: GenerationCoefficients,
    pub noise: NoiseSpec,
    pub process: ProcessSettings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Lists every invariant the bundle breaks; empty means valid.
pub fn validate_parameters(p: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = &p.geometry;
    let positive = [
        ("geometry.L_T", g.l_tube),
        ("geometry.r_T0", g.r_tube0),
        ("geometry.L_N", g.l_nozzle),
        ("geometry.r_N0", g.r_nozzle0),
        ("geometry.V_v", g.v_vial),
        ("geometry.rho_p", g.rho_p),
        ("geometry.eta_g", g.eta_g),
        ("geometry.eta_ink", g.eta_ink),
        ("geometry.g", g.gravity),
        ("geometry.k_B", g.k_boltzmann),
        ("geometry.T_amb", g.t_ambient),
        ("geometry.C_c", g.slip_correction),
        ("process.platen_speed", p.process.platen_speed),
        ("process.diameter_min", p.process.diameter_min),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            out.push(Violation::new(name, "must be finite and > 0"));
        }
    }
    let resistances = [
        ("geometry.R_1", g.r1),
        ("geometry.R_2", g.r2),
        ("geometry.R_3", g.r3),
        ("geometry.R_1sh", g.r1_sh),
        ("geometry.R_2sh", g.r2_sh),
        ("geometry.R_3sh", g.r3_sh),
        ("geometry.R_1N", g.r1_n),
        ("geometry.R_2N", g.r2_n),
    ];
    for (name, v) in resistances {
        if !(v.is_finite() && v >= 0.0) {
            out.push(Violation::new(name, "resistance must be finite and >= 0"));
        }
    }
    if g.tip_poly.iter().any(|c| !c.is_finite()) {
        out.push(Violation::new("geometry.tip_poly", "non-finite coefficient"));
    }
    let phi_m = p.outputs.phi_m;
    if !(phi_m > 0.0 && phi_m < 1.0) {
        out.push(Violation::new("outputs.phi_m", "phi_m out of range (0, 1)"));
    }
    for (label, c) in [("lw", &p.outputs.linewidth), ("lo", &p.outputs.overspray)] {
        let all = [c.alpha_da, c.alpha_phia, c.alpha_drn[0], c.alpha_drn[1], c.alpha_drn[2], c.beta_c, c.beta_s, c.gamma];
        if all.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new(format!("outputs.{label}"), "non-finite coefficient"));
        }
    }
    let h = &p.generation;
    if [h.qc_qc, h.vl_qc, h.qc_ia, h.ia_vl, h.vl, h.qc, h.ia, h.constant].iter().any(|v| !v.is_finite()) {
        out.push(Violation::new("generation", "non-finite coefficient"));
    }
    for (i, s) in p.noise.sigma_xi.iter().enumerate() {
        if !(s.is_finite() && *s > 0.0) {
            out.push(Violation::new(format!("noise.sigma_xi[{i}]"), "non-positive noise"));
        }
    }
    for (i, s) in p.noise.sigma_w.iter().enumerate() {
        if !(s.is_finite() && *s > 0.0) {
            out.push(Violation::new(format!("noise.sigma_w[{i}]"), "non-positive noise"));
        }
    }
    let pr = &p.process;
    if !(pr.initial_fill >= 0.0 && pr.initial_fill < g.v_vial) {
        out.push(Violation::new("process.initial_fill", "must lie in [0, V_v)"));
    }
    if !(pr.diameter_max > pr.diameter_min) {
        out.push(Violation::new("process.diameter_max", "must exceed diameter_min"));
    }
    if pr.quadrature_nodes < 2 {
        out.push(Violation::new("process.quadrature_nodes", "need at least 2 nodes"));
    }
    out
}
