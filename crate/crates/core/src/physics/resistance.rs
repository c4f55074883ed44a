//! Fluidic resistance network from the mass-flow controllers to the nozzle tip.

use std::f64::consts::PI;

use crate::error::{Result, TwinError};
use crate::params::GeometryConstants;
use crate::units::MICROMETRE;

/// Range of deposit thickness (µm) covered by the tip-resistance fit.
pub const TIP_FIT_RANGE_UM: (f64, f64) = (0.0, 20.0);

/// Poiseuille resistance of the carrier tube narrowed by deposit `dr_t`.
pub fn resistance_tube(dr_t: f64, geom: &GeometryConstants) -> Result<f64> {
    if !(dr_t < geom.r_tube0) {
        return Err(TwinError::BlockedTube { dr: dr_t, radius: geom.r_tube0 });
    }
    let r = geom.r_tube0 - dr_t;
    Ok(8.0 * geom.eta_ink * geom.l_tube / (PI * r * r * r * r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipResistance {
    pub value: f64,
    /// Argument outside the fitted range.
    pub extrapolated: bool,
}

/// Tapered nozzle-tip resistance as a polynomial in deposit thickness (µm).
pub fn resistance_nozzle_tip(dr_n: f64, geom: &GeometryConstants) -> TipResistance {
    let x = dr_n / MICROMETRE;
    let value = geom.tip_poly.iter().rev().fold(0.0, |acc, a| acc * x + a);
    let extrapolated = !(x >= TIP_FIT_RANGE_UM.0 && x <= TIP_FIT_RANGE_UM.1);
    TipResistance { value, extrapolated }
}

/// The series resistances for a given deposit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Network {
    pub tube: f64,
    pub tip: f64,
    /// R₁ᴺ + R₂ᴺ + R₃ᴺ, shared by both gas paths.
    pub nozzle: f64,
    /// Carrier path total R_c.
    pub carrier: f64,
    /// Sheath path total R_sh.
    pub sheath: f64,
}

impl Network {
    pub fn new(dr_t: f64, dr_n: f64, geom: &GeometryConstants) -> Result<Self> {
        if !(dr_n < geom.r_nozzle0) {
            return Err(TwinError::CloggedNozzle { dr: dr_n, radius: geom.r_nozzle0 });
        }
        let tube = resistance_tube(dr_t, geom)?;
        let tip = resistance_nozzle_tip(dr_n, geom).value;
        let nozzle = geom.r1_n + geom.r2_n + tip;
        let carrier = tube + geom.r1 + geom.r2 + geom.r3 + nozzle;
        let sheath = 0.5 * (geom.r1_sh + geom.r2_sh + geom.r3_sh) + nozzle;
        Ok(Self { tube, tip, nozzle, carrier, sheath })
    }

    /// `(P_c, P_s)` in Pa for flows in m³/s.
    pub fn pressures(&self, q_c: f64, q_s: f64) -> (f64, f64) {
        (q_c * self.carrier + q_s * self.nozzle, q_s * self.sheath + q_c * self.nozzle)
    }
}

pub fn pressures(dr_t: f64, dr_n: f64, q_c: f64, q_s: f64, geom: &GeometryConstants) -> Result<(f64, f64)> {
    Ok(Network::new(dr_t, dr_n, geom)?.pressures(q_c, q_s))
}
