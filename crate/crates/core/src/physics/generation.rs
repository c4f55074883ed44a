//! Net aerosol generation in the atomizer vial.

use crate::error::{Result, TwinError};
use crate::params::GenerationCoefficients;
use crate::units::{MICROMETRE, MILLIAMP, MILLILITRE, SCCM};

/// Bounds of the designed experiment the fit was made on, in fit units.
pub const FIT_CARRIER_SCCM: (f64, f64) = (15.0, 35.0);
pub const FIT_VOLUME_ML: (f64, f64) = (0.5, 1.5);
pub const FIT_CURRENT_MA: (f64, f64) = (300.0, 440.0);

const CUBIC_MICROMETRE: f64 = MICROMETRE * MICROMETRE * MICROMETRE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generation {
    /// Net generation rate (m³/s); may be negative.
    pub rate: f64,
    /// True when the inputs lie outside the fitted box.
    pub extrapolated: bool,
}

/// Evaluates the fit in its native units (sccm, mL, mA → µm³/s).
pub fn generation_fit_units(c: &GenerationCoefficients, qc: f64, vl: f64, ia: f64) -> f64 {
    c.qc_qc * qc * qc + c.vl_qc * vl * qc + c.qc_ia * qc * ia + c.ia_vl * ia * vl + c.vl * vl + c.qc * qc + c.ia * ia
        + c.constant
}

/// `H(Q_c, V_l, I_A)` with SI arguments and result.
pub fn net_generation_h(q_c: f64, v_l: f64, i_a: f64, c: &GenerationCoefficients) -> Result<Generation> {
    if q_c.is_nan() || v_l.is_nan() || i_a.is_nan() {
        return Err(TwinError::InvalidInput("NaN passed to the generation model".into()));
    }
    let qc = q_c / SCCM;
    let vl = v_l / MILLILITRE;
    let ia = i_a / MILLIAMP;
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    let extrapolated = !(inside(qc, FIT_CARRIER_SCCM) && inside(vl, FIT_VOLUME_ML) && inside(ia, FIT_CURRENT_MA));
    Ok(Generation { rate: generation_fit_units(c, qc, vl, ia) * CUBIC_MICROMETRE, extrapolated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_value() {
        let c = GenerationCoefficients::default();
        let g = net_generation_h(25.0 * SCCM, 1.0 * MILLILITRE, 370.0 * MILLIAMP, &c).unwrap();
        assert!((g.rate / CUBIC_MICROMETRE - 2.1245e5).abs() < 1e-6 * 2.1245e5);
        assert!(!g.extrapolated);
    }

    #[test]
    fn extrapolation_flag() {
        let c = GenerationCoefficients::default();
        let g = net_generation_h(40.0 * SCCM, 1.0 * MILLILITRE, 370.0 * MILLIAMP, &c).unwrap();
        assert!(g.extrapolated);
        assert!(net_generation_h(f64::NAN, 1e-6, 0.37, &c).is_err());
    }

    #[test]
    fn curvature_in_carrier() {
        let c = GenerationCoefficients::default();
        let h = 1.0;
        let f = |q: f64| generation_fit_units(&c, q, 1.0, 370.0);
        let second = (f(25.0 + h) - 2.0 * f(25.0) + f(25.0 - h)) / (h * h);
        assert!((second - 2.0 * 330.0).abs() < 1e-6);
    }
}
