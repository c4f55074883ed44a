//! Droplet loss in the carrier tube (gravitational settling) and in the nozzle
//! (Brownian diffusion).
//!
//! Deposition probabilities are computed directly rather than as `1 - survival`
//! so that the tiny values at realistic droplet sizes keep full relative
//! precision; the transition Jacobian is taken by finite differences of them.

use std::f64::consts::PI;

use crate::error::{Result, TwinError};
use crate::params::GeometryConstants;
use crate::physics::droplet::DropletDistribution;
use crate::physics::quadrature::QuadratureRule;

/// Terminal settling velocity µ_TS (m/s).
pub fn settling_velocity(d: f64, geom: &GeometryConstants) -> f64 {
    geom.rho_p * d * d * geom.gravity * geom.slip_correction / (18.0 * geom.eta_g)
}

fn check_tube(dr_t: f64, geom: &GeometryConstants) -> Result<f64> {
    let r = geom.r_tube0 - dr_t;
    if !(dr_t < geom.r_tube0) {
        return Err(TwinError::BlockedTube { dr: dr_t, radius: geom.r_tube0 });
    }
    Ok(r)
}

/// Cube of the dimensionless settling parameter α divided by d².
fn alpha_cubed_per_d2(q_c: f64, dr_t: f64, geom: &GeometryConstants) -> Result<f64> {
    if !(q_c > 0.0) {
        return Err(TwinError::UndefinedTransport);
    }
    let r = check_tube(dr_t, geom)?;
    let mean_velocity = q_c / (PI * r * r);
    let ts_per_d2 = geom.rho_p * geom.gravity * geom.slip_correction / (18.0 * geom.eta_g);
    Ok(3.0 * geom.l_tube * ts_per_d2 / (8.0 * mean_velocity * r))
}

/// α for a droplet of diameter `d`, clamped to [0, 1].
pub fn gravitational_alpha(d: f64, q_c: f64, dr_t: f64, geom: &GeometryConstants) -> Result<f64> {
    let a3 = alpha_cubed_per_d2(q_c, dr_t, geom)? * d * d;
    Ok(a3.cbrt().clamp(0.0, 1.0))
}

/// Probability of settling onto the tube wall given α.
pub fn gravitational_deposition_from_alpha(alpha: f64) -> f64 {
    if !(alpha > 0.0) {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    let beta = (1.0 - alpha * alpha).sqrt();
    let z = 2.0 * alpha.asin();
    // asin α − αβ = (z − sin z)/2; expanded for small z to avoid cancellation.
    let z_minus_sin = if z < 0.2 {
        let z2 = z * z;
        z * z2 * (1.0 / 6.0 - z2 * (1.0 / 120.0 - z2 * (1.0 / 5040.0 - z2 * (1.0 / 362_880.0 - z2 / 39_916_800.0))))
    } else {
        z - z.sin()
    };
    let p = (2.0 / PI) * (0.5 * z_minus_sin + 2.0 * alpha * alpha * alpha * beta);
    p.clamp(0.0, 1.0)
}

/// Probability that a droplet traverses the tube without settling.
pub fn survival_gravitational(d: f64, q_c: f64, dr_t: f64, geom: &GeometryConstants) -> Result<f64> {
    let alpha = gravitational_alpha(d, q_c, dr_t, geom)?;
    Ok(1.0 - gravitational_deposition_from_alpha(alpha))
}

/// Brownian diffusivity (m²/s).
pub fn stokes_einstein_d(d: f64, geom: &GeometryConstants) -> Result<f64> {
    if !(d > 0.0) {
        return Err(TwinError::InvalidInput(format!("diameter must be > 0, got {d:e}")));
    }
    Ok(geom.k_boltzmann * geom.t_ambient * geom.slip_correction / (2.0 * PI * geom.eta_g * d))
}

/// Solves `s³(2 − s) = rhs` for `s = 1 − x_c` on [0, 1] by bisection.
fn solve_gap(rhs: f64) -> f64 {
    if rhs <= 0.0 {
        return 0.0;
    }
    if rhs >= 1.0 {
        return 1.0;
    }
    // s³ ≤ s³(2 − s) ≤ 2s³ brackets the root.
    let mut lo = (0.5 * rhs).cbrt();
    let mut hi = rhs.cbrt().min(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * mid * mid * (2.0 - mid) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Critical radius x_c solving `(1 − x_c)²(1 − x_c²) = rhs`; `None` when
/// `rhs ≥ 1` (no surviving core).
pub fn critical_radius(rhs: f64) -> Option<f64> {
    if rhs >= 1.0 {
        return None;
    }
    Some(1.0 - solve_gap(rhs))
}

/// Diffusional deposition probability for dimensionless group `rhs = πLD/Q`.
pub fn diffusion_deposition_from_rhs(rhs: f64) -> f64 {
    if rhs >= 1.0 {
        return 1.0;
    }
    let s = solve_gap(rhs);
    let v = s * (2.0 - s);
    v * v
}

pub fn diffusion_group(d: f64, q_total: f64, length: f64, geom: &GeometryConstants) -> Result<f64> {
    if !(q_total > 0.0) {
        return Err(TwinError::UndefinedTransport);
    }
    Ok(PI * length * stokes_einstein_d(d, geom)? / q_total)
}

/// Probability that a droplet crosses a channel of length `length` without
/// diffusing to the wall.
pub fn survival_diffusion(d: f64, q_total: f64, length: f64, geom: &GeometryConstants) -> Result<f64> {
    let rhs = diffusion_group(d, q_total, length, geom)?;
    match critical_radius(rhs) {
        None => Ok(0.0),
        Some(x) => Ok((x * x * (2.0 - x * x)).clamp(0.0, 1.0)),
    }
}

/// Per-node nozzle deposition probabilities; depends on the inputs only, so
/// it is reused across the perturbed evaluations of a Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct NozzleKernel {
    pub q_total: f64,
    pub deposition: Vec<f64>,
}

impl NozzleKernel {
    pub fn new(q_total: f64, geom: &GeometryConstants, rule: &QuadratureRule) -> Result<Self> {
        if !(q_total > 0.0) {
            return Err(TwinError::UndefinedTransport);
        }
        let deposition = rule
            .d
            .iter()
            .map(|&d| diffusion_group(d, q_total, geom.l_nozzle, geom).map(diffusion_deposition_from_rhs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { q_total, deposition })
    }
}

/// Droplet-weighted settling fraction `∫ (1 − P_grav) p dd`.
pub fn tube_loss_fraction(
    dist: &DropletDistribution,
    q_c: f64,
    dr_t: f64,
    geom: &GeometryConstants,
    rule: &QuadratureRule,
) -> Result<f64> {
    let k = alpha_cubed_per_d2(q_c, dr_t, geom)?;
    Ok(dist.integrate(rule, |_, d| gravitational_deposition_from_alpha((k * d * d).cbrt().min(1.0))))
}

pub fn nozzle_loss_fraction(dist: &DropletDistribution, kernel: &NozzleKernel, rule: &QuadratureRule) -> f64 {
    dist.integrate(rule, |i, _| kernel.deposition[i])
}

/// Physics part of dΔr_T/dt (m/s), without the θ term.
pub fn tube_deposition_rate(
    d_median: f64,
    phi_a: f64,
    q_c: f64,
    dr_t: f64,
    geom: &GeometryConstants,
    rule: &QuadratureRule,
) -> Result<f64> {
    let r = check_tube(dr_t, geom)?;
    let q_d = phi_a * q_c;
    if q_d == 0.0 {
        return Ok(0.0);
    }
    let dist = DropletDistribution::from_median(d_median)?;
    Ok(q_d / (2.0 * PI * r * geom.l_tube) * tube_loss_fraction(&dist, q_c, dr_t, geom, rule)?)
}

/// Physics part of dΔr_N/dt (m/s), without the θ term.
pub fn nozzle_deposition_rate(
    d_median: f64,
    phi_a: f64,
    q_c: f64,
    dr_n: f64,
    kernel: &NozzleKernel,
    geom: &GeometryConstants,
    rule: &QuadratureRule,
) -> Result<f64> {
    if !(dr_n < geom.r_nozzle0) {
        return Err(TwinError::CloggedNozzle { dr: dr_n, radius: geom.r_nozzle0 });
    }
    let q_d = phi_a * q_c;
    if q_d == 0.0 {
        return Ok(0.0);
    }
    let dist = DropletDistribution::from_median(d_median)?;
    let r = geom.r_nozzle0 - dr_n;
    Ok(q_d / (2.0 * PI * r * geom.l_nozzle) * nozzle_loss_fraction(&dist, kernel, rule))
}
