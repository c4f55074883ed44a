//! Log-normal droplet-size distribution with a fixed coefficient of variation.

use std::f64::consts::PI;

use crate::error::{Result, TwinError};
use crate::physics::quadrature::QuadratureRule;

/// Ratio std/mean of the droplet diameter.
pub const COEFFICIENT_OF_VARIATION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropletDistribution {
    pub median: f64,
    /// Mean of ln d.
    pub mu: f64,
    /// Standard deviation of ln d.
    pub sigma: f64,
}

impl DropletDistribution {
    pub fn from_median(median: f64) -> Result<Self> {
        if !(median > 0.0 && median.is_finite()) {
            return Err(TwinError::InvalidInput(format!("droplet median must be > 0, got {median:e}")));
        }
        let sigma = (1.0 + COEFFICIENT_OF_VARIATION * COEFFICIENT_OF_VARIATION).ln().sqrt();
        Ok(Self { median, mu: median.ln(), sigma })
    }

    /// Density of ln d, i.e. `p(d)·d`.
    pub fn log_density(&self, ln_d: f64) -> f64 {
        let z = (ln_d - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    pub fn mode(&self) -> f64 {
        (self.mu - self.sigma * self.sigma).exp()
    }

    /// `∫ F(d) p(d) dd` under the rule.
    pub fn integrate(&self, rule: &QuadratureRule, mut f: impl FnMut(usize, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..rule.len() {
            acc += rule.weights[i] * self.log_density(rule.ln_d[i]) * f(i, rule.d[i]);
        }
        acc
    }

    /// P(d ≤ x) by quadrature from `d_min`.
    pub fn cdf_quadrature(&self, x: f64, d_min: f64, nodes: usize) -> f64 {
        if x <= d_min {
            return 0.0;
        }
        let rule = QuadratureRule::new(nodes, d_min, x);
        self.integrate(&rule, |_, _| 1.0)
    }
}

pub fn lognormal_pdf(d: f64, dist: &DropletDistribution) -> Result<f64> {
    if !(d > 0.0) {
        return Err(TwinError::InvalidInput(format!("diameter must be > 0, got {d:e}")));
    }
    Ok(dist.log_density(d.ln()) / d)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1e-6;

    #[test]
    fn normalised_on_default_range() {
        let dist = DropletDistribution::from_median(3.0 * UM).unwrap();
        let rule = QuadratureRule::new(64, 0.1 * UM, 20.0 * UM);
        assert!((dist.integrate(&rule, |_, _| 1.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn median_is_half_mass() {
        let dist = DropletDistribution::from_median(3.0 * UM).unwrap();
        assert!((dist.cdf_quadrature(3.0 * UM, 0.1 * UM, 64) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn mode_maximises_density() {
        let dist = DropletDistribution::from_median(3.0 * UM).unwrap();
        let mode = dist.mode();
        let p = |d: f64| lognormal_pdf(d, &dist).unwrap();
        let mut best = (0.0, 0.0);
        for i in 1..200_000 {
            let d = i as f64 * 1e-4 * UM;
            let v = p(d);
            if v > best.1 {
                best = (d, v);
            }
        }
        assert!((best.0 - mode).abs() < 2e-4 * UM);
        assert!(p(mode) >= p(mode * 1.001) && p(mode) >= p(mode * 0.999));
    }

    #[test]
    fn coefficient_of_variation_is_quarter() {
        let dist = DropletDistribution::from_median(3.0 * UM).unwrap();
        let rule = QuadratureRule::new(128, 0.1 * UM, 20.0 * UM);
        let mean = dist.integrate(&rule, |_, d| d);
        let second = dist.integrate(&rule, |_, d| d * d);
        let cov = (second - mean * mean).sqrt() / mean;
        assert!((cov - 0.25).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive_diameter() {
        let dist = DropletDistribution::from_median(3.0 * UM).unwrap();
        assert!(lognormal_pdf(0.0, &dist).is_err());
        assert!(DropletDistribution::from_median(-1.0).is_err());
    }
}
