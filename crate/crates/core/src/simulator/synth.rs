//! Synthetic height profiles and their rendered grayscale appearance.
//!
//! The height template is symmetric about r = 0 with main half-width
//! `w_m = L_w/2`:
//!
//! ```text
//! |r| <= w_m          h = h_s + (h_0 − h_s)·cos²(π r / 2 w_m)
//! w_m < |r| <= w_m+w_t h = h_s·(1 − (|r| − w_m)/w_t)
//! otherwise           h = 0
//! ```
//!
//! The shoulder ratio `h_s/h_0` places the 80%-height crossing at
//! `|r| = w_m/2.1`, so the 80% width times 2.1 equals `L_w`. The linear tail
//! reaches 1% of `h_s` at `|r| = L_o/2`, giving `w_t = (L_o/2 − w_m)/0.99`.
//! `h_0` scales the profile so its integral equals `Q_m/ν`.

use std::f64::consts::PI;

use crate::error::{Result, TwinError};
use crate::profile::{CrossSection, ProfileKind, HEIGHT_THRESHOLD, OVERSPRAY_THRESHOLD, WIDTH_RATIO};
use crate::types::OutputVector;

pub const DEFAULT_STRENGTH: f64 = 0.8;
pub const DEFAULT_BACKGROUND: f64 = 200.0;

/// Closed-form template parameters (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Template {
    pub w_m: f64,
    pub w_t: f64,
    pub h0: f64,
    pub h_s: f64,
}

/// `h_s/h_0` such that the 80% crossing sits at `w_m/WIDTH_RATIO`.
pub fn shoulder_ratio() -> f64 {
    let c = (PI / (2.0 * WIDTH_RATIO)).cos().powi(2);
    (HEIGHT_THRESHOLD - c) / (1.0 - c)
}

impl Template {
    pub fn from_outputs(y: &OutputVector, platen_speed: f64) -> Result<Self> {
        if !(y.l_w > 0.0) || !(y.l_o >= y.l_w) || !(y.q_m > 0.0) || !(platen_speed > 0.0) {
            return Err(TwinError::InvalidInput(
                "profile synthesis needs L_o >= L_w > 0, Q_m > 0 and a positive platen speed".into(),
            ));
        }
        let w_m = 0.5 * y.l_w;
        let w_t = (0.5 * y.l_o - w_m) / (1.0 - OVERSPRAY_THRESHOLD);
        let s = shoulder_ratio();
        let area = y.q_m / platen_speed;
        let h0 = area / (2.0 * w_m * s + (1.0 - s) * w_m + s * w_t);
        Ok(Self { w_m, w_t, h0, h_s: s * h0 })
    }

    pub fn height(&self, r: f64) -> f64 {
        let a = r.abs();
        if a <= self.w_m {
            self.h_s + (self.h0 - self.h_s) * (PI * a / (2.0 * self.w_m)).cos().powi(2)
        } else if a < self.w_m + self.w_t {
            self.h_s * (1.0 - (a - self.w_m) / self.w_t)
        } else {
            0.0
        }
    }

    /// Outer edge of the tail.
    pub fn extent(&self) -> f64 {
        self.w_m + self.w_t
    }
}

/// Samples the template on a grid symmetric about 0 with a margin of a
/// quarter of the total extent on each side.
pub fn synth_profile(y: &OutputVector, pitch: f64, platen_speed: f64) -> Result<CrossSection> {
    let tpl = Template::from_outputs(y, platen_speed)?;
    if !(pitch > 0.0) || pitch > y.l_w / 20.0 {
        return Err(TwinError::InvalidInput("grid pitch must be in (0, L_w/20]".into()));
    }
    let half = (1.25 * tpl.extent() / pitch).ceil() as i64;
    let positions: Vec<f64> = (-half..=half).map(|i| i as f64 * pitch).collect();
    let values = positions.iter().map(|r| tpl.height(*r)).collect();
    Ok(CrossSection { kind: ProfileKind::Height, positions, values, pitch })
}

/// Grayscale appearance: `background·(1 − s·|h'|/max|h'|)` clipped to
/// [0, 255], central differences inside, one-sided at the ends.
pub fn render_grayscale(cs: &CrossSection, background: f64, strength: f64) -> Result<CrossSection> {
    if cs.kind != ProfileKind::Height {
        return Err(TwinError::InvalidInput("render_grayscale needs a height profile".into()));
    }
    let n = cs.len();
    let h = &cs.values;
    let grad: Vec<f64> = (0..n)
        .map(|i| {
            if n < 2 {
                0.0
            } else if i == 0 {
                (h[1] - h[0]) / cs.pitch
            } else if i == n - 1 {
                (h[n - 1] - h[n - 2]) / cs.pitch
            } else {
                (h[i + 1] - h[i - 1]) / (2.0 * cs.pitch)
            }
        })
        .collect();
    let max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let values = grad
        .iter()
        .map(|g| {
            let rel = if max > 0.0 { g.abs() / max } else { 0.0 };
            (background * (1.0 - strength * rel)).clamp(0.0, 255.0)
        })
        .collect();
    Ok(CrossSection { kind: ProfileKind::Grayscale, positions: cs.positions.clone(), values, pitch: cs.pitch })
}
