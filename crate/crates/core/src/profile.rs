//! One-dimensional cross-section analysis: grayscale landmarks, height-profile
//! metrics, deposited material flow and smoothing.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, TwinError};
use crate::units::MICROMETRE;

/// Ratio of linewidth to the 80%-height width of a height profile.
pub const WIDTH_RATIO: f64 = 2.1;
/// Reported spread of [`WIDTH_RATIO`]; metadata only.
pub const WIDTH_RATIO_STD: f64 = 0.32;
pub const HEIGHT_THRESHOLD: f64 = 0.8;
pub const OVERSPRAY_THRESHOLD: f64 = 0.01;
pub const BACKGROUND_FRACTION: f64 = 0.95;
/// Minimum grayscale prominence of an accepted extremum.
pub const PROMINENCE: f64 = 2.0;
pub const DEFAULT_BATCH: usize = 50;
/// Moving-average length applied to material-flow streams.
pub const MATERIAL_FLOW_WINDOW: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Grayscale,
    Height,
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Grayscale => "grayscale",
            ProfileKind::Height => "height",
        }
    }
}

impl std::str::FromStr for ProfileKind {
    type Err = TwinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" | "gray" => Ok(Self::Grayscale),
            "height" => Ok(Self::Height),
            other => Err(TwinError::InvalidInput(format!("unknown profile kind `{other}`"))),
        }
    }
}

/// Uniformly sampled cross-section; positions in m, heights in m, grayscale
/// in levels 0–255.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub kind: ProfileKind,
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    pub pitch: f64,
}

impl CrossSection {
    pub fn uniform(kind: ProfileKind, start: f64, pitch: f64, values: Vec<f64>) -> Result<Self> {
        if !(pitch > 0.0) {
            return Err(TwinError::InvalidInput("pitch must be > 0".into()));
        }
        let positions = (0..values.len()).map(|i| start + i as f64 * pitch).collect();
        Ok(Self { kind, positions, values, pitch })
    }

    pub fn new(kind: ProfileKind, positions: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(TwinError::InvalidInput("positions and values differ in length".into()));
        }
        if positions.len() < 2 {
            return Err(TwinError::InvalidInput("cross-section needs at least two samples".into()));
        }
        let pitch = (positions[positions.len() - 1] - positions[0]) / (positions.len() - 1) as f64;
        if !(pitch > 0.0) {
            return Err(TwinError::InvalidInput("positions must be strictly increasing".into()));
        }
        for w in positions.windows(2) {
            if ((w[1] - w[0]) - pitch).abs() > 1e-9 * pitch.max(w[1].abs()) {
                return Err(TwinError::InvalidInput("positions are not uniformly spaced".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TwinError::InvalidInput("non-finite profile value".into()));
        }
        Ok(Self { kind, positions, values, pitch })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Shifts every position by `dx`.
    pub fn shifted(&self, dx: f64) -> Self {
        Self { positions: self.positions.iter().map(|p| p + dx).collect(), ..self.clone() }
    }

    /// Text form: `kind=<k>,pitch[um]=<p>` then `r[um],value` rows; heights in
    /// µm, grayscale in levels.
    pub fn to_text(&self) -> String {
        let mut s = format!("kind={},pitch[um]={}\n", self.kind.name(), crate::table::format_number(self.pitch / MICROMETRE));
        let scale = self.value_scale();
        for (p, v) in self.positions.iter().zip(&self.values) {
            let _ = writeln!(
                s,
                "{},{}",
                crate::table::format_number(crate::table::round_display(p / MICROMETRE)),
                crate::table::format_number(crate::table::round_display(v / scale))
            );
        }
        s
    }

    fn value_scale(&self) -> f64 {
        match self.kind {
            ProfileKind::Height => MICROMETRE,
            ProfileKind::Grayscale => 1.0,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| TwinError::InvalidInput("empty profile file".into()))?;
        let mut kind = None;
        for part in head.split(',') {
            if let Some(k) = part.trim().strip_prefix("kind=") {
                kind = Some(k.parse::<ProfileKind>()?);
            }
        }
        let kind = kind.ok_or_else(|| TwinError::InvalidInput("profile header lacks `kind=`".into()))?;
        let scale = match kind {
            ProfileKind::Height => MICROMETRE,
            ProfileKind::Grayscale => 1.0,
        };
        let mut positions = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut it = line.split(',');
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(TwinError::InvalidInput(format!("profile row {}: expected two columns", i + 1)));
            };
            let p: f64 = a.trim().parse().map_err(|_| TwinError::InvalidInput(format!("profile row {}: bad position", i + 1)))?;
            let v: f64 = b.trim().parse().map_err(|_| TwinError::InvalidInput(format!("profile row {}: bad value", i + 1)))?;
            positions.push(p * MICROMETRE);
            values.push(v * scale);
        }
        Self::new(kind, positions, values)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Landmarks {
    pub center: bool,
    pub minima: bool,
    pub shoulders: bool,
    /// Shoulders taken from the standard-deviation profile.
    pub std_fallback: bool,
    pub overspray: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMetrics {
    pub center: f64,
    pub l_w: Option<f64>,
    pub l_o: Option<f64>,
    pub found: Landmarks,
}

impl LineMetrics {
    pub fn is_partial(&self) -> bool {
        self.l_w.is_none() || self.l_o.is_none() || !self.found.overspray
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extraction {
    Line(LineMetrics),
    NoLine,
}

impl Extraction {
    pub fn line(&self) -> Option<&LineMetrics> {
        match self {
            Extraction::Line(m) => Some(m),
            Extraction::NoLine => None,
        }
    }
}

/// Centred moving mean with windows truncated at the edges.
pub fn moving_average(series: &[f64], length: usize) -> Vec<f64> {
    let length = length.max(1);
    let n = series.len();
    let before = length / 2;
    let after = length - 1 - before;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + series[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            if length == 1 {
                series[i]
            } else {
                (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
            }
        })
        .collect()
}

/// Walks from `start` in direction `dir` and returns the first local minimum
/// that is at least [`PROMINENCE`] below `start` and followed by a rise of
/// at least [`PROMINENCE`].
fn find_min_outward(s: &[f64], start: usize, dir: isize) -> Option<usize> {
    let mut best = start;
    let mut i = start as isize + dir;
    while i >= 0 && (i as usize) < s.len() {
        let iu = i as usize;
        if s[iu] < s[best] {
            best = iu;
        } else if s[iu] - s[best] >= PROMINENCE && s[start] - s[best] >= PROMINENCE {
            return Some(best);
        }
        i += dir;
    }
    None
}

/// Mirror of [`find_min_outward`] for maxima.
fn find_max_outward(s: &[f64], start: usize, dir: isize) -> Option<usize> {
    let mut best = start;
    let mut i = start as isize + dir;
    while i >= 0 && (i as usize) < s.len() {
        let iu = i as usize;
        if s[iu] > s[best] {
            best = iu;
        } else if s[best] - s[iu] >= PROMINENCE && s[best] - s[start] >= PROMINENCE {
            return Some(best);
        }
        i += dir;
    }
    None
}

/// Global maximum of the middle third, ties broken toward the middle.
fn center_index(s: &[f64]) -> usize {
    let n = s.len();
    let lo = n / 3;
    let hi = (2 * n).div_ceil(3).max(lo + 1).min(n);
    let mid = (n - 1) as f64 / 2.0;
    let mut best = lo;
    for i in lo..hi {
        let better = s[i] > s[best] || (s[i] == s[best] && (i as f64 - mid).abs() < (best as f64 - mid).abs());
        if better {
            best = i;
        }
    }
    best
}

fn overspray_edges(s: &[f64], background: f64) -> Option<(usize, usize)> {
    let limit = BACKGROUND_FRACTION * background;
    let left = s.iter().position(|v| *v < limit)?;
    let right = s.iter().rposition(|v| *v < limit)?;
    Some((left, right))
}

fn grayscale_core(cs: &CrossSection, smoothed: &[f64], std_profile: Option<&[f64]>, background: f64) -> Extraction {
    let s = smoothed;
    let n = s.len();
    if n < 3 {
        return Extraction::NoLine;
    }
    let (mn, mx) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if mx - mn < PROMINENCE {
        return Extraction::NoLine;
    }
    let c = center_index(s);
    let mut found = Landmarks { center: true, ..Default::default() };
    let minima = (find_min_outward(s, c, -1), find_min_outward(s, c, 1));
    let mut l_w = None;
    if let (Some(ml), Some(mr)) = minima {
        found.minima = true;
        let shoulders = (find_max_outward(s, ml, -1), find_max_outward(s, mr, 1));
        match shoulders {
            (Some(a), Some(b)) => {
                found.shoulders = true;
                l_w = Some(cs.positions[b] - cs.positions[a]);
            }
            _ => {
                if let Some(sd) = std_profile {
                    let left = first_peak(sd, ml, -1);
                    let right = first_peak(sd, mr, 1);
                    if let (Some(a), Some(b)) = (left, right) {
                        found.std_fallback = true;
                        l_w = Some(cs.positions[b] - cs.positions[a]);
                    }
                }
            }
        }
    }
    let l_o = match overspray_edges(s, background) {
        Some((a, b)) if a > 0 && b + 1 < n => {
            found.overspray = true;
            Some(cs.positions[b] - cs.positions[a])
        }
        Some((a, b)) => Some(cs.positions[b] - cs.positions[a]),
        None => None,
    };
    Extraction::Line(LineMetrics { center: cs.positions[c], l_w, l_o, found })
}

/// First local maximum of `sd` walking outward from `start`.
fn first_peak(sd: &[f64], start: usize, dir: isize) -> Option<usize> {
    let mut i = start as isize + dir;
    while i > 0 && ((i + 1) as usize) < sd.len() {
        let iu = i as usize;
        if sd[iu] > 0.0 && sd[iu] >= sd[iu - 1] && sd[iu] >= sd[iu + 1] {
            return Some(iu);
        }
        i += dir;
    }
    None
}

/// Linewidth and overspray from a single grayscale cross-section.
pub fn extract_grayscale_metrics(cs: &CrossSection, background: f64) -> Result<Extraction> {
    if cs.kind != ProfileKind::Grayscale {
        return Err(TwinError::InvalidInput("expected a grayscale cross-section".into()));
    }
    let s = moving_average(&cs.values, 3);
    Ok(grayscale_core(cs, &s, None, background))
}

/// Batched extraction over a stack of aligned columns: each batch of
/// `batch` columns is averaged, and the per-sample standard deviation of
/// the batch provides the fallback shoulder positions.
pub fn extract_grayscale_batch(columns: &[CrossSection], background: f64, batch: usize) -> Result<Vec<Extraction>> {
    let batch = batch.max(1);
    let mut out = Vec::new();
    for chunk in columns.chunks(batch) {
        let first = &chunk[0];
        if chunk.iter().any(|c| c.kind != ProfileKind::Grayscale || c.len() != first.len()) {
            return Err(TwinError::InvalidInput("batch columns must be grayscale and equally long".into()));
        }
        let n = first.len();
        let k = chunk.len() as f64;
        let mean: Vec<f64> = (0..n).map(|i| chunk.iter().map(|c| c.values[i]).sum::<f64>() / k).collect();
        let sd: Vec<f64> = (0..n)
            .map(|i| (chunk.iter().map(|c| (c.values[i] - mean[i]).powi(2)).sum::<f64>() / k).sqrt())
            .collect();
        let smoothed = moving_average(&mean, 3);
        let avg = CrossSection { values: mean, ..first.clone() };
        out.push(grayscale_core(&avg, &smoothed, Some(&moving_average(&sd, 3)), background));
    }
    Ok(out)
}

fn interpolate(cs: &CrossSection, x: f64) -> Option<f64> {
    let first = cs.positions[0];
    let last = *cs.positions.last()?;
    if x < first || x > last {
        return None;
    }
    let f = (x - first) / cs.pitch;
    let i = (f.floor() as usize).min(cs.len() - 2);
    let t = f - i as f64;
    Some(cs.values[i] * (1.0 - t) + cs.values[i + 1] * t)
}

/// Scans outward from position `x0` for the first crossing of `level`.
fn crossing_outward(cs: &CrossSection, x0: f64, level: f64, dir: isize) -> Option<f64> {
    let n = cs.len();
    let f = (x0 - cs.positions[0]) / cs.pitch;
    let mut i: isize = if dir > 0 { f.ceil() as isize } else { f.floor() as isize };
    let mut prev = (x0, interpolate(cs, x0)?);
    while i >= 0 && (i as usize) < n {
        let iu = i as usize;
        let (p, v) = (cs.positions[iu], cs.values[iu]);
        if (p - x0) * dir as f64 > 0.0 {
            if v <= level {
                let (pp, pv) = prev;
                let t = if pv == v { 0.0 } else { (pv - level) / (pv - v) };
                return Some(pp + t.clamp(0.0, 1.0) * (p - pp));
            }
            prev = (p, v);
        }
        i += dir;
    }
    None
}

/// Width metrics of a height profile: 80%-height width scaled by
/// [`WIDTH_RATIO`], overspray where the height falls to 1% of its value at
/// each linewidth edge.
pub fn cfd_profile_metrics(cs: &CrossSection) -> Result<Extraction> {
    if cs.kind != ProfileKind::Height {
        return Err(TwinError::InvalidInput("expected a height cross-section".into()));
    }
    let h_max = cs.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(h_max > 0.0) {
        return Ok(Extraction::NoLine);
    }
    let threshold = HEIGHT_THRESHOLD * h_max;
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=cs.len() {
        let above = i < cs.len() && cs.values[i] > threshold;
        match (above, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a + 1) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (a, b) = best.expect("h_max exceeds the threshold somewhere");
    let width80 = (b - a + 1) as f64 * cs.pitch;
    let center = 0.5 * (cs.positions[a] + cs.positions[b]);
    let l_w = WIDTH_RATIO * width80;
    let mut found = Landmarks { center: true, minima: true, shoulders: true, overspray: true, std_fallback: false };
    let mut edge = |x: f64, dir: isize| -> f64 {
        match interpolate(cs, x) {
            None => {
                found.overspray = false;
                x.clamp(cs.positions[0], *cs.positions.last().unwrap_or(&x))
            }
            Some(h) if h <= 0.0 => x,
            Some(h) => crossing_outward(cs, x, OVERSPRAY_THRESHOLD * h, dir).unwrap_or_else(|| {
                found.overspray = false;
                if dir > 0 {
                    *cs.positions.last().unwrap_or(&x)
                } else {
                    cs.positions[0]
                }
            }),
        }
    };
    let left = edge(center - 0.5 * l_w, -1);
    let right = edge(center + 0.5 * l_w, 1);
    Ok(Extraction::Line(LineMetrics { center, l_w: Some(l_w), l_o: Some(right - left), found }))
}

/// Trapezoid integral of a height profile.
pub fn profile_area(cs: &CrossSection) -> f64 {
    cs.values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * cs.pitch).sum()
}

/// Deposited volume flow `ν·∫h dr` (m³/s) for platen speed `nu` (m/s).
pub fn material_flow(cs: &CrossSection, nu: f64) -> Result<f64> {
    if cs.kind != ProfileKind::Height {
        return Err(TwinError::InvalidInput("expected a height cross-section".into()));
    }
    Ok(nu * profile_area(cs))
}
