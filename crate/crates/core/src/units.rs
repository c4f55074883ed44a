//! Display-unit tags and conversion to SI.
//!
//! Everything inside the crate is SI. Conversions happen only where values
//! cross a file, table or wire boundary.

use std::fmt;
use std::str::FromStr;

use crate::error::TwinError;

/// One standard cubic centimetre per minute in m³/s.
pub const SCCM: f64 = 1.0e-6 / 60.0;
pub const MICROMETRE: f64 = 1.0e-6;
pub const MILLILITRE: f64 = 1.0e-6;
pub const MILLIAMP: f64 = 1.0e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Length,
    Volume,
    Flow,
    Current,
    Pressure,
    Time,
    Rate,
    PressureRate,
    Velocity,
    Temperature,
    Scalar,
}

/// The closed set of unit tags accepted at I/O boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Micrometre,
    Millilitre,
    Sccm,
    Milliamp,
    Pascal,
    Metre,
    CubicMetre,
    CubicMetrePerSecond,
    Amp,
    Second,
    Minute,
    PerSecond,
    PascalPerSecond,
    MetrePerSecond,
    MicrometrePerSecond,
    MillilitrePerSecond,
    Kelvin,
    Dimensionless,
}

impl Unit {
    /// Multiplicative factor taking a value in this unit to SI.
    pub fn si_factor(self) -> f64 {
        match self {
            Unit::Micrometre => MICROMETRE,
            Unit::Millilitre => MILLILITRE,
            Unit::Sccm => SCCM,
            Unit::Milliamp => MILLIAMP,
            Unit::Minute => 60.0,
            Unit::MicrometrePerSecond => MICROMETRE,
            Unit::MillilitrePerSecond => MILLILITRE,
            Unit::Pascal
            | Unit::Metre
            | Unit::CubicMetre
            | Unit::CubicMetrePerSecond
            | Unit::Amp
            | Unit::Second
            | Unit::PerSecond
            | Unit::PascalPerSecond
            | Unit::MetrePerSecond
            | Unit::Kelvin
            | Unit::Dimensionless => 1.0,
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::Micrometre | Unit::Metre => Dimension::Length,
            Unit::Millilitre | Unit::CubicMetre => Dimension::Volume,
            Unit::Sccm | Unit::CubicMetrePerSecond | Unit::MillilitrePerSecond => Dimension::Flow,
            Unit::Milliamp | Unit::Amp => Dimension::Current,
            Unit::Pascal => Dimension::Pressure,
            Unit::Second | Unit::Minute => Dimension::Time,
            Unit::PerSecond => Dimension::Rate,
            Unit::PascalPerSecond => Dimension::PressureRate,
            Unit::MetrePerSecond | Unit::MicrometrePerSecond => Dimension::Velocity,
            Unit::Kelvin => Dimension::Temperature,
            Unit::Dimensionless => Dimension::Scalar,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Micrometre => "um",
            Unit::Millilitre => "mL",
            Unit::Sccm => "sccm",
            Unit::Milliamp => "mA",
            Unit::Pascal => "Pa",
            Unit::Metre => "m",
            Unit::CubicMetre => "m3",
            Unit::CubicMetrePerSecond => "m3/s",
            Unit::Amp => "A",
            Unit::Second => "s",
            Unit::Minute => "min",
            Unit::PerSecond => "1/s",
            Unit::PascalPerSecond => "Pa/s",
            Unit::MetrePerSecond => "m/s",
            Unit::MicrometrePerSecond => "um/s",
            Unit::MillilitrePerSecond => "mL/s",
            Unit::Kelvin => "K",
            Unit::Dimensionless => "1",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = TwinError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unit = match s.trim() {
            "um" | "µm" | "μm" => Unit::Micrometre,
            "mL" | "ml" => Unit::Millilitre,
            "sccm" => Unit::Sccm,
            "mA" => Unit::Milliamp,
            "Pa" => Unit::Pascal,
            "m" => Unit::Metre,
            "m3" | "m³" => Unit::CubicMetre,
            "m3/s" | "m³/s" => Unit::CubicMetrePerSecond,
            "A" => Unit::Amp,
            "s" => Unit::Second,
            "min" => Unit::Minute,
            "1/s" => Unit::PerSecond,
            "Pa/s" => Unit::PascalPerSecond,
            "m/s" => Unit::MetrePerSecond,
            "um/s" | "µm/s" => Unit::MicrometrePerSecond,
            "mL/s" => Unit::MillilitrePerSecond,
            "K" => Unit::Kelvin,
            "1" | "" => Unit::Dimensionless,
            other => return Err(TwinError::UnknownUnit(other.to_string())),
        };
        Ok(unit)
    }
}

/// Converts a display-unit value to SI.
pub fn to_si(value: f64, unit: Unit) -> f64 {
    value * unit.si_factor()
}

/// Converts an SI value to the given display unit.
pub fn from_si(value: f64, unit: Unit) -> f64 {
    value / unit.si_factor()
}

/// Parses a unit tag and converts in one go; unknown tags are rejected.
pub fn to_si_tagged(value: f64, tag: &str) -> Result<f64, TwinError> {
    Ok(to_si(value, tag.parse()?))
}
