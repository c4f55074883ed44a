//! Comma-delimited numeric tables with unit-suffixed headers.
//!
//! Values are stored exactly as read (display units) and written with the
//! shortest representation that parses back to the same `f64`, so
//! write → read → write is byte-identical.

use std::path::Path;

use crate::error::{Result, TwinError};
use crate::types::{InputVector, Observation, TimeSeriesRecord, OUTPUT_DIM};
use crate::units::{from_si, to_si, Dimension, Unit};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Significant digits kept when converting SI values for display.
pub const DISPLAY_DIGITS: usize = 12;

pub fn round_display(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", DISPLAY_DIGITS - 1, v).parse().unwrap_or(v)
}

/// Shortest round-trip text for a value.
pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, head)) = lines.next() else {
            return Err(TwinError::Table("empty file: missing header".into()));
        };
        let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(TwinError::Table(format!(
                    "line {}: expected {} cells, found {}",
                    idx + 1,
                    header.len(),
                    cells.len()
                )));
            }
            let row = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    let cell = cell.trim();
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|_| {
                            TwinError::Table(format!("line {}, column `{}`: not a number: `{cell}`", idx + 1, header[c]))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.map(format_number).unwrap_or_default()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name || split_header(h).0 == name)
    }
}

/// `"L_w[um]"` → `("L_w", Some("um"))`.
pub fn split_header(h: &str) -> (&str, Option<&str>) {
    match (h.find('['), h.ends_with(']')) {
        (Some(i), true) => (&h[..i], Some(&h[i + 1..h.len() - 1])),
        _ => (h, None),
    }
}

/// Column names of the time-series format, in order.
pub const TS_COLUMNS: [&str; 9] = ["t", "I_A", "Q_c", "Q_s", "L_w", "L_o", "P_c", "P_s", "Q_m"];
const TS_DIMENSIONS: [Dimension; 9] = [
    Dimension::Time,
    Dimension::Current,
    Dimension::Flow,
    Dimension::Flow,
    Dimension::Length,
    Dimension::Length,
    Dimension::Pressure,
    Dimension::Pressure,
    Dimension::Flow,
];
/// Units used when writing new tables.
pub const TS_UNITS: [Unit; 9] = [
    Unit::Second,
    Unit::Milliamp,
    Unit::Sccm,
    Unit::Sccm,
    Unit::Micrometre,
    Unit::Micrometre,
    Unit::Pascal,
    Unit::Pascal,
    Unit::Sccm,
];

pub fn ts_header() -> Vec<String> {
    TS_COLUMNS.iter().zip(TS_UNITS).map(|(c, u)| format!("{c}[{u}]")).collect()
}

/// Time-series table of inputs and (possibly missing) outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    pub table: Table,
    pub units: [Unit; 9],
}

impl TimeSeriesTable {
    pub fn empty() -> Self {
        Self { table: Table::new(ts_header()), units: TS_UNITS }
    }

    /// Validates header names, units and row contents.
    pub fn from_table(table: Table) -> Result<Self> {
        if table.header.len() != TS_COLUMNS.len() {
            return Err(TwinError::Table(format!(
                "expected {} columns ({}), found {}",
                TS_COLUMNS.len(),
                ts_header().join(","),
                table.header.len()
            )));
        }
        let mut units = TS_UNITS;
        for (i, h) in table.header.iter().enumerate() {
            let (name, unit) = split_header(h);
            if name != TS_COLUMNS[i] {
                return Err(TwinError::Table(format!("column {}: expected `{}`, found `{h}`", i + 1, TS_COLUMNS[i])));
            }
            let Some(tag) = unit else {
                return Err(TwinError::Table(format!("column `{name}`: missing unit suffix")));
            };
            let unit: Unit =
                tag.parse().map_err(|_| TwinError::Table(format!("column `{name}`: unknown unit `{tag}`")))?;
            if unit.dimension() != TS_DIMENSIONS[i] {
                return Err(TwinError::Table(format!("column `{name}`: unit `{tag}` has the wrong dimension")));
            }
            units[i] = unit;
        }
        let mut last_t = f64::NEG_INFINITY;
        for (r, row) in table.rows.iter().enumerate() {
            for c in 0..4 {
                if row[c].is_none() {
                    return Err(TwinError::Table(format!("row {}: `{}` must not be empty", r + 1, TS_COLUMNS[c])));
                }
            }
            let t = row[0].unwrap_or_default();
            if !(t > last_t) {
                return Err(TwinError::Table(format!("row {}: t must be strictly increasing", r + 1)));
            }
            last_t = t;
            if row.iter().flatten().any(|v| !v.is_finite()) {
                return Err(TwinError::Table(format!("row {}: non-finite value", r + 1)));
            }
        }
        Ok(Self { table, units })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_table(Table::parse(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_table(Table::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.table.write(path)
    }

    pub fn to_csv(&self) -> String {
        self.table.to_csv()
    }

    pub fn len(&self) -> usize {
        self.table.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.rows.is_empty()
    }

    /// Appends a record, converting to this table's units and rounding to
    /// [`DISPLAY_DIGITS`] significant digits.
    pub fn push(&mut self, rec: &TimeSeriesRecord) {
        let d = |v: f64, c: usize| round_display(from_si(v, self.units[c]));
        let mut row = Vec::with_capacity(9);
        row.push(Some(d(rec.t, 0)));
        row.push(Some(d(rec.u.i_a, 1)));
        row.push(Some(d(rec.u.q_c, 2)));
        row.push(Some(d(rec.u.q_s, 3)));
        for i in 0..OUTPUT_DIM {
            row.push(rec.y.get(i).map(|v| d(v, 4 + i)));
        }
        self.table.rows.push(row);
    }

    pub fn from_records(records: &[TimeSeriesRecord]) -> Self {
        let mut t = Self::empty();
        for r in records {
            t.push(r);
        }
        t
    }

    /// Record for one row, in SI.
    pub fn record(&self, idx: usize) -> TimeSeriesRecord {
        let row = &self.table.rows[idx];
        let si = |c: usize| row[c].map(|v| to_si(v, self.units[c]));
        let mut y = [None; OUTPUT_DIM];
        for (i, slot) in y.iter_mut().enumerate() {
            *slot = si(4 + i);
        }
        TimeSeriesRecord {
            t: si(0).unwrap_or_default(),
            u: InputVector::new(si(1).unwrap_or_default(), si(2).unwrap_or_default(), si(3).unwrap_or_default()),
            y: Observation(y),
        }
    }

    pub fn to_records(&self) -> Vec<TimeSeriesRecord> {
        (0..self.len()).map(|i| self.record(i)).collect()
    }

    /// Records whose time lies in `[t0, t1]` (SI seconds).
    pub fn slice_time(&self, t0: f64, t1: f64) -> Self {
        let rows = (0..self.len())
            .filter(|&i| {
                let t = self.record(i).t;
                t >= t0 && t <= t1
            })
            .map(|i| self.table.rows[i].clone())
            .collect();
        Self { table: Table { header: self.table.header.clone(), rows }, units: self.units }
    }

    /// Sampling interval, if uniform.
    pub fn uniform_dt(&self) -> Option<f64> {
        let recs = self.to_records();
        if recs.len() < 2 {
            return None;
        }
        let dt = recs[1].t - recs[0].t;
        let ok = recs.windows(2).all(|w| ((w[1].t - w[0].t) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
        ok.then_some(dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "t[s],I_A[mA],Q_c[sccm],Q_s[sccm],L_w[um],L_o[um],P_c[Pa],P_s[Pa],Q_m[sccm]\n\
0,370,25,50,40.1,71.2,22000000.5,,0.0000011\n\
1,370,25,50,,70.9,22000001,310000,1.1e-6\n";

    #[test]
    fn round_trip_is_byte_identical() {
        let t = TimeSeriesTable::parse(SAMPLE).unwrap();
        let once = t.to_csv();
        let twice = TimeSeriesTable::parse(&once).unwrap().to_csv();
        assert_eq!(once, twice);
    }

    #[test]
    fn missing_cells_are_missing_outputs() {
        let t = TimeSeriesTable::parse(SAMPLE).unwrap();
        let r = t.to_records();
        assert_eq!(r[0].y.get(3), None);
        assert_eq!(r[1].y.get(0), None);
        assert!((r[0].u.q_c - 25.0 * crate::units::SCCM).abs() < 1e-20);
    }

    #[test]
    fn header_validation() {
        let bad = SAMPLE.replace("L_w[um]", "L_w");
        assert!(TimeSeriesTable::parse(&bad).unwrap_err().to_string().contains("L_w"));
        let bad = SAMPLE.replace("P_c[Pa]", "P_c[sccm]");
        assert!(TimeSeriesTable::parse(&bad).is_err());
        let bad = SAMPLE.replace("\n1,", "\n0,");
        assert!(TimeSeriesTable::parse(&bad).is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, 1.0, -3.0, 0.1, 1e-7, 2.2e7, 1.0 / 3.0, 5.0988e-7, 123456789.125, -1e300] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
