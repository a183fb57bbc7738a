//! Sensor trace ingestion and zero-order-hold resampling.
//!
//! Input is CSV with the header `timestamp,sensor_id,value,unit`; timestamps
//! are integer seconds. Sensors may be interleaved, but each sensor's
//! timestamps must strictly increase.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Unit tags accepted in the `unit` column.
pub const KNOWN_UNITS: &[&str] = &[
    "C", "degC", "F", "K", "%", "%RH", "V", "mV", "A", "kPa", "Pa", "bar", "lux", "m", "m3/h",
];

/// Units the inlet-temperature feed accepts.
pub const CELSIUS_UNITS: &[&str] = &["C", "degC"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp: u64,
    pub sensor_id: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("header must be timestamp,sensor_id,value,unit (got {0})")]
    Header(String),
    #[error("target period must be positive")]
    Period,
}

fn row_err(row: usize, reason: impl Into<String>) -> TraceError {
    TraceError::Row {
        row,
        reason: reason.into(),
    }
}

/// Parses and checks a trace. Row numbers in errors count the header as row 1.
pub fn parse_trace<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| TraceError::Header(e.to_string()))?
        .clone();
    let expected = ["timestamp", "sensor_id", "value", "unit"];
    if header.iter().ne(expected.iter().copied()) && !header.is_empty() {
        return Err(TraceError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    let mut last: BTreeMap<String, u64> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| row_err(row, e.to_string()))?;
        if rec.len() != 4 {
            return Err(row_err(row, format!("expected 4 fields, got {}", rec.len())));
        }
        let timestamp: u64 = rec[0]
            .parse()
            .map_err(|_| row_err(row, format!("bad timestamp {:?}", &rec[0])))?;
        let sensor_id = rec[1].to_string();
        if sensor_id.is_empty() {
            return Err(row_err(row, "empty sensor_id"));
        }
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| row_err(row, format!("bad value {:?}", &rec[2])))?;
        if !value.is_finite() {
            return Err(row_err(row, "value is not finite"));
        }
        let unit = rec[3].to_string();
        if !KNOWN_UNITS.contains(&unit.as_str()) {
            return Err(row_err(row, format!("unknown unit {unit:?}")));
        }
        if let Some(&prev) = last.get(&sensor_id) {
            if timestamp == prev {
                return Err(row_err(
                    row,
                    format!("duplicate timestamp {timestamp} for sensor {sensor_id}"),
                ));
            }
            if timestamp < prev {
                return Err(row_err(
                    row,
                    format!("timestamp {timestamp} goes backwards for sensor {sensor_id} (previous {prev})"),
                ));
            }
        }
        last.insert(sensor_id.clone(), timestamp);
        rows.push(TraceRow {
            timestamp,
            sensor_id,
            value,
            unit,
        });
    }
    Ok(rows)
}

/// Zero-order hold onto a `target_period_s` grid. Each sample covers
/// `[t_k, t_{k+1})`; a sensor's last sample covers one `source_period_s`.
/// Output is ordered by (timestamp, sensor_id).
pub fn resample(
    rows: &[TraceRow],
    source_period_s: u64,
    target_period_s: u64,
) -> Result<Vec<TraceRow>, TraceError> {
    if target_period_s == 0 {
        return Err(TraceError::Period);
    }
    let mut by_sensor: BTreeMap<&str, Vec<&TraceRow>> = BTreeMap::new();
    for r in rows {
        by_sensor.entry(&r.sensor_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for samples in by_sensor.values() {
        for (k, s) in samples.iter().enumerate() {
            let end = samples
                .get(k + 1)
                .map_or(s.timestamp + source_period_s, |n| n.timestamp);
            let mut t = s.timestamp;
            while t < end {
                out.push(TraceRow {
                    timestamp: t,
                    ..(*s).clone()
                });
                t += target_period_s;
            }
        }
    }
    out.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.sensor_id.cmp(&b.sensor_id))
    });
    Ok(out)
}

/// Reads `path` and resamples it from `source_period_s` to `target_period_s`.
pub fn ingest_trace(
    path: &Path,
    source_period_s: u64,
    target_period_s: u64,
) -> Result<Vec<TraceRow>, TraceError> {
    let file = std::fs::File::open(path)?;
    let rows = parse_trace(file)?;
    resample(&rows, source_period_s, target_period_s)
}

/// One sensor's resampled values in time order.
pub fn channel(rows: &[TraceRow], sensor_id: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.sensor_id == sensor_id)
        .map(|r| r.value)
        .collect()
}

pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], w: W) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)
            .map_err(|e| TraceError::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}
