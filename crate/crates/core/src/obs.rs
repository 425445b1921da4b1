//! Dual-polarized C/N0 observations.
//!
//! The observation CSV carries one row per (epoch, PRN) with the RHCP and LHCP
//! channel readings side by side:
//!
//! ```text
//! epoch_unix_s,prn,cn0_rhcp_dbhz,cn0_lhcp_dbhz
//! 1700000000,13,45,31
//! ```
//!
//! An empty channel field means that receiver did not track the satellite at
//! that epoch. Such rows are dropped at parse time and counted, never imputed.
//! Files produced by `synth` (or annotated offline) may carry a fifth
//! `elevation_deg` column; both layouts are accepted.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header of the merged observation CSV.
pub const OBS_HEADER: &str = "epoch_unix_s,prn,cn0_rhcp_dbhz,cn0_lhcp_dbhz";
/// Header of the merged observation CSV with the optional elevation column.
pub const OBS_HEADER_WITH_ELEVATION: &str =
    "epoch_unix_s,prn,cn0_rhcp_dbhz,cn0_lhcp_dbhz,elevation_deg";
/// Header of a single-channel receiver log accepted by [`merge_channels`].
pub const CHANNEL_HEADER: &str = "epoch_unix_s,prn,channel,cn0_dbhz";

/// Receivers report C/N0 on a 1 dB grid.
pub const QUANTIZATION_STEP_DB: f64 = 1.0;
/// Lowest accepted C/N0 reading.
pub const CN0_MIN_DBHZ: f64 = 0.0;
/// Highest accepted C/N0 reading for GPS L1.
pub const CN0_MAX_DBHZ: f64 = 60.0;
/// Valid GPS PRN range.
pub const PRN_RANGE: std::ops::RangeInclusive<u8> = 1..=32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObsError {
    #[error("line {line}: malformed header: expected `{expected}`, found `{found}`")]
    Header {
        line: u64,
        expected: String,
        found: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse {field} from `{value}`")]
    Parse {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: {field} = {value} is outside the accepted range")]
    OutOfRange {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate record for epoch {epoch}, PRN {prn}")]
    Duplicate { line: u64, epoch: i64, prn: u8 },
    #[error("line {line}: unknown channel `{value}`, expected R or L")]
    Channel { line: u64, value: String },
    #[error("epoch {epoch}, PRN {prn}: missing {channel} channel")]
    IncompleteRecord {
        epoch: i64,
        prn: u8,
        channel: Polarization,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Antenna channel handedness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarization {
    Rhcp,
    Lhcp,
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Polarization::Rhcp => f.write_str("RHCP"),
            Polarization::Lhcp => f.write_str("LHCP"),
        }
    }
}

/// One (epoch, PRN) pair of RHCP/LHCP C/N0 readings.
///
/// A channel is `None` only in the output of [`merge_channels`]; records
/// returned by [`parse_observations`] always carry both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    /// Unix time, seconds.
    pub epoch: i64,
    pub prn: u8,
    /// dB-Hz, on the quantization grid.
    pub cn0_rhcp: Option<f64>,
    /// dB-Hz, on the quantization grid.
    pub cn0_lhcp: Option<f64>,
    /// Filled by [`crate::satgeo::annotate_elevations`] unless the file had it.
    pub elevation_deg: Option<f64>,
}

impl ObservationRecord {
    pub fn new(epoch: i64, prn: u8, cn0_rhcp: f64, cn0_lhcp: f64) -> Self {
        Self {
            epoch,
            prn,
            cn0_rhcp: Some(cn0_rhcp),
            cn0_lhcp: Some(cn0_lhcp),
            elevation_deg: None,
        }
    }

    pub fn with_elevation(mut self, elevation_deg: f64) -> Self {
        self.elevation_deg = Some(elevation_deg);
        self
    }

    pub fn key(&self) -> (i64, u8) {
        (self.epoch, self.prn)
    }

    pub fn is_complete(&self) -> bool {
        self.cn0_rhcp.is_some() && self.cn0_lhcp.is_some()
    }
}

/// RHCP minus LHCP C/N0 of a single record, in dB.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cn0Difference(pub f64);

impl Cn0Difference {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Result of [`parse_observations`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedObservations {
    /// Complete records sorted by (epoch, prn).
    pub records: Vec<ObservationRecord>,
    /// Rows dropped because one or both channels were empty.
    pub dropped: usize,
}

/// Rounds `value` to the nearest multiple of `step`; ties round away from zero.
pub fn quantize_cn0(value: f64, step: f64) -> f64 {
    debug_assert!(step > 0.0);
    (value / step).round() * step
}

/// ΔC/N0 = RHCP − LHCP.
pub fn cn0_difference(record: &ObservationRecord) -> Result<Cn0Difference, ObsError> {
    let missing = |channel| ObsError::IncompleteRecord {
        epoch: record.epoch,
        prn: record.prn,
        channel,
    };
    let rhcp = record.cn0_rhcp.ok_or_else(|| missing(Polarization::Rhcp))?;
    let lhcp = record.cn0_lhcp.ok_or_else(|| missing(Polarization::Lhcp))?;
    Ok(Cn0Difference(rhcp - lhcp))
}

/// Parses a merged observation CSV.
pub fn parse_observations(bytes: &[u8]) -> Result<ParsedObservations, ObsError> {
    let mut rows = csv_rows(bytes)?;
    let Some((header_line, header)) = rows.next().transpose()? else {
        return Err(header_error(1, ""));
    };
    let with_elevation = match header.join(",").as_str() {
        OBS_HEADER => false,
        OBS_HEADER_WITH_ELEVATION => true,
        other => return Err(header_error(header_line, other)),
    };
    let n_fields = if with_elevation { 5 } else { 4 };

    let mut retained: BTreeMap<(i64, u8), ObservationRecord> = BTreeMap::new();
    let mut dropped = 0;
    for row in rows {
        let (line, fields) = row?;
        if fields.len() != n_fields {
            return Err(ObsError::FieldCount {
                line,
                expected: n_fields,
                found: fields.len(),
            });
        }
        let epoch = parse_epoch(line, &fields[0])?;
        let prn = parse_prn(line, &fields[1])?;
        let rhcp = parse_cn0(line, "cn0_rhcp_dbhz", &fields[2])?;
        let lhcp = parse_cn0(line, "cn0_lhcp_dbhz", &fields[3])?;
        let elevation_deg = if with_elevation {
            parse_elevation(line, &fields[4])?
        } else {
            None
        };
        let (Some(rhcp), Some(lhcp)) = (rhcp, lhcp) else {
            dropped += 1;
            continue;
        };
        let record = ObservationRecord {
            epoch,
            prn,
            cn0_rhcp: Some(rhcp),
            cn0_lhcp: Some(lhcp),
            elevation_deg,
        };
        if retained.insert(record.key(), record).is_some() {
            return Err(ObsError::Duplicate { line, epoch, prn });
        }
    }
    if dropped > 0 {
        log::info!("obs: dropped {dropped} row(s) with a missing channel");
    }
    Ok(ParsedObservations {
        records: retained.into_values().collect(),
        dropped,
    })
}

/// Joins two single-channel receiver logs on (epoch, prn).
///
/// Each log uses the [`CHANNEL_HEADER`] layout; rows may carry either channel.
/// Keys seen on only one channel are kept with the other channel empty so that
/// [`parse_observations`] can count them as dropped.
pub fn merge_channels(first: &[u8], second: &[u8]) -> Result<Vec<ObservationRecord>, ObsError> {
    let mut merged: BTreeMap<(i64, u8), ObservationRecord> = BTreeMap::new();
    for log in [first, second] {
        let mut rows = csv_rows(log)?;
        let Some((header_line, header)) = rows.next().transpose()? else {
            return Err(ObsError::Header {
                line: 1,
                expected: CHANNEL_HEADER.to_owned(),
                found: String::new(),
            });
        };
        let found = header.join(",");
        if found != CHANNEL_HEADER {
            return Err(ObsError::Header {
                line: header_line,
                expected: CHANNEL_HEADER.to_owned(),
                found,
            });
        }
        for row in rows {
            let (line, fields) = row?;
            if fields.len() != 4 {
                return Err(ObsError::FieldCount {
                    line,
                    expected: 4,
                    found: fields.len(),
                });
            }
            let epoch = parse_epoch(line, &fields[0])?;
            let prn = parse_prn(line, &fields[1])?;
            let channel = match fields[2].as_str() {
                "R" => Polarization::Rhcp,
                "L" => Polarization::Lhcp,
                other => {
                    return Err(ObsError::Channel {
                        line,
                        value: other.to_owned(),
                    })
                }
            };
            let Some(cn0) = parse_cn0(line, "cn0_dbhz", &fields[3])? else {
                continue;
            };
            let entry = merged.entry((epoch, prn)).or_insert(ObservationRecord {
                epoch,
                prn,
                cn0_rhcp: None,
                cn0_lhcp: None,
                elevation_deg: None,
            });
            let slot = match channel {
                Polarization::Rhcp => &mut entry.cn0_rhcp,
                Polarization::Lhcp => &mut entry.cn0_lhcp,
            };
            if slot.replace(cn0).is_some() {
                return Err(ObsError::Duplicate { line, epoch, prn });
            }
        }
    }
    Ok(merged.into_values().collect())
}

/// Writes records in the merged CSV layout.
///
/// The elevation column is emitted when any record carries an elevation.
pub fn write_observations(records: &[ObservationRecord]) -> String {
    let with_elevation = records.iter().any(|r| r.elevation_deg.is_some());
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(if with_elevation {
        OBS_HEADER_WITH_ELEVATION
    } else {
        OBS_HEADER
    });
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.epoch,
            r.prn,
            opt(r.cn0_rhcp),
            opt(r.cn0_lhcp)
        );
        if with_elevation {
            let _ = write!(out, ",{}", opt(r.elevation_deg));
        }
        out.push('\n');
    }
    out
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn header_error(line: u64, found: &str) -> ObsError {
    ObsError::Header {
        line,
        expected: OBS_HEADER.to_owned(),
        found: found.to_owned(),
    }
}

type Row = Result<(u64, Vec<String>), ObsError>;

fn csv_rows(bytes: &[u8]) -> Result<impl Iterator<Item = Row> + '_, ObsError> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    Ok(reader.into_records().map(|row| {
        let row = row.map_err(|e| ObsError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        Ok((line, row.iter().map(str::to_owned).collect()))
    }))
}

fn parse_epoch(line: u64, field: &str) -> Result<i64, ObsError> {
    field.parse().map_err(|_| ObsError::Parse {
        line,
        field: "epoch_unix_s",
        value: field.to_owned(),
    })
}

fn parse_prn(line: u64, field: &str) -> Result<u8, ObsError> {
    let prn: u8 = field.parse().map_err(|_| ObsError::Parse {
        line,
        field: "prn",
        value: field.to_owned(),
    })?;
    if !PRN_RANGE.contains(&prn) {
        return Err(ObsError::OutOfRange {
            line,
            field: "prn",
            value: field.to_owned(),
        });
    }
    Ok(prn)
}

fn parse_cn0(line: u64, name: &'static str, field: &str) -> Result<Option<f64>, ObsError> {
    if field.is_empty() {
        return Ok(None);
    }
    let value: f64 = field.parse().map_err(|_| ObsError::Parse {
        line,
        field: name,
        value: field.to_owned(),
    })?;
    // NaN fails both comparisons and lands here too.
    if !(CN0_MIN_DBHZ..=CN0_MAX_DBHZ).contains(&value) {
        return Err(ObsError::OutOfRange {
            line,
            field: name,
            value: field.to_owned(),
        });
    }
    Ok(Some(quantize_cn0(value, QUANTIZATION_STEP_DB)))
}

fn parse_elevation(line: u64, field: &str) -> Result<Option<f64>, ObsError> {
    if field.is_empty() {
        return Ok(None);
    }
    let value: f64 = field.parse().map_err(|_| ObsError::Parse {
        line,
        field: "elevation_deg",
        value: field.to_owned(),
    })?;
    if !(-90.0..=90.0).contains(&value) {
        return Err(ObsError::OutOfRange {
            line,
            field: "elevation_deg",
            value: field.to_owned(),
        });
    }
    Ok(Some(value))
}
