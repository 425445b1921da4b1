//! Elevation-dependent ΔC/N0 threshold and the below-threshold multipath rule.
//!
//! Calibration groups low-multipath samples into elevation bins of width `w`
//! (bin `k` covers `[k·w, (k+1)·w)`) and stores the arithmetic mean ΔC/N0 of
//! each occupied bin at its center. Between centers the threshold is linearly
//! interpolated, which also bridges empty interior bins. Outside the first and
//! last centers the threshold is clamped and the decision marked
//! [`Verdict::OutOfRange`].
//!
//! A measurement is declared multipath when its ΔC/N0 is strictly lower than
//! the threshold at its elevation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obs::{cn0_difference, ObsError, ObservationRecord};

pub const DEFAULT_BIN_WIDTH_DEG: f64 = 1.0;
pub const DEFAULT_AGGREGATION_RATIO: f64 = 0.5;
/// Elevation window over which the low-multipath reference data is calibrated.
pub const DEFAULT_CALIBRATION_WINDOW_DEG: (f64, f64) = (10.0, 35.0);

pub const DECISIONS_HEADER: &str = "epoch,prn,elevation_deg,diff_db,threshold_db,verdict";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("aggregation ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("no calibration samples fell into any elevation bin")]
    EmptyCalibration,
    #[error("threshold curve has no bins")]
    InvalidCurve,
    #[error("epoch {epoch}, PRN {prn}: record has no elevation")]
    MissingElevation { epoch: i64, prn: u8 },
    #[error(transparent)]
    Observation(#[from] ObsError),
    #[error("decisions line {line}: {message}")]
    DecisionFormat { line: usize, message: String },
}

/// One occupied elevation bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBin {
    pub center_deg: f64,
    pub mean_db: f64,
    pub count: u64,
}

/// Calibrated mean ΔC/N0 per elevation bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub bin_width_deg: f64,
    /// Strictly ascending by center.
    pub bins: Vec<ThresholdBin>,
    /// First and last occupied bin centers.
    pub valid_range: [f64; 2],
}

impl ThresholdCurve {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("curve serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn contains(&self, elevation_deg: f64) -> bool {
        elevation_deg >= self.valid_range[0] && elevation_deg <= self.valid_range[1]
    }
}

/// Threshold value at an elevation, with the clamping flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value_db: f64,
    pub in_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Multipath,
    Clean,
    OutOfRange,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Multipath => "MULTIPATH",
            Verdict::Clean => "CLEAN",
            Verdict::OutOfRange => "OUT_OF_RANGE",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MULTIPATH" => Ok(Verdict::Multipath),
            "CLEAN" => Ok(Verdict::Clean),
            "OUT_OF_RANGE" => Ok(Verdict::OutOfRange),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub epoch: i64,
    pub prn: u8,
    pub elevation_deg: f64,
    pub diff_db: f64,
    /// Clamped to the end value when the verdict is out of range.
    pub threshold_db: f64,
    pub verdict: Verdict,
}

impl Decision {
    pub fn key(&self) -> (i64, u8) {
        (self.epoch, self.prn)
    }
}

/// Per-satellite summary of in-range decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteVerdict {
    pub prn: u8,
    pub window: (i64, i64),
    pub n_multipath: u64,
    pub n_clean: u64,
    pub fraction_multipath: f64,
    pub flagged: bool,
}

/// Builds the threshold curve from low-multipath records.
pub fn calibrate(
    records: &[ObservationRecord],
    bin_width_deg: f64,
) -> Result<ThresholdCurve, DetectorError> {
    if !(bin_width_deg > 0.0 && bin_width_deg.is_finite()) {
        return Err(DetectorError::InvalidBinWidth(bin_width_deg));
    }
    let mut sums: BTreeMap<i64, (f64, u64)> = BTreeMap::new();
    for record in records {
        let elevation = elevation_of(record)?;
        let diff = cn0_difference(record)?.value();
        let slot = sums
            .entry((elevation / bin_width_deg).floor() as i64)
            .or_insert((0.0, 0));
        slot.0 += diff;
        slot.1 += 1;
    }
    let bins: Vec<ThresholdBin> = sums
        .into_iter()
        .map(|(k, (sum, count))| ThresholdBin {
            center_deg: (k as f64 + 0.5) * bin_width_deg,
            mean_db: sum / count as f64,
            count,
        })
        .collect();
    let (Some(first), Some(last)) = (bins.first(), bins.last()) else {
        return Err(DetectorError::EmptyCalibration);
    };
    let valid_range = [first.center_deg, last.center_deg];
    Ok(ThresholdCurve {
        bin_width_deg,
        bins,
        valid_range,
    })
}

/// Piecewise-linear threshold between bin centers, clamped outside.
pub fn threshold_at(
    curve: &ThresholdCurve,
    elevation_deg: f64,
) -> Result<Threshold, DetectorError> {
    let bins = &curve.bins;
    let (Some(first), Some(last)) = (bins.first(), bins.last()) else {
        return Err(DetectorError::InvalidCurve);
    };
    let in_range = curve.contains(elevation_deg);
    if !(elevation_deg > first.center_deg) {
        return Ok(Threshold {
            value_db: first.mean_db,
            in_range,
        });
    }
    if elevation_deg >= last.center_deg {
        return Ok(Threshold {
            value_db: last.mean_db,
            in_range,
        });
    }
    // first.center < elevation < last.center, so 1 <= upper < len.
    let upper = bins.partition_point(|b| b.center_deg < elevation_deg);
    let hi = bins[upper];
    if hi.center_deg == elevation_deg {
        return Ok(Threshold {
            value_db: hi.mean_db,
            in_range,
        });
    }
    let lo = bins[upper - 1];
    let t = (elevation_deg - lo.center_deg) / (hi.center_deg - lo.center_deg);
    Ok(Threshold {
        value_db: (1.0 - t) * lo.mean_db + t * hi.mean_db,
        in_range,
    })
}

pub fn classify(
    record: &ObservationRecord,
    curve: &ThresholdCurve,
) -> Result<Decision, DetectorError> {
    let elevation_deg = elevation_of(record)?;
    let diff_db = cn0_difference(record)?.value();
    let threshold = threshold_at(curve, elevation_deg)?;
    let verdict = if !threshold.in_range {
        Verdict::OutOfRange
    } else if diff_db < threshold.value_db {
        Verdict::Multipath
    } else {
        Verdict::Clean
    };
    Ok(Decision {
        epoch: record.epoch,
        prn: record.prn,
        elevation_deg,
        diff_db,
        threshold_db: threshold.value_db,
        verdict,
    })
}

/// Per-PRN multipath fraction over in-range decisions.
///
/// A satellite is flagged when its multipath fraction strictly exceeds `ratio`.
pub fn aggregate(
    decisions: &[Decision],
    ratio: f64,
) -> Result<Vec<SatelliteVerdict>, DetectorError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DetectorError::InvalidRatio(ratio));
    }
    #[derive(Default)]
    struct Tally {
        window: Option<(i64, i64)>,
        multipath: u64,
        clean: u64,
    }
    let mut tallies: BTreeMap<u8, Tally> = BTreeMap::new();
    for d in decisions {
        let tally = tallies.entry(d.prn).or_default();
        match d.verdict {
            Verdict::Multipath => tally.multipath += 1,
            Verdict::Clean => tally.clean += 1,
            Verdict::OutOfRange => continue,
        }
        tally.window = Some(match tally.window {
            None => (d.epoch, d.epoch),
            Some((start, end)) => (start.min(d.epoch), end.max(d.epoch)),
        });
    }
    Ok(tallies
        .into_iter()
        .filter_map(|(prn, tally)| {
            let Some(window) = tally.window else {
                log::warn!("aggregate: PRN {prn} has no in-range decisions, omitted");
                return None;
            };
            let fraction_multipath =
                tally.multipath as f64 / (tally.multipath + tally.clean) as f64;
            Some(SatelliteVerdict {
                prn,
                window,
                n_multipath: tally.multipath,
                n_clean: tally.clean,
                fraction_multipath,
                flagged: fraction_multipath > ratio,
            })
        })
        .collect())
}

pub fn write_decisions(decisions: &[Decision]) -> String {
    let mut out = String::with_capacity(48 * (decisions.len() + 1));
    out.push_str(DECISIONS_HEADER);
    out.push('\n');
    for d in decisions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.epoch,
            d.prn,
            d.elevation_deg,
            d.diff_db,
            d.threshold_db,
            d.verdict.as_str()
        );
    }
    out
}

pub fn parse_decisions(text: &str) -> Result<Vec<Decision>, DetectorError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, message: String| DetectorError::DecisionFormat {
        line: line + 1,
        message,
    };
    match lines.next() {
        Some((_, DECISIONS_HEADER)) => {}
        Some((i, other)) => return Err(err(i, format!("unexpected header `{other}`"))),
        None => return Err(err(0, "empty file".into())),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(err(i, format!("expected 6 fields, found {}", fields.len())));
            }
            let num = |idx: usize| -> Result<f64, DetectorError> {
                fields[idx]
                    .parse()
                    .map_err(|_| err(i, format!("bad number `{}`", fields[idx])))
            };
            Ok(Decision {
                epoch: fields[0]
                    .parse()
                    .map_err(|_| err(i, format!("bad epoch `{}`", fields[0])))?,
                prn: fields[1]
                    .parse()
                    .map_err(|_| err(i, format!("bad prn `{}`", fields[1])))?,
                elevation_deg: num(2)?,
                diff_db: num(3)?,
                threshold_db: num(4)?,
                verdict: fields[5].parse().map_err(|m| err(i, m))?,
            })
        })
        .collect()
}

fn elevation_of(record: &ObservationRecord) -> Result<f64, DetectorError> {
    record.elevation_deg.ok_or(DetectorError::MissingElevation {
        epoch: record.epoch,
        prn: record.prn,
    })
}
