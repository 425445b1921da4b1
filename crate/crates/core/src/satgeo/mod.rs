//! Satellite geometry: YUMA almanac parsing, Keplerian propagation and
//! receiver look angles.
//!
//! Elevations produced here index the detector's threshold curve, and the
//! look-angle direction is the plane-wave arrival direction fed to the ray
//! tracer.

mod almanac;
mod geodesy;
mod orbit;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obs::ObservationRecord;

pub use almanac::{parse_yuma, Almanac, AlmanacEntry};
pub use geodesy::{
    ecef_to_enu, ecef_to_geodetic, enu_direction, geodetic_to_ecef, look_angles, GeodeticPosition,
    LookAngles, WGS84_A, WGS84_B, WGS84_E2, WGS84_F,
};
pub use orbit::{
    propagate, solve_kepler, GpsTime, DEFAULT_LEAP_SECONDS, EARTH_ROTATION_RATE, GPS_GM,
    KEPLER_MAX_ITERATIONS, KEPLER_TOLERANCE, SECONDS_PER_WEEK,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SatGeoError {
    #[error("almanac block {block}: missing field `{field}`")]
    MissingField { block: usize, field: &'static str },
    #[error("almanac block {block}: cannot parse `{field}` from `{value}`")]
    InvalidValue {
        block: usize,
        field: &'static str,
        value: String,
    },
    #[error("almanac PRN {prn}: {field} = {value} fails validation")]
    Validation {
        prn: u8,
        field: &'static str,
        value: f64,
    },
    #[error("almanac lists PRN {prn} more than once")]
    DuplicatePrn { prn: u8 },
    #[error("Kepler solver did not converge for M = {mean_anomaly}, e = {eccentricity}")]
    KeplerNonConvergence {
        mean_anomaly: f64,
        eccentricity: f64,
    },
    #[error("Kepler solver needs 0 <= e < 1 and tol > 0 (e = {eccentricity}, tol = {tol})")]
    InvalidKeplerInput { eccentricity: f64, tol: f64 },
    #[error("PRN {prn}: epoch is {dt_s} s from the almanac reference, beyond one week")]
    EpochOutsideWindow { prn: u8, dt_s: f64 },
    #[error("satellite and receiver positions coincide")]
    DegenerateGeometry,
    #[error("invalid geodetic position: lat {lat}, lon {lon}")]
    InvalidPosition { lat: f64, lon: f64 },
    #[error("no almanac entry for PRN(s) {prns:?}")]
    MissingAlmanac { prns: Vec<u8> },
}

/// Propagated satellite position and its look angles from one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub prn: u8,
    pub epoch: i64,
    pub ecef: [f64; 3],
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

/// Position and look angles of `entry` at a Unix epoch.
pub fn satellite_state(
    entry: &AlmanacEntry,
    epoch_unix: i64,
    rx: &GeodeticPosition,
    leap_seconds: i64,
) -> Result<SatelliteState, SatGeoError> {
    let time = GpsTime::from_unix(epoch_unix, leap_seconds);
    let ecef: Vector3<f64> = propagate(entry, time)?;
    let look = look_angles(&ecef, rx)?;
    Ok(SatelliteState {
        prn: entry.prn,
        epoch: epoch_unix,
        ecef: ecef.into(),
        elevation_deg: look.elevation_deg,
        azimuth_deg: look.azimuth_deg,
    })
}

/// Fills `elevation_deg` of every record from the almanac.
///
/// All PRNs are checked before any propagation so that the error lists every
/// missing satellite at once.
pub fn annotate_elevations(
    records: &[ObservationRecord],
    almanac: &Almanac,
    rx: &GeodeticPosition,
    leap_seconds: i64,
) -> Result<Vec<ObservationRecord>, SatGeoError> {
    let mut missing: Vec<u8> = records
        .iter()
        .map(|r| r.prn)
        .filter(|prn| almanac.get(*prn).is_none())
        .collect();
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        return Err(SatGeoError::MissingAlmanac { prns: missing });
    }
    records
        .iter()
        .map(|r| {
            let entry = almanac.get(r.prn).expect("checked above");
            let state = satellite_state(entry, r.epoch, rx, leap_seconds)?;
            Ok(r.with_elevation(state.elevation_deg))
        })
        .collect()
}
