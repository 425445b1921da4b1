use std::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, Vector3};

use super::{AlmanacEntry, SatGeoError};

/// WGS-84 gravitational parameter as used by GPS, m^3/s^2.
pub const GPS_GM: f64 = 3.986005e14;
/// WGS-84 Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_146_7e-5;
pub const SECONDS_PER_WEEK: f64 = 604_800.0;
/// GPS − UTC since 2017-01-01.
pub const DEFAULT_LEAP_SECONDS: i64 = 18;
pub const KEPLER_TOLERANCE: f64 = 1e-12;
pub const KEPLER_MAX_ITERATIONS: usize = 50;

/// Unix time of the GPS epoch, 1980-01-06T00:00:00Z.
const GPS_EPOCH_UNIX: i64 = 315_964_800;

/// GPS system time as full week number plus seconds of week.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsTime {
    pub week: i64,
    pub tow: f64,
}

impl GpsTime {
    /// Converts a UTC Unix timestamp; `leap_seconds` is GPS − UTC.
    pub fn from_unix(unix_s: i64, leap_seconds: i64) -> Self {
        let gps = unix_s - GPS_EPOCH_UNIX + leap_seconds;
        let week_s = SECONDS_PER_WEEK as i64;
        Self {
            week: gps.div_euclid(week_s),
            tow: gps.rem_euclid(week_s) as f64,
        }
    }

    /// Seconds from the almanac reference time of `entry`, resolving the
    /// 10-bit week number to the nearest era.
    pub fn seconds_since_toa(&self, entry: &AlmanacEntry) -> f64 {
        let mut dweek = self.week.rem_euclid(1024) - entry.week as i64;
        if dweek >= 512 {
            dweek -= 1024;
        } else if dweek < -512 {
            dweek += 1024;
        }
        dweek as f64 * SECONDS_PER_WEEK + self.tow - entry.toa
    }
}

/// Solves Kepler's equation `E − e·sin(E) = M` for the eccentric anomaly.
///
/// Newton iteration from `M`, falling back to bisection on `[M − e, M + e]`
/// when Newton has not met `tol` after [`KEPLER_MAX_ITERATIONS`] steps.
pub fn solve_kepler(mean_anomaly: f64, eccentricity: f64, tol: f64) -> Result<f64, SatGeoError> {
    if !(0.0..1.0).contains(&eccentricity) || !(tol > 0.0) || !mean_anomaly.is_finite() {
        return Err(SatGeoError::InvalidKeplerInput { eccentricity, tol });
    }
    let residual = |e_anom: f64| e_anom - eccentricity * e_anom.sin() - mean_anomaly;

    let mut e_anom = mean_anomaly;
    for _ in 0..KEPLER_MAX_ITERATIONS {
        let f = residual(e_anom);
        if f.abs() <= tol {
            return Ok(e_anom);
        }
        let step = f / (1.0 - eccentricity * e_anom.cos());
        e_anom -= step;
        if !e_anom.is_finite() {
            break;
        }
    }

    // f is monotone with f(M − e) ≤ 0 ≤ f(M + e).
    let (mut lo, mut hi) = (mean_anomaly - eccentricity, mean_anomaly + eccentricity);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid);
        if f.abs() <= tol {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mean_anomaly.abs().max(1.0) {
            break;
        }
    }
    Err(SatGeoError::KeplerNonConvergence {
        mean_anomaly,
        eccentricity,
    })
}

/// ECEF position (m) of an almanac satellite at `time`.
///
/// Standard GPS almanac propagation: Keplerian ellipse in the orbital plane,
/// rotated by argument of perigee, inclination and the Earth-fixed node
/// longitude `Ω₀ + (Ω̇ − ω_E)·t_k − ω_E·t_oa`.
pub fn propagate(entry: &AlmanacEntry, time: GpsTime) -> Result<Vector3<f64>, SatGeoError> {
    let tk = time.seconds_since_toa(entry);
    if tk.abs() > SECONDS_PER_WEEK {
        return Err(SatGeoError::EpochOutsideWindow {
            prn: entry.prn,
            dt_s: tk,
        });
    }
    let a = entry.semi_major_axis();
    let e = entry.eccentricity;
    let mean_motion = (GPS_GM / (a * a * a)).sqrt();
    let mean_anomaly = wrap_pi(entry.mean_anomaly + mean_motion * tk);
    let ecc_anomaly = solve_kepler(mean_anomaly, e, KEPLER_TOLERANCE)?;

    let perifocal = Vector3::new(
        a * (ecc_anomaly.cos() - e),
        a * (1.0 - e * e).sqrt() * ecc_anomaly.sin(),
        0.0,
    );
    let node =
        entry.raan + (entry.raan_rate - EARTH_ROTATION_RATE) * tk - EARTH_ROTATION_RATE * entry.toa;
    let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), node)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), entry.inclination)
        * Rotation3::from_axis_angle(&Vector3::z_axis(), entry.arg_perigee);
    Ok(rotation * perifocal)
}

fn wrap_pi(angle: f64) -> f64 {
    (angle + PI).rem_euclid(TAU) - PI
}
