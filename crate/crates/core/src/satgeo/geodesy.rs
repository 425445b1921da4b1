use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SatGeoError;

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// WGS-84 latitude/longitude in degrees, ellipsoidal height in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
}

impl GeodeticPosition {
    pub fn new(lat: f64, lon: f64, height: f64) -> Result<Self, SatGeoError> {
        if !(lat.abs() <= 90.0 && lon.abs() <= 180.0 && height.is_finite()) {
            return Err(SatGeoError::InvalidPosition { lat, lon });
        }
        Ok(Self { lat, lon, height })
    }
}

/// Elevation and azimuth (degrees) plus slant range (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookAngles {
    pub elevation_deg: f64,
    /// Clockwise from north, in `[0, 360)`.
    pub azimuth_deg: f64,
    pub range_m: f64,
}

pub fn geodetic_to_ecef(pos: &GeodeticPosition) -> Vector3<f64> {
    let (sin_lat, cos_lat) = pos.lat.to_radians().sin_cos();
    let (sin_lon, cos_lon) = pos.lon.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + pos.height) * cos_lat * cos_lon,
        (n + pos.height) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + pos.height) * sin_lat,
    )
}

/// Inverse of [`geodetic_to_ecef`] by fixed-point iteration on latitude.
pub fn ecef_to_geodetic(ecef: &Vector3<f64>) -> GeodeticPosition {
    let p = ecef.x.hypot(ecef.y);
    let lon = ecef.y.atan2(ecef.x);
    let mut lat = ecef.z.atan2(p * (1.0 - WGS84_E2));
    let mut height = 0.0;
    for _ in 0..20 {
        let (sin_lat, cos_lat) = lat.sin_cos();
        let root = (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        let n = WGS84_A / root;
        height = p * cos_lat + ecef.z * sin_lat - WGS84_A * root;
        let next = ecef.z.atan2(p * (1.0 - WGS84_E2 * n / (n + height)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    GeodeticPosition {
        lat: lat.to_degrees(),
        lon: lon.to_degrees(),
        height,
    }
}

/// East/north/up components of `point − origin` in the frame at `origin`.
pub fn ecef_to_enu(point: &Vector3<f64>, origin: &GeodeticPosition) -> Vector3<f64> {
    let d = point - geodetic_to_ecef(origin);
    let (sin_lat, cos_lat) = origin.lat.to_radians().sin_cos();
    let (sin_lon, cos_lon) = origin.lon.to_radians().sin_cos();
    Vector3::new(
        -sin_lon * d.x + cos_lon * d.y,
        -sin_lat * cos_lon * d.x - sin_lat * sin_lon * d.y + cos_lat * d.z,
        cos_lat * cos_lon * d.x + cos_lat * sin_lon * d.y + sin_lat * d.z,
    )
}

pub fn look_angles(
    sat_ecef: &Vector3<f64>,
    rx: &GeodeticPosition,
) -> Result<LookAngles, SatGeoError> {
    let enu = ecef_to_enu(sat_ecef, rx);
    let range_m = enu.norm();
    if !(range_m > 0.0) {
        return Err(SatGeoError::DegenerateGeometry);
    }
    let elevation_deg = enu.z.atan2(enu.x.hypot(enu.y)).to_degrees();
    let mut azimuth_deg = enu.x.atan2(enu.y).to_degrees().rem_euclid(360.0);
    if azimuth_deg >= 360.0 {
        azimuth_deg = 0.0;
    }
    Ok(LookAngles {
        elevation_deg,
        azimuth_deg,
        range_m,
    })
}

/// Unit ENU vector pointing along the given look angles.
pub fn enu_direction(elevation_deg: f64, azimuth_deg: f64) -> Vector3<f64> {
    let (sin_el, cos_el) = elevation_deg.to_radians().sin_cos();
    let (sin_az, cos_az) = azimuth_deg.to_radians().sin_cos();
    Vector3::new(cos_el * sin_az, cos_el * cos_az, sin_el)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equator_prime_meridian() {
        let p = geodetic_to_ecef(&GeodeticPosition::new(0.0, 0.0, 0.0).unwrap());
        assert!((p - Vector3::new(6_378_137.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn north_pole_is_semi_minor_axis() {
        let p = geodetic_to_ecef(&GeodeticPosition::new(90.0, 0.0, 0.0).unwrap());
        assert!(p.x.abs() < 1e-3 && p.y.abs() < 1e-3);
        assert!((p.z - 6_356_752.314_2).abs() < 1e-3);
    }

    #[test]
    fn zenith_and_north_horizon() {
        let rx = GeodeticPosition::new(37.4, 126.7, 30.0).unwrap();
        let rx_ecef = geodetic_to_ecef(&rx);
        let (sin_lat, cos_lat) = 37.4f64.to_radians().sin_cos();
        let (sin_lon, cos_lon) = 126.7f64.to_radians().sin_cos();
        let up = Vector3::new(cos_lat * cos_lon, cos_lat * sin_lon, sin_lat);
        let north = Vector3::new(-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat);

        let look = look_angles(&(rx_ecef + 2.0e7 * up), &rx).unwrap();
        assert!((look.elevation_deg - 90.0).abs() < 1e-9);

        let look = look_angles(&(rx_ecef + 1.0e5 * north), &rx).unwrap();
        assert!(look.elevation_deg.abs() < 1e-9);
        assert!(look.azimuth_deg < 1e-9 || look.azimuth_deg > 360.0 - 1e-9);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let rx = GeodeticPosition::new(10.0, 20.0, 0.0).unwrap();
        assert_eq!(
            look_angles(&geodetic_to_ecef(&rx), &rx).unwrap_err(),
            SatGeoError::DegenerateGeometry
        );
    }

    #[test]
    fn invalid_position_rejected() {
        assert!(GeodeticPosition::new(91.0, 0.0, 0.0).is_err());
        assert!(GeodeticPosition::new(0.0, -180.5, 0.0).is_err());
        assert!(GeodeticPosition::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn enu_direction_matches_look_angles() {
        let d = enu_direction(30.0, 135.0);
        assert!((d.norm() - 1.0).abs() < 1e-15);
        let el = d.z.asin().to_degrees();
        let az = d.x.atan2(d.y).to_degrees();
        assert!((el - 30.0).abs() < 1e-12 && (az - 135.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn geodetic_round_trip(lat in -90.0f64..=90.0, lon in -179.999f64..180.0, h in -500.0f64..30_000.0) {
            let pos = GeodeticPosition::new(lat, lon, h).unwrap();
            let back = ecef_to_geodetic(&geodetic_to_ecef(&pos));
            prop_assert!((back.lat - lat).abs() <= 1e-9);
            if lat.abs() < 89.9999 {
                prop_assert!((back.lon - lon).abs() <= 1e-9);
            }
            prop_assert!((back.height - h).abs() <= 1e-4);
        }

        #[test]
        fn look_angle_ranges_and_rotation_about_up(
            lat in -89.0f64..89.0, lon in -180.0f64..180.0,
            el in -89.0f64..89.0, az in 0.0f64..360.0, spin in 0.0f64..360.0,
        ) {
            let rx = GeodeticPosition::new(lat, lon, 0.0).unwrap();
            let (sin_lat, cos_lat) = lat.to_radians().sin_cos();
            let (sin_lon, cos_lon) = lon.to_radians().sin_cos();
            let east = Vector3::new(-sin_lon, cos_lon, 0.0);
            let north = Vector3::new(-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat);
            let up = Vector3::new(cos_lat * cos_lon, cos_lat * sin_lon, sin_lat);
            let to_ecef = |d: Vector3<f64>| geodetic_to_ecef(&rx) + 2.0e7 * (d.x * east + d.y * north + d.z * up);

            let a = look_angles(&to_ecef(enu_direction(el, az)), &rx).unwrap();
            let b = look_angles(&to_ecef(enu_direction(el, az + spin)), &rx).unwrap();
            for l in [a, b] {
                prop_assert!((-90.0..=90.0).contains(&l.elevation_deg));
                prop_assert!((0.0..360.0).contains(&l.azimuth_deg));
            }
            prop_assert!((a.elevation_deg - b.elevation_deg).abs() <= 1e-9);
        }
    }
}
