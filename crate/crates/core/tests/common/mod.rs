//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls the code under test for the quantity being checked;
//! shared inputs (parsed almanac entries, scene specs) are plain data.

#![allow(dead_code)]

use std::f64::consts::PI;

use dualpol::raytracer::{BuildingSpec, Origin, SceneSpec};
use dualpol::satgeo::{geodetic_to_ecef, AlmanacEntry, GeodeticPosition};
use nalgebra::Vector3;
use rand::Rng;

pub const ALMANAC_FIXTURE: &str = include_str!("../fixtures/almanac.yuma");

// ---------------------------------------------------------------- orbits

const MU: f64 = 3.986005e14;
const OMEGA_E: f64 = 7.2921151467e-5;
const WEEK: f64 = 604800.0;

/// Eccentric anomaly by plain bisection on [M - e, M + e].
pub fn kepler_bisection(m: f64, e: f64) -> f64 {
    let f = |x: f64| x - e * x.sin() - m;
    let (mut lo, mut hi) = (m - e - 1e-9, m + e + 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Seconds from the almanac reference time to a Unix epoch.
pub fn seconds_from_toa(entry: &AlmanacEntry, unix: i64, leap: i64) -> f64 {
    let gps = (unix - 315_964_800 + leap) as f64;
    let full_week = (gps / WEEK).floor();
    let tow = gps - full_week * WEEK;
    let mut weeks = (full_week as i64).rem_euclid(1024) - entry.week as i64;
    if weeks >= 512 {
        weeks -= 1024;
    } else if weeks < -512 {
        weeks += 1024;
    }
    weeks as f64 * WEEK + tow - entry.toa
}

/// Textbook almanac position via true anomaly and argument of latitude.
pub fn propagate_oracle(entry: &AlmanacEntry, tk: f64) -> Vector3<f64> {
    let a = entry.sqrt_a * entry.sqrt_a;
    let n = (MU / (a * a * a)).sqrt();
    let e = entry.eccentricity;
    let big_e = kepler_bisection(entry.mean_anomaly + n * tk, e);
    let nu = ((1.0 - e * e).sqrt() * big_e.sin()).atan2(big_e.cos() - e);
    let u = nu + entry.arg_perigee;
    let r = a * (1.0 - e * big_e.cos());
    let (xp, yp) = (r * u.cos(), r * u.sin());
    let node = entry.raan + (entry.raan_rate - OMEGA_E) * tk - OMEGA_E * entry.toa;
    let i = entry.inclination;
    Vector3::new(
        xp * node.cos() - yp * i.cos() * node.sin(),
        xp * node.sin() + yp * i.cos() * node.cos(),
        yp * i.sin(),
    )
}

// -------------------------------------------------------------- geodesy

/// Elevation and azimuth (degrees) from an ENU basis built by central
/// differences of the geodetic-to-ECEF map.
pub fn look_angles_oracle(sat: &Vector3<f64>, rx: &GeodeticPosition) -> (f64, f64) {
    let at = |dlat: f64, dlon: f64, dh: f64| {
        geodetic_to_ecef(&GeodeticPosition {
            lat: rx.lat + dlat,
            lon: rx.lon + dlon,
            height: rx.height + dh,
        })
    };
    let step_deg = 1e-5;
    let north = (at(step_deg, 0.0, 0.0) - at(-step_deg, 0.0, 0.0)).normalize();
    let east = (at(0.0, step_deg, 0.0) - at(0.0, -step_deg, 0.0)).normalize();
    let up = (at(0.0, 0.0, 1.0) - at(0.0, 0.0, -1.0)).normalize();
    let d = sat - at(0.0, 0.0, 0.0);
    let (e, n, u) = (d.dot(&east), d.dot(&north), d.dot(&up));
    let el = u.atan2(e.hypot(n)).to_degrees();
    let az = e.atan2(n).to_degrees().rem_euclid(360.0);
    (el, az)
}

pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

// ------------------------------------------------------------ ray tracing

pub const REFERENCE_RANGE: f64 = 20_200_000.0;
const EPS_VERTEX: f64 = 1e-6;
const EPS_GRAZE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Reflector {
    Polygon(usize),
    Ground,
}

struct Polygon {
    points: Vec<Vector3<f64>>,
    normal: Vector3<f64>,
    d: f64,
}

impl Polygon {
    fn new(points: Vec<Vector3<f64>>) -> Self {
        // Newell normal
        let mut n = Vector3::zeros();
        for (k, p) in points.iter().enumerate() {
            let q = points[(k + 1) % points.len()];
            n.x += (p.y - q.y) * (p.z + q.z);
            n.y += (p.z - q.z) * (p.x + q.x);
            n.z += (p.x - q.x) * (p.y + q.y);
        }
        let normal = n.normalize();
        let d = normal.dot(&points[0]);
        Self { points, normal, d }
    }

    /// Winding-angle test; the sum is 2π inside and 0 outside.
    fn encloses(&self, p: &Vector3<f64>) -> bool {
        let mut total = 0.0;
        for (k, a) in self.points.iter().enumerate() {
            let b = self.points[(k + 1) % self.points.len()];
            let (u, v) = (a - p, b - p);
            total += self.normal.dot(&u.cross(&v)).atan2(u.dot(&v));
        }
        total.abs() > PI
    }

    /// Möller–Trumbore over the fan triangles; returns the ray parameter.
    fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let p0 = self.points[0];
        for k in 1..self.points.len() - 1 {
            let (e1, e2) = (self.points[k] - p0, self.points[k + 1] - p0);
            let h = dir.cross(&e2);
            let det = e1.dot(&h);
            if det.abs() < 1e-15 {
                return None;
            }
            let s = origin - p0;
            let u = s.dot(&h) / det;
            let q = s.cross(&e1);
            let v = dir.dot(&q) / det;
            if u > 1e-12 && v > 1e-12 && u + v < 1.0 - 1e-12 {
                return Some(e2.dot(&q) / det);
            }
        }
        None
    }
}

/// Brute-force tracer: every reflector sequence of length ≤ 2, solved with
/// receiver images rather than mirrored arrival directions.
pub struct OracleScene {
    polygons: Vec<Polygon>,
    ground: bool,
}

#[derive(Debug, Clone)]
pub struct OraclePath {
    pub order: usize,
    pub vertices: Vec<Vector3<f64>>,
    pub length_m: f64,
}

impl OracleScene {
    /// Extrudes counter-clockwise convex footprints.
    pub fn new(spec: &SceneSpec) -> Self {
        let mut polygons = Vec::new();
        for b in &spec.buildings {
            let fp = &b.footprint;
            for k in 0..fp.len() {
                let (a, c) = (fp[k], fp[(k + 1) % fp.len()]);
                polygons.push(Polygon::new(vec![
                    Vector3::new(a[0], a[1], 0.0),
                    Vector3::new(c[0], c[1], 0.0),
                    Vector3::new(c[0], c[1], b.height_m),
                    Vector3::new(a[0], a[1], b.height_m),
                ]));
            }
            polygons.push(Polygon::new(
                fp.iter()
                    .map(|p| Vector3::new(p[0], p[1], b.height_m))
                    .collect(),
            ));
        }
        Self {
            polygons,
            ground: spec.ground_plane,
        }
    }

    pub fn face_count(&self) -> usize {
        self.polygons.len() + usize::from(self.ground)
    }

    fn plane(&self, r: Reflector) -> (Vector3<f64>, f64) {
        match r {
            Reflector::Polygon(i) => (self.polygons[i].normal, self.polygons[i].d),
            Reflector::Ground => (Vector3::z(), 0.0),
        }
    }

    fn on_reflector(&self, r: Reflector, p: &Vector3<f64>) -> bool {
        match r {
            Reflector::Polygon(i) => self.polygons[i].encloses(p),
            Reflector::Ground => true,
        }
    }

    fn blocked(
        &self,
        from: &Vector3<f64>,
        to: Option<&Vector3<f64>>,
        dir: &Vector3<f64>,
        skip: &[Reflector],
    ) -> bool {
        let (dir, limit) = match to {
            Some(q) => ((q - from).normalize(), (q - from).norm()),
            None => (*dir, f64::INFINITY),
        };
        let inside = |t: f64| t > EPS_VERTEX && t < limit - EPS_VERTEX;
        for (i, poly) in self.polygons.iter().enumerate() {
            if skip.contains(&Reflector::Polygon(i)) {
                continue;
            }
            if let Some(t) = poly.ray_hit(from, &dir) {
                if inside(t) {
                    return true;
                }
            }
        }
        self.ground
            && !skip.contains(&Reflector::Ground)
            && dir.z.abs() > EPS_GRAZE
            && inside(-from.z / dir.z)
    }

    fn reflectors(&self) -> Vec<Reflector> {
        let mut out: Vec<_> = (0..self.polygons.len()).map(Reflector::Polygon).collect();
        if self.ground {
            out.push(Reflector::Ground);
        }
        out
    }

    pub fn trace(&self, rx: &Vector3<f64>, s: &Vector3<f64>) -> Vec<OraclePath> {
        let s = s.normalize();
        let mirror = |p: &Vector3<f64>, (n, d): (Vector3<f64>, f64)| p - 2.0 * (n.dot(p) - d) * n;
        let mut out = Vec::new();
        if !self.blocked(rx, None, &s, &[]) {
            out.push(path(rx, &[], &s));
        }
        let all = self.reflectors();
        for &r in &all {
            let (n, d) = self.plane(r);
            if n.dot(rx) - d <= 0.0 || s.dot(&n) < EPS_GRAZE {
                continue;
            }
            let image = mirror(rx, (n, d));
            let p = image + (d - n.dot(&image)) / n.dot(&s) * s;
            if self.on_reflector(r, &p)
                && !self.blocked(rx, Some(&p), &s, &[r])
                && !self.blocked(&p, None, &s, &[r])
            {
                out.push(path(rx, &[p], &s));
            }
        }
        for &a in &all {
            for &b in &all {
                if a == b {
                    continue;
                }
                // a is hit first by the wave, b last before the receiver
                let (na, da) = self.plane(a);
                let (nb, db) = self.plane(b);
                if nb.dot(rx) - db <= 0.0 || s.dot(&na) < EPS_GRAZE {
                    continue;
                }
                let img_b = mirror(rx, (nb, db));
                let img_ba = mirror(&img_b, (na, da));
                let tau = (da - na.dot(&img_ba)) / na.dot(&s);
                if tau <= 0.0 {
                    continue;
                }
                let pa = img_ba + tau * s;
                let seg = img_b - pa;
                let denom = nb.dot(&seg);
                if denom.abs() < 1e-15 {
                    continue;
                }
                let u = (db - nb.dot(&pa)) / denom;
                if !(u > 0.0 && u < 1.0) {
                    continue;
                }
                let pb = pa + u * seg;
                let incoming = (pa - pb).normalize();
                if nb.dot(&incoming) < EPS_GRAZE || na.dot(&pb) - da <= 0.0 {
                    continue;
                }
                if self.on_reflector(a, &pa)
                    && self.on_reflector(b, &pb)
                    && !self.blocked(rx, Some(&pb), &s, &[b])
                    && !self.blocked(&pb, Some(&pa), &s, &[a, b])
                    && !self.blocked(&pa, None, &s, &[a])
                {
                    out.push(path(rx, &[pb, pa], &s));
                }
            }
        }
        out
    }
}

fn path(rx: &Vector3<f64>, points: &[Vector3<f64>], s: &Vector3<f64>) -> OraclePath {
    let mut vertices = vec![*rx];
    vertices.extend_from_slice(points);
    let mut legs = 0.0;
    for w in vertices.windows(2) {
        legs += (w[1] - w[0]).norm();
    }
    let last = vertices[vertices.len() - 1];
    OraclePath {
        order: points.len(),
        length_m: REFERENCE_RANGE + legs - s.dot(&(last - rx)),
        vertices,
    }
}

/// Whether two path sets agree one-to-one within `tol` meters.
pub fn same_path_set(
    ours: &[dualpol::raytracer::PropagationPath],
    oracle: &[OraclePath],
    tol: f64,
) -> Result<(), String> {
    if ours.len() != oracle.len() {
        return Err(format!(
            "{} paths traced, oracle has {}",
            ours.len(),
            oracle.len()
        ));
    }
    let mut used = vec![false; oracle.len()];
    for p in ours {
        let found = oracle.iter().enumerate().position(|(k, o)| {
            !used[k]
                && o.order == p.order
                && (o.length_m - p.length_m).abs() <= tol
                && o.vertices
                    .iter()
                    .zip(&p.vertices)
                    .all(|(a, b)| (a - Vector3::from(*b)).norm() <= tol)
        });
        match found {
            Some(k) => used[k] = true,
            None => {
                return Err(format!(
                    "no oracle match for order-{} path {:?}",
                    p.order, p.vertices
                ))
            }
        }
    }
    Ok(())
}

// --------------------------------------------------------- scene fixtures

/// Random convex footprint inscribed in an ellipse around `center`.
fn convex_footprint<R: Rng>(rng: &mut R, center: [f64; 2], sides: usize) -> Vec<[f64; 2]> {
    let (rx, ry) = (rng.random_range(4.0..12.0), rng.random_range(4.0..12.0));
    let step = 2.0 * PI / sides as f64;
    let phase = rng.random_range(0.0..step);
    (0..sides)
        .map(|k| {
            let t = phase + k as f64 * step + rng.random_range(-0.3..0.3) * step;
            [center[0] + rx * t.cos(), center[1] + ry * t.sin()]
        })
        .collect()
}

/// Two convex buildings either side of the origin, at most 11 reflectors
/// including the optional ground plane.
pub fn random_canyon<R: Rng>(rng: &mut R) -> SceneSpec {
    let mut buildings = Vec::new();
    for side in [-1.0, 1.0] {
        let center = [
            side * rng.random_range(15.0..25.0),
            rng.random_range(-10.0..10.0),
        ];
        let sides = rng.random_range(3..=4);
        buildings.push(BuildingSpec {
            footprint: convex_footprint(rng, center, sides),
            height_m: rng.random_range(5.0..40.0),
        });
    }
    SceneSpec {
        origin: Origin {
            lat: 37.4,
            lon: 126.7,
        },
        ground_plane: rng.random_bool(0.5),
        buildings,
    }
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, height_m: f64) -> BuildingSpec {
    BuildingSpec {
        footprint: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        height_m,
    }
}

/// Two parallel 80 m long blocks with a 20 m street between them.
pub fn street_canyon(ground_plane: bool) -> SceneSpec {
    SceneSpec {
        origin: Origin {
            lat: 37.4,
            lon: 126.7,
        },
        ground_plane,
        buildings: vec![
            rect(-30.0, -40.0, -10.0, 40.0, 25.0),
            rect(10.0, -40.0, 30.0, 40.0, 25.0),
        ],
    }
}

/// Ray-traced labels for every fixture satellite above the horizon at
/// `epochs`, receiver at the canyon origin 1.5 m above the street.
pub fn canyon_labels(
    scene: &dualpol::raytracer::Scene,
    epochs: impl Iterator<Item = i64>,
) -> Vec<dualpol::eval::LabeledEpoch> {
    use dualpol::raytracer::{label_condition, trace_paths};
    use dualpol::satgeo::{enu_direction, parse_yuma, satellite_state, DEFAULT_LEAP_SECONDS};

    let entries = parse_yuma(ALMANAC_FIXTURE).unwrap();
    let origin = &scene.spec.origin;
    let rx_geo = GeodeticPosition::new(origin.lat, origin.lon, 0.0).unwrap();
    let rx = Vector3::new(-3.0, 0.0, 1.5);
    let mut labels = Vec::new();
    for epoch in epochs {
        for entry in &entries {
            let state = satellite_state(entry, epoch, &rx_geo, DEFAULT_LEAP_SECONDS).unwrap();
            if state.elevation_deg <= 0.0 {
                continue;
            }
            let dir = enu_direction(state.elevation_deg, state.azimuth_deg);
            let paths = trace_paths(scene, &rx, &dir, 2).unwrap();
            labels.push(dualpol::eval::LabeledEpoch {
                epoch,
                prn: entry.prn,
                elevation_deg: state.elevation_deg,
                label: label_condition(entry.prn, &paths).label,
            });
        }
    }
    labels
}

/// Unix time of the fixture almanac reference epoch (full week 2288).
pub const FIXTURE_TOA_UNIX: i64 = 315_964_800 + 2288 * 604_800 + 405_504 - 18;
