use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RaytraceError;

/// Containment slack for points on a polygon boundary, meters.
pub const CONTAINMENT_EPS: f64 = 1e-9;

/// Scene origin; local ENU axes are aligned with the tangent frame here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSpec {
    /// Counter-clockwise `[east, north]` vertices in meters.
    pub footprint: Vec<[f64; 2]>,
    pub height_m: f64,
}

/// On-disk scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub origin: Origin,
    #[serde(default)]
    pub ground_plane: bool,
    pub buildings: Vec<BuildingSpec>,
}

impl SceneSpec {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Wall,
    Roof,
}

/// Planar convex polygon with an outward unit normal.
///
/// Vertices wind counter-clockwise when viewed from the side the normal
/// points to.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub vertices: Vec<Vector3<f64>>,
    pub normal: Vector3<f64>,
    pub kind: FaceKind,
    pub building: usize,
}

impl Face {
    /// Plane offset `c` in `normal · x = c`.
    pub fn offset(&self) -> f64 {
        self.normal.dot(&self.vertices[0])
    }

    /// Whether `point` (assumed on the face plane) lies inside the polygon,
    /// boundary included.
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        self.edge_margin(point) >= -CONTAINMENT_EPS
    }

    /// Whether `point` lies inside the polygon and off its boundary. Rays
    /// touching a face only along an edge are not blocked by it.
    pub fn contains_strictly(&self, point: &Vector3<f64>) -> bool {
        self.edge_margin(point) > CONTAINMENT_EPS
    }

    /// Smallest signed distance from `point` to the edge lines, positive inside.
    fn edge_margin(&self, point: &Vector3<f64>) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|k| {
                let a = self.vertices[k];
                let edge = self.vertices[(k + 1) % n] - a;
                edge.cross(&(point - a)).dot(&self.normal) / edge.norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Extruded building geometry ready for tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub faces: Vec<Face>,
    /// Adds the infinite z = 0 plane as reflector and occluder.
    pub ground_plane: bool,
}

impl Scene {
    pub fn from_spec(spec: SceneSpec) -> Result<Self, RaytraceError> {
        let mut faces = Vec::new();
        for (index, building) in spec.buildings.iter().enumerate() {
            faces.extend(extrude(index, building)?);
        }
        Ok(Self {
            ground_plane: spec.ground_plane,
            spec,
            faces,
        })
    }

    pub fn empty(ground_plane: bool) -> Self {
        Self {
            spec: SceneSpec {
                origin: Origin { lat: 0.0, lon: 0.0 },
                ground_plane,
                buildings: Vec::new(),
            },
            faces: Vec::new(),
            ground_plane,
        }
    }
}

/// Parses scene JSON and extrudes every footprint into walls plus roof.
pub fn load_scene(bytes: &[u8]) -> Result<Scene, RaytraceError> {
    let spec: SceneSpec =
        serde_json::from_slice(bytes).map_err(|e| RaytraceError::SceneFormat(e.to_string()))?;
    Scene::from_spec(spec)
}

fn extrude(index: usize, building: &BuildingSpec) -> Result<Vec<Face>, RaytraceError> {
    let geometry = |message: String| RaytraceError::Geometry {
        building: index,
        message,
    };
    if !(building.height_m > 0.0 && building.height_m.is_finite()) {
        return Err(RaytraceError::Validation {
            building: index,
            message: format!("height must be positive, got {}", building.height_m),
        });
    }
    let mut ring: Vec<[f64; 2]> = building.footprint.clone();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(geometry(format!("footprint has {} vertices", ring.len())));
    }
    if ring.iter().flatten().any(|v| !v.is_finite()) {
        return Err(geometry("non-finite footprint coordinate".into()));
    }
    let n = ring.len();
    for k in 0..n {
        if ring[k] == ring[(k + 1) % n] {
            return Err(geometry(format!("repeated vertex at index {k}")));
        }
    }
    if let Some((i, j)) = first_self_intersection(&ring) {
        return Err(geometry(format!("footprint edges {i} and {j} intersect")));
    }
    let area = signed_area(&ring);
    if area.abs() < 1e-12 {
        return Err(geometry("footprint has zero area".into()));
    }
    if area < 0.0 {
        ring.reverse();
    }

    let h = building.height_m;
    let mut faces = Vec::with_capacity(n + 1);
    for k in 0..n {
        let [ax, ay] = ring[k];
        let [bx, by] = ring[(k + 1) % n];
        let len = (bx - ax).hypot(by - ay);
        faces.push(Face {
            vertices: vec![
                Vector3::new(ax, ay, 0.0),
                Vector3::new(bx, by, 0.0),
                Vector3::new(bx, by, h),
                Vector3::new(ax, ay, h),
            ],
            normal: Vector3::new((by - ay) / len, -(bx - ax) / len, 0.0),
            kind: FaceKind::Wall,
            building: index,
        });
    }
    let roof = |poly: &[[f64; 2]]| Face {
        vertices: poly.iter().map(|&[x, y]| Vector3::new(x, y, h)).collect(),
        normal: Vector3::z(),
        kind: FaceKind::Roof,
        building: index,
    };
    if is_convex(&ring) {
        faces.push(roof(&ring));
    } else {
        faces.extend(ear_clip(&ring).iter().map(|tri| roof(tri)));
    }
    Ok(faces)
}

fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    0.5 * (0..n)
        .map(|k| {
            let [x0, y0] = ring[k];
            let [x1, y1] = ring[(k + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convexity of a counter-clockwise ring; collinear runs count as convex.
fn is_convex(ring: &[[f64; 2]]) -> bool {
    let n = ring.len();
    (0..n).all(|k| cross2(ring[k], ring[(k + 1) % n], ring[(k + 2) % n]) >= 0.0)
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross2(q1, q2, p1);
    let d2 = cross2(q1, q2, p2);
    let d3 = cross2(p1, p2, q1);
    let d4 = cross2(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], p: [f64; 2], d: f64| {
        d == 0.0
            && p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn first_self_intersection(ring: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        for j in i + 1..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Triangulates a simple counter-clockwise ring.
fn ear_clip(ring: &[[f64; 2]]) -> Vec<[[f64; 2]; 3]> {
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut out = Vec::with_capacity(ring.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&k| {
            let (a, b, c) = (
                ring[idx[(k + m - 1) % m]],
                ring[idx[k]],
                ring[idx[(k + 1) % m]],
            );
            if cross2(a, b, c) <= 0.0 {
                return false;
            }
            idx.iter().all(|&q| {
                let p = ring[q];
                p == a
                    || p == b
                    || p == c
                    || !(cross2(a, b, p) >= 0.0 && cross2(b, c, p) >= 0.0 && cross2(c, a, p) >= 0.0)
            })
        });
        // A simple polygon always has an ear; fall back to the first vertex
        // only under floating-point degeneracy.
        let k = ear.unwrap_or(0);
        out.push([
            ring[idx[(k + m - 1) % m]],
            ring[idx[k]],
            ring[idx[(k + 1) % m]],
        ]);
        idx.remove(k);
    }
    out.push([ring[idx[0]], ring[idx[1]], ring[idx[2]]]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(buildings: Vec<BuildingSpec>) -> SceneSpec {
        SceneSpec {
            origin: Origin {
                lat: 37.38,
                lon: 126.67,
            },
            ground_plane: false,
            buildings,
        }
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64, h: f64) -> BuildingSpec {
        BuildingSpec {
            footprint: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
            height_m: h,
        }
    }

    #[test]
    fn square_extrudes_to_four_walls_and_roof() {
        let scene = Scene::from_spec(spec(vec![rect(0.0, 0.0, 10.0, 10.0, 20.0)])).unwrap();
        assert_eq!(scene.faces.len(), 5);
        assert_eq!(
            scene
                .faces
                .iter()
                .filter(|f| f.kind == FaceKind::Roof)
                .count(),
            1
        );
        // south wall faces south
        assert!((scene.faces[0].normal - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
        let centroid = Vector3::new(5.0, 5.0, 10.0);
        for face in &scene.faces {
            assert!((face.normal.norm() - 1.0).abs() < 1e-12);
            assert!(
                face.normal.dot(&(face.vertices[0] - centroid)) > 0.0,
                "normal points outward"
            );
            for v in &face.vertices {
                assert!((face.normal.dot(v) - face.offset()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empty_and_two_buildings() {
        let scene =
            load_scene(br#"{"origin":{"lat":0,"lon":0},"ground_plane":true,"buildings":[]}"#)
                .unwrap();
        assert!(scene.faces.is_empty());
        assert!(scene.ground_plane);
        let scene = Scene::from_spec(spec(vec![
            rect(0.0, 0.0, 10.0, 10.0, 20.0),
            rect(20.0, 0.0, 30.0, 5.0, 8.0),
        ]))
        .unwrap();
        assert_eq!(scene.faces.len(), 10);
    }

    #[test]
    fn clockwise_footprint_is_reoriented() {
        let mut b = rect(0.0, 0.0, 10.0, 10.0, 20.0);
        b.footprint.reverse();
        let scene = Scene::from_spec(spec(vec![b])).unwrap();
        let centroid = Vector3::new(5.0, 5.0, 10.0);
        for face in &scene.faces {
            assert!(face.normal.dot(&(face.vertices[0] - centroid)) > 0.0);
        }
    }

    #[test]
    fn non_convex_roof_is_triangulated() {
        let l_shape = BuildingSpec {
            footprint: vec![
                [0.0, 0.0],
                [10.0, 0.0],
                [10.0, 4.0],
                [4.0, 4.0],
                [4.0, 10.0],
                [0.0, 10.0],
            ],
            height_m: 12.0,
        };
        let scene = Scene::from_spec(spec(vec![l_shape])).unwrap();
        let roofs: Vec<_> = scene
            .faces
            .iter()
            .filter(|f| f.kind == FaceKind::Roof)
            .collect();
        assert_eq!(roofs.len(), 4);
        let area: f64 = roofs
            .iter()
            .map(|f| {
                0.5 * (f.vertices[1] - f.vertices[0])
                    .cross(&(f.vertices[2] - f.vertices[0]))
                    .z
            })
            .sum();
        assert!((area - 64.0).abs() < 1e-9);
        assert!(roofs
            .iter()
            .any(|f| f.contains(&Vector3::new(1.0, 9.0, 12.0))));
        assert!(!roofs
            .iter()
            .any(|f| f.contains(&Vector3::new(7.0, 7.0, 12.0))));
    }

    #[test]
    fn invalid_buildings_are_rejected() {
        let bow_tie = BuildingSpec {
            footprint: vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]],
            height_m: 5.0,
        };
        assert!(matches!(
            Scene::from_spec(spec(vec![bow_tie])).unwrap_err(),
            RaytraceError::Geometry { building: 0, .. }
        ));
        assert!(matches!(
            Scene::from_spec(spec(vec![rect(0.0, 0.0, 1.0, 1.0, 0.0)])).unwrap_err(),
            RaytraceError::Validation { building: 0, .. }
        ));
        assert!(matches!(
            Scene::from_spec(spec(vec![
                rect(0.0, 0.0, 1.0, 1.0, 5.0),
                rect(0.0, 0.0, 1.0, 1.0, -2.0)
            ]))
            .unwrap_err(),
            RaytraceError::Validation { building: 1, .. }
        ));
        assert!(matches!(
            load_scene(b"{not json").unwrap_err(),
            RaytraceError::SceneFormat(_)
        ));
    }

    #[test]
    fn containment_includes_boundary() {
        let scene = Scene::from_spec(spec(vec![rect(0.0, 0.0, 10.0, 10.0, 20.0)])).unwrap();
        let south = &scene.faces[0];
        assert!(south.contains(&Vector3::new(5.0, 0.0, 10.0)));
        assert!(south.contains(&Vector3::new(0.0, 0.0, 0.0)));
        assert!(!south.contains(&Vector3::new(11.0, 0.0, 10.0)));
        assert!(!south.contains(&Vector3::new(5.0, 0.0, 20.5)));
        assert!(!south.contains_strictly(&Vector3::new(5.0, 0.0, 20.0)));
        assert!(south.contains_strictly(&Vector3::new(5.0, 0.0, 19.0)));
    }
}
