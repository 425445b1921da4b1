use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scene::{Face, Scene};
use super::RaytraceError;

/// Distance from a path vertex within which hits are attributed to the vertex
/// itself and ignored, meters.
pub const OCCLUSION_EPS: f64 = 1e-6;
/// Reflections with `|cos(incidence)|` below this are grazing and discarded;
/// rays this parallel to a plane do not intersect it.
pub const GRAZING_EPS: f64 = 1e-9;
/// Vertices closer than this are the same point for deduplication.
pub const DEDUP_EPS: f64 = 1e-6;
/// Nominal receiver-to-satellite range used as the LOS path length, meters.
pub const REFERENCE_RANGE_M: f64 = 20_200_000.0;
/// Reflection order bound.
pub const MAX_ORDER: usize = 2;

/// Reflecting surface identifier: a scene face index, or the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Surface {
    Face(usize),
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Handedness {
    Rhcp,
    Lhcp,
}

impl Handedness {
    /// Each specular reflection reverses circular polarization.
    pub fn after_reflections(order: usize) -> Self {
        if order.is_multiple_of(2) {
            Handedness::Rhcp
        } else {
            Handedness::Lhcp
        }
    }
}

/// One satellite-to-receiver ray.
///
/// `vertices` runs from the receiver through each reflection point; the last
/// vertex continues toward the satellite along the arrival direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    pub order: usize,
    pub handedness: Handedness,
    /// Receiver to a plane wavefront [`REFERENCE_RANGE_M`] up-range.
    pub length_m: f64,
    pub vertices: Vec<[f64; 3]>,
    /// Surfaces hit, in receiver-to-satellite order.
    #[serde(skip)]
    pub surfaces: Vec<Surface>,
}

impl PropagationPath {
    /// Extra distance over the direct path.
    pub fn excess_length_m(&self) -> f64 {
        self.length_m - REFERENCE_RANGE_M
    }

    pub fn is_los(&self) -> bool {
        self.order == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct Plane {
    normal: Vector3<f64>,
    offset: f64,
}

impl Plane {
    fn height(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

fn plane_of(scene: &Scene, surface: Surface) -> Plane {
    match surface {
        Surface::Face(i) => Plane {
            normal: scene.faces[i].normal,
            offset: scene.faces[i].offset(),
        },
        Surface::Ground => Plane {
            normal: Vector3::z(),
            offset: 0.0,
        },
    }
}

fn surface_contains(scene: &Scene, surface: Surface, p: &Vector3<f64>) -> bool {
    match surface {
        Surface::Face(i) => scene.faces[i].contains(p),
        Surface::Ground => true,
    }
}

fn surfaces(scene: &Scene) -> impl Iterator<Item = Surface> + '_ {
    (0..scene.faces.len())
        .map(Surface::Face)
        .chain(scene.ground_plane.then_some(Surface::Ground))
}

fn mirror(dir: &Vector3<f64>, normal: &Vector3<f64>) -> Vector3<f64> {
    dir - 2.0 * dir.dot(normal) * normal
}

/// Whether the open segment from `start` (length `max_t` along unit `dir`,
/// unbounded when `None`) crosses any surface other than `skip`.
fn occluded(
    scene: &Scene,
    start: &Vector3<f64>,
    dir: &Vector3<f64>,
    max_t: Option<f64>,
    skip: &[Surface],
) -> bool {
    let hit_face = |face: &Face| -> bool {
        let denom = face.normal.dot(dir);
        if denom.abs() < GRAZING_EPS {
            return false;
        }
        let t = (face.offset() - face.normal.dot(start)) / denom;
        if t <= OCCLUSION_EPS || max_t.is_some_and(|m| t >= m - OCCLUSION_EPS) {
            return false;
        }
        face.contains_strictly(&(start + t * dir))
    };
    let blocked_by_faces = scene
        .faces
        .iter()
        .enumerate()
        .any(|(i, face)| !skip.contains(&Surface::Face(i)) && hit_face(face));
    if blocked_by_faces {
        return true;
    }
    if scene.ground_plane && !skip.contains(&Surface::Ground) && dir.z.abs() >= GRAZING_EPS {
        let t = -start.z / dir.z;
        return t > OCCLUSION_EPS && max_t.is_none_or(|m| t < m - OCCLUSION_EPS);
    }
    false
}

/// Whether the direct ray from `rx` toward a satellite at infinity is clear.
///
/// Rays running exactly within a face plane, or touching a face only along
/// its boundary, are not blocked.
pub fn los_visible(scene: &Scene, rx: &Vector3<f64>, sat_dir: &Vector3<f64>) -> bool {
    !occluded(scene, rx, sat_dir, None, &[])
}

fn unit_direction(sat_dir: &Vector3<f64>) -> Result<Vector3<f64>, RaytraceError> {
    let norm = sat_dir.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(RaytraceError::InvalidDirection);
    }
    Ok(sat_dir / norm)
}

/// Enumerates LOS and specular paths up to `max_order` reflections with the
/// image method for a plane-wave source.
///
/// For a reflector sequence the arrival direction is mirrored across each
/// plane in turn; walking back from the receiver along the mirrored
/// directions gives the reflection points. A candidate survives when every
/// point lies on its polygon, every reflection happens on the outward side,
/// and no segment is blocked.
pub fn trace_paths(
    scene: &Scene,
    rx: &Vector3<f64>,
    sat_dir: &Vector3<f64>,
    max_order: usize,
) -> Result<Vec<PropagationPath>, RaytraceError> {
    if max_order > MAX_ORDER {
        return Err(RaytraceError::InvalidMaxOrder(max_order));
    }
    let s = unit_direction(sat_dir)?;
    let mut paths = Vec::new();

    if los_visible(scene, rx, &s) {
        paths.push(build_path(rx, &[], &[], &s));
    }

    let all: Vec<Surface> = surfaces(scene).collect();
    if max_order >= 1 {
        for &surface in &all {
            if let Some(p) = single_bounce(scene, rx, &s, surface) {
                paths.push(build_path(rx, &[p], &[surface], &s));
            }
        }
    }
    if max_order >= 2 {
        for &first in &all {
            for &second in &all {
                if first == second {
                    continue;
                }
                if let Some((p_near, p_far)) = double_bounce(scene, rx, &s, first, second) {
                    paths.push(build_path(rx, &[p_near, p_far], &[second, first], &s));
                }
            }
        }
    }
    Ok(dedup(paths))
}

fn single_bounce(
    scene: &Scene,
    rx: &Vector3<f64>,
    s: &Vector3<f64>,
    surface: Surface,
) -> Option<Vector3<f64>> {
    let plane = plane_of(scene, surface);
    let cos_in = s.dot(&plane.normal);
    let h = plane.height(rx);
    if cos_in < GRAZING_EPS || h <= 0.0 {
        return None;
    }
    let look = mirror(s, &plane.normal);
    let p = rx + (h / cos_in) * look;
    if !surface_contains(scene, surface, &p) {
        return None;
    }
    let leg = p - rx;
    let leg_len = leg.norm();
    if occluded(scene, rx, &(leg / leg_len), Some(leg_len), &[surface])
        || occluded(scene, &p, s, None, &[surface])
    {
        return None;
    }
    Some(p)
}

/// `first` is hit first by the incoming wave, `second` just before the
/// receiver. Returns (point on `second`, point on `first`).
fn double_bounce(
    scene: &Scene,
    rx: &Vector3<f64>,
    s: &Vector3<f64>,
    first: Surface,
    second: Surface,
) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let far = plane_of(scene, first);
    let near = plane_of(scene, second);
    let cos_far = s.dot(&far.normal);
    if cos_far < GRAZING_EPS {
        return None;
    }
    let s1 = mirror(s, &far.normal);
    let cos_near = s1.dot(&near.normal);
    let h_rx = near.height(rx);
    if cos_near < GRAZING_EPS || h_rx <= 0.0 {
        return None;
    }
    let s2 = mirror(&s1, &near.normal);
    let p_near = rx + (h_rx / cos_near) * s2;
    let h_near = far.height(&p_near);
    if h_near <= 0.0 {
        return None;
    }
    let p_far = p_near + (h_near / cos_far) * s1;
    if !surface_contains(scene, second, &p_near) || !surface_contains(scene, first, &p_far) {
        return None;
    }
    let leg0 = p_near - rx;
    let leg1 = p_far - p_near;
    let (len0, len1) = (leg0.norm(), leg1.norm());
    if occluded(scene, rx, &(leg0 / len0), Some(len0), &[second])
        || occluded(scene, &p_near, &(leg1 / len1), Some(len1), &[second, first])
        || occluded(scene, &p_far, s, None, &[first])
    {
        return None;
    }
    Some((p_near, p_far))
}

fn build_path(
    rx: &Vector3<f64>,
    points: &[Vector3<f64>],
    surfaces: &[Surface],
    s: &Vector3<f64>,
) -> PropagationPath {
    let mut vertices = vec![*rx];
    vertices.extend_from_slice(points);
    let legs: f64 = vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let last = vertices.last().expect("receiver vertex");
    let excess = legs - s.dot(&(last - rx));
    PropagationPath {
        order: points.len(),
        handedness: Handedness::after_reflections(points.len()),
        length_m: REFERENCE_RANGE_M + excess,
        vertices: vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        surfaces: surfaces.to_vec(),
    }
}

fn same_path(a: &PropagationPath, b: &PropagationPath) -> bool {
    a.order == b.order
        && a.vertices
            .iter()
            .zip(&b.vertices)
            .all(|(u, v)| Vector3::from(*u).metric_distance(&Vector3::from(*v)) <= DEDUP_EPS)
}

fn dedup(paths: Vec<PropagationPath>) -> Vec<PropagationPath> {
    let mut kept: Vec<PropagationPath> = Vec::with_capacity(paths.len());
    for path in paths {
        if !kept.iter().any(|k| same_path(k, &path)) {
            kept.push(path);
        }
    }
    kept
}
