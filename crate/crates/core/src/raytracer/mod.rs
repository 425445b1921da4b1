//! Existence-only ray tracing over extruded building footprints.
//!
//! The satellite is a plane-wave source along the look direction. Paths with
//! up to two specular reflections are found with the image method, each
//! reflection flipping circular handedness, and the resulting path set is
//! reduced to a [`MultipathLabel`].

mod scene;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scene::{
    load_scene, BuildingSpec, Face, FaceKind, Origin, Scene, SceneSpec, CONTAINMENT_EPS,
};
pub use trace::{
    los_visible, trace_paths, Handedness, PropagationPath, Surface, DEDUP_EPS, GRAZING_EPS,
    MAX_ORDER, OCCLUSION_EPS, REFERENCE_RANGE_M,
};

/// Default receiver antenna height above local ground, meters.
pub const DEFAULT_RX_HEIGHT_M: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RaytraceError {
    #[error("scene format: {0}")]
    SceneFormat(String),
    #[error("building {building}: {message}")]
    Validation { building: usize, message: String },
    #[error("building {building}: {message}")]
    Geometry { building: usize, message: String },
    #[error("max reflection order must be at most 2, got {0}")]
    InvalidMaxOrder(usize),
    #[error("satellite direction must be a finite non-zero vector")]
    InvalidDirection,
    #[error("path report: {0}")]
    ReportFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    LosOnly,
    LosPlusNlos,
    NlosOnly,
    Blocked,
}

impl Condition {
    /// Whether the condition contains at least one reflected path.
    pub fn is_multipath(self) -> bool {
        matches!(self, Condition::LosPlusNlos | Condition::NlosOnly)
    }
}

/// Ground-truth propagation condition of one satellite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultipathLabel {
    pub prn: u8,
    pub label: Condition,
    pub n_los: u32,
    pub n_nlos: u32,
}

/// Reduces a path set for one (prn, epoch) to its condition label.
pub fn label_condition(prn: u8, paths: &[PropagationPath]) -> MultipathLabel {
    let n_los = paths.iter().filter(|p| p.is_los()).count().min(1) as u32;
    let n_nlos = paths.iter().filter(|p| !p.is_los()).count() as u32;
    let label = match (n_los, n_nlos) {
        (1, 0) => Condition::LosOnly,
        (1, _) => Condition::LosPlusNlos,
        (_, 0) => Condition::Blocked,
        _ => Condition::NlosOnly,
    };
    MultipathLabel {
        prn,
        label,
        n_los,
        n_nlos,
    }
}

/// Traced paths and label for one (epoch, prn).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub epoch: i64,
    pub prn: u8,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub label: MultipathLabel,
    pub paths: Vec<PropagationPath>,
}

pub fn write_path_reports(reports: &[PathReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

pub fn parse_path_reports(text: &str) -> Result<Vec<PathReport>, RaytraceError> {
    serde_json::from_str(text).map_err(|e| RaytraceError::ReportFormat(e.to_string()))
}
