//! GPS multipath detection from dual-polarized C/N0 measurements.
//!
//! A dual-polarized antenna reports C/N0 on a right-hand (RHCP) and a
//! left-hand (LHCP) circularly polarized channel. Direct GPS signals are
//! RHCP, while a single specular reflection turns them LHCP, so the
//! difference ΔC/N0 = RHCP − LHCP drops when reflected energy is present.
//!
//! The crate is organized along the processing chain:
//!
//! - [`obs`]: observation CSV parsing, channel merging and ΔC/N0.
//! - [`satgeo`]: YUMA almanac, Keplerian propagation, look angles.
//! - [`detector`]: elevation-binned threshold calibration and classification.
//! - [`raytracer`]: image-method tracing over extruded buildings, producing
//!   LOS / NLOS ground-truth labels.
//! - [`eval`]: synthetic observations from labels and confusion scoring.
//!
//! ```
//! use dualpol::detector::{calibrate, classify, Verdict};
//! use dualpol::obs::ObservationRecord;
//!
//! // low-multipath reference data: ΔC/N0 of 12 dB around 20°
//! let reference: Vec<_> = [20.1, 20.4, 20.8, 21.3]
//!     .iter()
//!     .map(|&el| ObservationRecord::new(0, 13, 45.0, 33.0).with_elevation(el))
//!     .collect();
//! let curve = calibrate(&reference, 1.0).unwrap();
//!
//! let suspect = ObservationRecord::new(60, 9, 41.0, 36.0).with_elevation(21.0);
//! assert_eq!(classify(&suspect, &curve).unwrap().verdict, Verdict::Multipath);
//! ```
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

// `!(x > 0.0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod eval;
pub mod obs;
pub mod raytracer;
pub mod satgeo;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/observations.md")]
    pub struct Observations;
    #[doc = include_str!("../../../book/src/satellite-geometry.md")]
    pub struct SatelliteGeometry;
    #[doc = include_str!("../../../book/src/detection.md")]
    pub struct Detection;
    #[doc = include_str!("../../../book/src/ray-tracing.md")]
    pub struct RayTracing;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
