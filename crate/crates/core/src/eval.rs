//! Synthetic observations from ray-traced labels, and detector scoring.
//!
//! The synthesis model is a stand-in for field data: a clean ΔC/N0 curve over
//! elevation, a fixed penalty when the label contains reflected paths, and
//! Gaussian noise. Nothing here is measured data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Decision, Verdict};
use crate::obs::{
    quantize_cn0, ObservationRecord, CN0_MAX_DBHZ, CN0_MIN_DBHZ, QUANTIZATION_STEP_DB,
};
use crate::raytracer::{Condition, PathReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("synthesis model: {0}")]
    InvalidModel(String),
    #[error("label listed twice for epoch {epoch}, PRN {prn}")]
    DuplicateLabel { epoch: i64, prn: u8 },
    #[error("{total} decision(s) have no label; first keys (epoch, prn): {keys:?}")]
    Join { keys: Vec<(i64, u8)>, total: usize },
}

/// Piecewise-linear function of elevation, held constant beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElevationCurve {
    /// `(elevation_deg, value)` with strictly increasing elevations.
    pub knots: Vec<(f64, f64)>,
}

impl ElevationCurve {
    pub fn new(knots: Vec<(f64, f64)>) -> Self {
        Self { knots }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![(0.0, value), (90.0, value)])
    }

    pub fn at(&self, elevation_deg: f64) -> f64 {
        let k = &self.knots;
        if elevation_deg <= k[0].0 {
            return k[0].1;
        }
        let upper = k.partition_point(|&(e, _)| e < elevation_deg);
        if upper == k.len() {
            return k[k.len() - 1].1;
        }
        let (e1, v1) = k[upper];
        if e1 == elevation_deg {
            return v1;
        }
        let (e0, v0) = k[upper - 1];
        v0 + (v1 - v0) * (elevation_deg - e0) / (e1 - e0)
    }

    fn validate(&self, name: &str) -> Result<(), EvalError> {
        let bad = |msg: &str| EvalError::InvalidModel(format!("{name}: {msg}"));
        let (Some(first), Some(last)) = (self.knots.first(), self.knots.last()) else {
            return Err(bad("no knots"));
        };
        if first.0 > 0.0 || last.0 < 90.0 {
            return Err(bad("knots must cover 0 to 90 degrees"));
        }
        if self.knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(bad("knot elevations must increase"));
        }
        if self
            .knots
            .iter()
            .any(|(e, v)| !e.is_finite() || !v.is_finite())
        {
            return Err(bad("non-finite knot"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisModel {
    pub clean_rhcp_db: ElevationCurve,
    pub clean_diff_db: ElevationCurve,
    pub multipath_diff_penalty_db: f64,
    pub noise_sigma_db: f64,
    pub seed: u64,
}

impl Default for SynthesisModel {
    /// Clean ΔC/N0 rising 6 → 14 dB over 10° → 35°, 8 dB multipath penalty,
    /// 1.5 dB noise.
    fn default() -> Self {
        Self {
            clean_rhcp_db: ElevationCurve::new(vec![
                (0.0, 36.0),
                (10.0, 38.0),
                (35.0, 46.0),
                (90.0, 50.0),
            ]),
            clean_diff_db: ElevationCurve::new(vec![
                (0.0, 6.0),
                (10.0, 6.0),
                (35.0, 14.0),
                (90.0, 14.0),
            ]),
            multipath_diff_penalty_db: 8.0,
            noise_sigma_db: 1.5,
            seed: 0,
        }
    }
}

impl SynthesisModel {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.multipath_diff_penalty_db > 0.0) {
            return Err(EvalError::InvalidModel("penalty must be positive".into()));
        }
        if !(self.noise_sigma_db >= 0.0 && self.noise_sigma_db.is_finite()) {
            return Err(EvalError::InvalidModel("sigma must be non-negative".into()));
        }
        self.clean_rhcp_db.validate("clean_rhcp_db")?;
        self.clean_diff_db.validate("clean_diff_db")
    }
}

/// Ground-truth condition of one (epoch, prn).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledEpoch {
    pub epoch: i64,
    pub prn: u8,
    pub elevation_deg: f64,
    pub label: Condition,
}

impl LabeledEpoch {
    pub fn key(&self) -> (i64, u8) {
        (self.epoch, self.prn)
    }
}

impl From<&PathReport> for LabeledEpoch {
    fn from(r: &PathReport) -> Self {
        Self {
            epoch: r.epoch,
            prn: r.prn,
            elevation_deg: r.elevation_deg,
            label: r.label.label,
        }
    }
}

/// Draws one dual-channel record per non-blocked label.
///
/// Each (epoch, prn) uses its own ChaCha stream of `model.seed`, so the
/// output does not depend on label order.
pub fn synthesize(
    labels: &[LabeledEpoch],
    model: &SynthesisModel,
) -> Result<Vec<ObservationRecord>, EvalError> {
    model.validate()?;
    let noise = Normal::new(0.0, model.noise_sigma_db)
        .map_err(|e| EvalError::InvalidModel(e.to_string()))?;
    let mut out: BTreeMap<(i64, u8), ObservationRecord> = BTreeMap::new();
    for l in labels {
        if l.label == Condition::Blocked {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(stream_id(l.epoch, l.prn));
        let (n_rhcp, n_diff) = if model.noise_sigma_db > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        let penalty = if l.label.is_multipath() {
            model.multipath_diff_penalty_db
        } else {
            0.0
        };
        let clamp = |v: f64| v.clamp(CN0_MIN_DBHZ, CN0_MAX_DBHZ);
        let rhcp = clamp(quantize_cn0(
            model.clean_rhcp_db.at(l.elevation_deg) + n_rhcp,
            QUANTIZATION_STEP_DB,
        ));
        let diff = quantize_cn0(
            model.clean_diff_db.at(l.elevation_deg) - penalty + n_diff,
            QUANTIZATION_STEP_DB,
        );
        let lhcp = clamp(rhcp - diff);
        let record =
            ObservationRecord::new(l.epoch, l.prn, rhcp, lhcp).with_elevation(l.elevation_deg);
        if out.insert(l.key(), record).is_some() {
            return Err(EvalError::DuplicateLabel {
                epoch: l.epoch,
                prn: l.prn,
            });
        }
    }
    Ok(out.into_values().collect())
}

fn stream_id(epoch: i64, prn: u8) -> u64 {
    ((epoch as u64) << 8) | prn as u64
}

/// Records whose label is LOS-only, the low-multipath calibration subset.
pub fn los_only(records: &[ObservationRecord], labels: &[LabeledEpoch]) -> Vec<ObservationRecord> {
    let clean: BTreeSet<(i64, u8)> = labels
        .iter()
        .filter(|l| l.label == Condition::LosOnly)
        .map(LabeledEpoch::key)
        .collect();
    records
        .iter()
        .filter(|r| clean.contains(&r.key()))
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    /// TP / (TP + FN); `None` without positives.
    pub fn detection_rate(&self) -> Option<f64> {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    /// FP / (FP + TN); `None` without negatives.
    pub fn false_alarm_rate(&self) -> Option<f64> {
        ratio(
            self.false_positive,
            self.false_positive + self.true_negative,
        )
    }

    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
            (false, true) => self.false_negative += 1,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    /// `null` when undefined.
    pub detection_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    /// Decisions outside the calibrated elevation range, not scored.
    pub out_of_range: u64,
    /// Decisions whose label has no traced path, not scored.
    pub blocked: u64,
    pub per_prn: BTreeMap<u8, Confusion>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rate = |r: Option<f64>| r.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.4}"));
        let c = &self.confusion;
        writeln!(f, "scored decisions   {}", c.total())?;
        writeln!(f, "out of range       {}", self.out_of_range)?;
        writeln!(f, "blocked label      {}", self.blocked)?;
        writeln!(f, "detection rate     {}", rate(self.detection_rate))?;
        writeln!(f, "false alarm rate   {}", rate(self.false_alarm_rate))?;
        writeln!(f)?;
        writeln!(
            f,
            "{:>4} {:>8} {:>8} {:>8} {:>8}",
            "PRN", "TP", "FP", "TN", "FN"
        )?;
        for (prn, c) in &self.per_prn {
            writeln!(
                f,
                "{:>4} {:>8} {:>8} {:>8} {:>8}",
                prn, c.true_positive, c.false_positive, c.true_negative, c.false_negative
            )?;
        }
        writeln!(
            f,
            "{:>4} {:>8} {:>8} {:>8} {:>8}",
            "all", c.true_positive, c.false_positive, c.true_negative, c.false_negative
        )
    }
}

/// Scores in-range decisions against labels joined on (epoch, prn).
///
/// Positives are labels containing reflected paths (LOS+NLOS and NLOS-only).
pub fn score(decisions: &[Decision], labels: &[LabeledEpoch]) -> Result<EvalReport, EvalError> {
    let by_key: BTreeMap<(i64, u8), Condition> =
        labels.iter().map(|l| (l.key(), l.label)).collect();
    let mut unmatched: Vec<(i64, u8)> = decisions
        .iter()
        .map(Decision::key)
        .filter(|k| !by_key.contains_key(k))
        .collect();
    if !unmatched.is_empty() {
        unmatched.sort_unstable();
        let total = unmatched.len();
        unmatched.truncate(10);
        return Err(EvalError::Join {
            keys: unmatched,
            total,
        });
    }

    let mut confusion = Confusion::default();
    let mut per_prn: BTreeMap<u8, Confusion> = BTreeMap::new();
    let (mut out_of_range, mut blocked) = (0, 0);
    for d in decisions {
        let label = by_key[&d.key()];
        if d.verdict == Verdict::OutOfRange {
            out_of_range += 1;
            continue;
        }
        if label == Condition::Blocked {
            blocked += 1;
            continue;
        }
        let predicted = d.verdict == Verdict::Multipath;
        confusion.add(predicted, label.is_multipath());
        per_prn
            .entry(d.prn)
            .or_default()
            .add(predicted, label.is_multipath());
    }
    Ok(EvalReport {
        detection_rate: confusion.detection_rate(),
        false_alarm_rate: confusion.false_alarm_rate(),
        confusion,
        out_of_range,
        blocked,
        per_prn,
    })
}
