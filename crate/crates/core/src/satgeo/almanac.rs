use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SatGeoError;

/// Keplerian almanac elements of one GPS satellite, as carried by a YUMA block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmanacEntry {
    pub prn: u8,
    pub health: u32,
    pub eccentricity: f64,
    /// Reference time, seconds of the almanac week.
    pub toa: f64,
    /// Full inclination, radians.
    pub inclination: f64,
    /// Rate of right ascension, rad/s.
    pub raan_rate: f64,
    /// Square root of the semi-major axis, m^(1/2).
    pub sqrt_a: f64,
    /// Longitude of the ascending node at the start of the week, radians.
    pub raan: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    pub af0: f64,
    pub af1: f64,
    /// 10-bit GPS week number.
    pub week: u32,
}

impl AlmanacEntry {
    pub fn semi_major_axis(&self) -> f64 {
        self.sqrt_a * self.sqrt_a
    }

    fn validate(&self) -> Result<(), SatGeoError> {
        let fail = |field, value| SatGeoError::Validation {
            prn: self.prn,
            field,
            value,
        };
        if !(0.0..0.1).contains(&self.eccentricity) {
            return Err(fail("eccentricity", self.eccentricity));
        }
        let a = self.semi_major_axis();
        if !(a > 20.0e6 && a < 33.0e6) {
            return Err(fail("sqrt_a", self.sqrt_a));
        }
        for (field, value) in [
            ("toa", self.toa),
            ("inclination", self.inclination),
            ("raan_rate", self.raan_rate),
            ("raan", self.raan),
            ("arg_perigee", self.arg_perigee),
            ("mean_anomaly", self.mean_anomaly),
        ] {
            if !value.is_finite() {
                return Err(fail(field, value));
            }
        }
        Ok(())
    }
}

/// Almanac entries keyed by PRN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Almanac {
    entries: BTreeMap<u8, AlmanacEntry>,
}

impl Almanac {
    pub fn new(entries: impl IntoIterator<Item = AlmanacEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.prn, e)).collect(),
        }
    }

    pub fn get(&self, prn: u8) -> Option<&AlmanacEntry> {
        self.entries.get(&prn)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AlmanacEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Id,
    Health,
    Eccentricity,
    Toa,
    Inclination,
    RaanRate,
    SqrtA,
    Raan,
    ArgPerigee,
    MeanAnomaly,
    Af0,
    Af1,
    Week,
}

impl Field {
    const REQUIRED: [Field; 10] = [
        Field::Id,
        Field::Eccentricity,
        Field::Toa,
        Field::Inclination,
        Field::RaanRate,
        Field::SqrtA,
        Field::Raan,
        Field::ArgPerigee,
        Field::MeanAnomaly,
        Field::Week,
    ];

    fn from_label(label: &str) -> Option<Field> {
        let label = label.trim().to_ascii_lowercase();
        let field = match () {
            _ if label == "id" => Field::Id,
            _ if label.starts_with("health") => Field::Health,
            _ if label.starts_with("eccentricity") => Field::Eccentricity,
            _ if label.starts_with("time of applicability") => Field::Toa,
            _ if label.starts_with("orbital inclination") => Field::Inclination,
            _ if label.starts_with("rate of right ascen") => Field::RaanRate,
            _ if label.starts_with("sqrt(a)") => Field::SqrtA,
            _ if label.starts_with("right ascen at week") => Field::Raan,
            _ if label.starts_with("argument of perigee") => Field::ArgPerigee,
            _ if label.starts_with("mean anom") => Field::MeanAnomaly,
            _ if label.starts_with("af0") => Field::Af0,
            _ if label.starts_with("af1") => Field::Af1,
            _ if label == "week" => Field::Week,
            _ => return None,
        };
        Some(field)
    }

    fn name(self) -> &'static str {
        match self {
            Field::Id => "ID",
            Field::Health => "Health",
            Field::Eccentricity => "Eccentricity",
            Field::Toa => "Time of Applicability",
            Field::Inclination => "Orbital Inclination",
            Field::RaanRate => "Rate of Right Ascen",
            Field::SqrtA => "SQRT(A)",
            Field::Raan => "Right Ascen at Week",
            Field::ArgPerigee => "Argument of Perigee",
            Field::MeanAnomaly => "Mean Anom",
            Field::Af0 => "Af0",
            Field::Af1 => "Af1",
            Field::Week => "week",
        }
    }
}

#[derive(Default)]
struct Block {
    values: Vec<(Field, String)>,
}

impl Block {
    fn get(&self, field: Field) -> Option<&str> {
        self.values
            .iter()
            .find(|(f, _)| *f == field)
            .map(|(_, v)| v.as_str())
    }

    fn number(&self, index: usize, field: Field) -> Result<f64, SatGeoError> {
        let raw = self.get(field).ok_or(SatGeoError::MissingField {
            block: index,
            field: field.name(),
        })?;
        raw.parse().map_err(|_| SatGeoError::InvalidValue {
            block: index,
            field: field.name(),
            value: raw.to_owned(),
        })
    }

    fn optional(&self, index: usize, field: Field) -> Result<f64, SatGeoError> {
        match self.get(field) {
            Some(_) => self.number(index, field),
            None => Ok(0.0),
        }
    }

    fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Parses YUMA almanac text into one entry per block.
///
/// Blocks are delimited by the `****` banner line. Health and clock terms are
/// optional; every orbital field is required.
pub fn parse_yuma(text: &str) -> Result<Vec<AlmanacEntry>, SatGeoError> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut current = Block::default();
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('*') {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let Some((label, value)) = line.split_once(':') else {
            continue;
        };
        if let Some(field) = Field::from_label(label) {
            current.values.push((field, value.trim().to_owned()));
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    let mut seen = std::collections::BTreeSet::new();
    blocks
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let index = i + 1;
            for field in Field::REQUIRED {
                if block.get(field).is_none() {
                    return Err(SatGeoError::MissingField {
                        block: index,
                        field: field.name(),
                    });
                }
            }
            let prn = block.number(index, Field::Id)?;
            if !(1.0..=255.0).contains(&prn) || prn.fract() != 0.0 {
                return Err(SatGeoError::InvalidValue {
                    block: index,
                    field: Field::Id.name(),
                    value: prn.to_string(),
                });
            }
            let prn = prn as u8;
            let week = block.number(index, Field::Week)?;
            let entry = AlmanacEntry {
                prn,
                health: block.optional(index, Field::Health)? as u32,
                eccentricity: block.number(index, Field::Eccentricity)?,
                toa: block.number(index, Field::Toa)?,
                inclination: block.number(index, Field::Inclination)?,
                raan_rate: block.number(index, Field::RaanRate)?,
                sqrt_a: block.number(index, Field::SqrtA)?,
                raan: block.number(index, Field::Raan)?,
                arg_perigee: block.number(index, Field::ArgPerigee)?,
                mean_anomaly: block.number(index, Field::MeanAnomaly)?,
                af0: block.optional(index, Field::Af0)?,
                af1: block.optional(index, Field::Af1)?,
                week: (week as u32) % 1024,
            };
            entry.validate()?;
            if !seen.insert(prn) {
                return Err(SatGeoError::DuplicatePrn { prn });
            }
            Ok(entry)
        })
        .collect()
}
