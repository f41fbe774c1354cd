//! Deterministic blade deviation analytics.
//!
//! Every quantity here is a pure function of its inputs. Units are inches for
//! deviations and offsets, degrees for the tool tilt. A positive deviation
//! means surplus material along the outward surface normal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub mod attribution;
pub mod compensation;
pub mod drift;
pub mod fixture;
pub mod layout;
pub mod pairs;
pub mod pathing;
pub mod slices;
pub mod stats;

pub use attribution::{rb_compute_attribution_fractions, AttributionResult, DEFAULT_EPSILON};
pub use compensation::{
    rb_compute_pair_tool_comp, rb_compute_radius_offset, rb_compute_tool_length,
    CompensationVector, DeltaStrategy, TiltAngle, DEFAULT_TILT_DEG,
};
pub use drift::{
    rb_compute_process_variability, rb_compute_residual_systematic, rb_compute_wear_drift,
    DriftFit, ResidualSystematic,
};
pub use layout::LevelLayout;
pub use pairs::{
    compute_inspection_pairs, InspectionRow, InspectionTable, PairMeasurement, PairSeries,
    series_from_measurements, PairingReport, UnmatchedPoint,
};
pub use pathing::{rb_compute_pathing_dev, PathingExport, PathingField};
pub use slices::{fetch_inspection_slices, InspectionSlice, SliceSelector};

/// Offset between a pressure-side point and its suction-side partner.
pub const PARTNER_OFFSET: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BladeError {
    #[error("malformed pair key {0:?}: expected \"i+j\" with j = i + 15")]
    MalformedPairKey(String),
    #[error("invalid part range {start}..{end}")]
    InvalidPartRange { start: u32, end: u32 },
    #[error("duplicate (part {part}, point {point}) rows at lines {lines:?}")]
    DuplicateRows { part: u32, point: u32, lines: Vec<u64> },
    #[error("inspection table: {0}")]
    Table(String),
    #[error("pair {0} part indices must be strictly increasing")]
    UnorderedParts(PairKey),
    #[error("insufficient data: {needed} observations needed, {got} available")]
    InsufficientData { needed: usize, got: usize },
    #[error("process variability unavailable for N = {0} (needs N >= 3)")]
    VariabilityUnavailable(usize),
    #[error("pathing export has no entry for pair {0}")]
    MissingPathingKey(PairKey),
    #[error("tilt angle {0} deg outside the open interval (0, 90)")]
    TiltOutOfRange(f64),
    #[error("epsilon floor must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("target part must be >= 1")]
    InvalidTargetPart,
    #[error("pair {0} outside the level layout")]
    OutsideLayout(PairKey),
    #[error("empty input")]
    Empty,
}

/// Inspection pair identifier `i+(i+15)`, ordered by the pressure-side index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    pressure: u32,
}

impl PairKey {
    pub fn new(pressure: u32) -> Self {
        Self { pressure }
    }

    pub fn pressure_point(self) -> u32 {
        self.pressure
    }

    pub fn suction_point(self) -> u32 {
        self.pressure + PARTNER_OFFSET
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.pressure, self.suction_point())
    }
}

impl FromStr for PairKey {
    type Err = BladeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BladeError::MalformedPairKey(s.to_string());
        let (a, b) = s.trim().split_once('+').ok_or_else(bad)?;
        let i: u32 = a.trim().parse().map_err(|_| bad())?;
        let j: u32 = b.trim().parse().map_err(|_| bad())?;
        if i == 0 || j != i + PARTNER_OFFSET {
            return Err(bad());
        }
        Ok(Self::new(i))
    }
}

impl Serialize for PairKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive range of 1-based part indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartRange {
    pub start: u32,
    pub end: u32,
}

impl PartRange {
    pub fn new(start: u32, end: u32) -> Result<Self, BladeError> {
        if start == 0 || start > end {
            return Err(BladeError::InvalidPartRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, part: u32) -> bool {
        (self.start..=self.end).contains(&part)
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }
}

impl fmt::Display for PartRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for PartRange {
    type Err = BladeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (a, b) = t
            .split_once(['-', '\u{2013}', ':'])
            .unwrap_or((t, t));
        let parse = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| BladeError::Table(format!("bad part range {s:?}")))
        };
        PartRange::new(parse(a)?, parse(b)?)
    }
}
