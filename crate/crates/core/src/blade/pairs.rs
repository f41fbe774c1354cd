//! Inspection table ingestion and pressure/suction pairing.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BladeError, PairKey, PARTNER_OFFSET};

/// First and last pressure-side inspection point ids.
pub const PRESSURE_POINTS: std::ops::RangeInclusive<u32> = 2..=16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionRow {
    pub part_id: u32,
    pub point_id: u32,
    pub deviation_in: f64,
}

/// Parsed inspection export. `lines[i]` is the source line of `rows[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InspectionTable {
    pub rows: Vec<InspectionRow>,
    pub lines: Vec<u64>,
}

impl InspectionTable {
    pub fn from_rows(rows: Vec<InspectionRow>) -> Self {
        let lines = (0..rows.len() as u64).map(|i| i + 2).collect();
        Self { rows, lines }
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, BladeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| BladeError::Table(e.to_string()))?.clone();
        let mut table = Self::default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| BladeError::Table(e.to_string()))?;
            let line = rec.position().map_or(0, csv::Position::line);
            let row: InspectionRow = rec
                .deserialize(Some(&headers))
                .map_err(|e| BladeError::Table(format!("line {line}: {e}")))?;
            table.rows.push(row);
            table.lines.push(line);
        }
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BladeError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| BladeError::Table(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(file)
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            wtr.serialize(row).expect("writing to memory");
        }
        String::from_utf8(wtr.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}

/// One matched (pair, part) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub pair_key: PairKey,
    pub part: u32,
    pub delta_p: f64,
    pub delta_s: f64,
    /// Combined thickness-direction deviation `delta_p + delta_s`.
    pub v: f64,
    /// Per-surface deviation `v / 2`.
    pub s: f64,
}

impl PairMeasurement {
    pub fn new(pair_key: PairKey, part: u32, delta_p: f64, delta_s: f64) -> Self {
        let v = delta_p + delta_s;
        Self { pair_key, part, delta_p, delta_s, v, s: v / 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedPoint {
    pub part: u32,
    pub point_id: u32,
    pub line: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub measurements: Vec<PairMeasurement>,
    pub unmatched: Vec<UnmatchedPoint>,
}

impl PairingReport {
    pub fn pair_keys(&self) -> Vec<PairKey> {
        let mut keys: Vec<PairKey> = self.measurements.iter().map(|m| m.pair_key).collect();
        keys.dedup();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn parts(&self) -> Vec<u32> {
        let mut parts: Vec<u32> = self.measurements.iter().map(|m| m.part).collect();
        parts.sort_unstable();
        parts.dedup();
        parts
    }

    pub fn series(&self) -> BTreeMap<PairKey, PairSeries> {
        series_from_measurements(&self.measurements)
    }
}

/// Pairs pressure-side point `i` with suction-side point `i + 15` per part.
///
/// Points without a partner (or outside the 2..=31 layout) land in the
/// unmatched report. Duplicate `(part, point)` rows are rejected outright.
pub fn compute_inspection_pairs(table: &InspectionTable) -> Result<PairingReport, BladeError> {
    let mut seen: HashMap<(u32, u32), Vec<u64>> = HashMap::new();
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        seen.entry((row.part_id, row.point_id)).or_default().push(line);
    }
    let mut dups: Vec<_> = seen.iter().filter(|(_, l)| l.len() > 1).collect();
    dups.sort();
    if let Some((&(part, point), lines)) = dups.first() {
        return Err(BladeError::DuplicateRows { part, point, lines: (*lines).clone() });
    }

    let by_point: HashMap<(u32, u32), (f64, u64)> = table
        .rows
        .iter()
        .zip(&table.lines)
        .map(|(r, &l)| ((r.part_id, r.point_id), (r.deviation_in, l)))
        .collect();

    let mut report = PairingReport::default();
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let (part, point) = (row.part_id, row.point_id);
        let suction_range = (PRESSURE_POINTS.start() + PARTNER_OFFSET)..=(PRESSURE_POINTS.end() + PARTNER_OFFSET);
        if PRESSURE_POINTS.contains(&point) {
            match by_point.get(&(part, point + PARTNER_OFFSET)) {
                Some(&(ds, _)) => report.measurements.push(PairMeasurement::new(
                    PairKey::new(point),
                    part,
                    row.deviation_in,
                    ds,
                )),
                None => report.unmatched.push(UnmatchedPoint { part, point_id: point, line }),
            }
        } else if suction_range.contains(&point) {
            if !by_point.contains_key(&(part, point - PARTNER_OFFSET)) {
                report.unmatched.push(UnmatchedPoint { part, point_id: point, line });
            }
        } else {
            report.unmatched.push(UnmatchedPoint { part, point_id: point, line });
        }
    }
    report
        .measurements
        .sort_by_key(|a| (a.pair_key, a.part));
    report.unmatched.sort_by_key(|u| u.line);
    Ok(report)
}

/// Per-pair multi-part series of surface deviations `s_{k,n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeries {
    pub pair_key: PairKey,
    pub parts: Vec<(u32, f64)>,
    /// Pathing deviation `p_k` subtracted to form `u = s - p`; zero when absent.
    pub pathing: Option<f64>,
}

impl PairSeries {
    pub fn new(pair_key: PairKey, parts: Vec<(u32, f64)>) -> Result<Self, BladeError> {
        if parts.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(BladeError::UnorderedParts(pair_key));
        }
        Ok(Self { pair_key, parts, pathing: None })
    }

    pub fn with_pathing(mut self, p: f64) -> Self {
        self.pathing = Some(p);
        self
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn surface_values(&self) -> Vec<f64> {
        self.parts.iter().map(|&(_, s)| s).collect()
    }

    /// Non-pathing deviations `u_{k,n} = s_{k,n} - p_k`.
    pub fn non_pathing(&self) -> Vec<(u32, f64)> {
        let p = self.pathing.unwrap_or(0.0);
        self.parts.iter().map(|&(n, s)| (n, s - p)).collect()
    }
}

pub fn series_from_measurements(measurements: &[PairMeasurement]) -> BTreeMap<PairKey, PairSeries> {
    let mut grouped: BTreeMap<PairKey, Vec<(u32, f64)>> = BTreeMap::new();
    for m in measurements {
        grouped.entry(m.pair_key).or_default().push((m.part, m.s));
    }
    grouped
        .into_iter()
        .map(|(k, mut parts)| {
            parts.sort_by_key(|&(n, _)| n);
            parts.dedup_by_key(|&mut (n, _)| n);
            (k, PairSeries { pair_key: k, parts, pathing: None })
        })
        .collect()
}
