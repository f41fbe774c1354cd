//! Synthetic 16-part, 30-point blade data.
//!
//! Each pair follows `s = p + c + b (n - 1) + noise` with noise centred over
//! parts 4..=16, and `c` chosen so that the mean surface deviation over that
//! window equals a target correction per pair. The targets are the published
//! compensation table's radius column divided by `sin 25`, so a mean-deviation
//! compensation over parts 4 to 16 reproduces that table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pairs::{InspectionRow, InspectionTable};
use super::pathing::PathingExport;
use super::PairKey;

/// Published compensation rows: (pair key, Trc, Tlc) in inches.
pub const PUBLISHED_ROWS: [(&str, f64, f64); 15] = [
    ("2+17", 0.001164, 0.002497),
    ("3+18", 0.001030, 0.002209),
    ("4+19", 0.001063, 0.002280),
    ("5+20", 0.001104, 0.002367),
    ("6+21", 0.001138, 0.002440),
    ("7+22", 0.001253, 0.002686),
    ("8+23", 0.001466, 0.003144),
    ("9+24", 0.001290, 0.002766),
    ("10+25", 0.001356, 0.002909),
    ("11+26", 0.001513, 0.003245),
    ("12+27", 0.001475, 0.003163),
    ("13+28", 0.001556, 0.003337),
    ("14+29", 0.001670, 0.003581),
    ("15+30", 0.001528, 0.003278),
    ("16+31", 0.001620, 0.003474),
];

/// Part window over which the fixture's means are pinned.
pub const WINDOW: std::ops::RangeInclusive<u32> = 4..=16;
pub const PARTS: u32 = 16;
pub const DEFAULT_SEED: u64 = 0x5eed_b1ade;

#[derive(Debug, Clone)]
pub struct SyntheticBlade {
    pub inspection: InspectionTable,
    pub pathing: PathingExport,
    /// Generating parameters per pair: (p, c, b).
    pub truth: Vec<(PairKey, f64, f64, f64)>,
}

impl SyntheticBlade {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sin = 25f64.to_radians().sin();
        let window_mean_index =
            WINDOW.clone().map(f64::from).sum::<f64>() / WINDOW.clone().count() as f64;

        let mut rows = Vec::new();
        let mut pathing = PathingExport::default();
        let mut truth = Vec::new();
        let mut per_part: Vec<Vec<(u32, f64)>> = vec![Vec::new(); PARTS as usize];

        for (idx, &(key, trc, _)) in PUBLISHED_ROWS.iter().enumerate() {
            let key: PairKey = key.parse().expect("static keys are valid");
            let target = trc / sin;
            let p = 0.35 * target;
            let b = 1.5e-5 + 1e-6 * idx as f64;
            let c = target - p - b * (window_mean_index - 1.0);

            let mut noise: Vec<f64> = (0..PARTS).map(|_| rng.gen_range(-4e-5..4e-5)).collect();
            let window_noise = WINDOW.clone().map(|n| noise[n as usize - 1]).sum::<f64>()
                / WINDOW.clone().count() as f64;
            noise.iter_mut().for_each(|e| *e -= window_noise);

            for n in 1..=PARTS {
                let s = p + c + b * (f64::from(n) - 1.0) + noise[n as usize - 1];
                let asym = rng.gen_range(-2e-4..2e-4);
                per_part[n as usize - 1].push((key.pressure_point(), s + asym));
                per_part[n as usize - 1].push((key.suction_point(), s - asym));
            }
            pathing.combined.insert(key, round12(2.0 * p));
            truth.push((key, p, c, b));
        }

        for (i, points) in per_part.into_iter().enumerate() {
            let mut points = points;
            points.sort_by_key(|&(id, _)| id);
            for (point_id, d) in points {
                rows.push(InspectionRow { part_id: i as u32 + 1, point_id, deviation_in: round12(d) });
            }
        }
        Self { inspection: InspectionTable::from_rows(rows), pathing, truth }
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Published rows as a CSV document with the `pair_key,Trc,Tlc` header.
pub fn published_csv() -> String {
    let mut out = String::from("pair_key,Trc,Tlc\n");
    for (k, r, l) in PUBLISHED_ROWS {
        out.push_str(&format!("{k},{r:.6},{l:.6}\n"));
    }
    out
}
