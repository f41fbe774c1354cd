//! Fixed-tilt compensation geometry.
//!
//! A signed correction `delta` along the tool axis maps to a tool-length
//! offset `delta cos(theta)` and a tool-radius offset `delta sin(theta)`.

use serde::{Deserialize, Serialize};

use super::drift::DriftFit;
use super::{BladeError, PairKey};

pub const DEFAULT_TILT_DEG: f64 = 25.0;

/// Tool tilt in degrees, validated to lie in the open interval (0, 90).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TiltAngle(f64);

impl TiltAngle {
    pub fn new(degrees: f64) -> Result<Self, BladeError> {
        if degrees > 0.0 && degrees < 90.0 {
            Ok(Self(degrees))
        } else {
            Err(BladeError::TiltOutOfRange(degrees))
        }
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

impl Default for TiltAngle {
    fn default() -> Self {
        Self(DEFAULT_TILT_DEG)
    }
}

impl TryFrom<f64> for TiltAngle {
    type Error = BladeError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TiltAngle> for f64 {
    fn from(t: TiltAngle) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationVector {
    pub pair_key: PairKey,
    pub delta: f64,
    /// Tool length (axial) offset.
    pub t_l: f64,
    /// Tool radius (radial) offset.
    pub t_r: f64,
    pub theta_deg: f64,
}

impl CompensationVector {
    /// `[t_r, t_l]`, the order used by the CAM offset tables.
    pub fn as_array(&self) -> [f64; 2] {
        [self.t_r, self.t_l]
    }
}

pub fn rb_compute_tool_length(delta: f64, theta_deg: f64) -> Result<f64, BladeError> {
    Ok(delta * TiltAngle::new(theta_deg)?.radians().cos())
}

pub fn rb_compute_radius_offset(delta: f64, theta_deg: f64) -> Result<f64, BladeError> {
    Ok(delta * TiltAngle::new(theta_deg)?.radians().sin())
}

pub fn rb_compute_pair_tool_comp(
    pair_key: PairKey,
    delta: f64,
    theta_deg: f64,
) -> Result<CompensationVector, BladeError> {
    Ok(CompensationVector {
        pair_key,
        delta,
        t_l: rb_compute_tool_length(delta, theta_deg)?,
        t_r: rb_compute_radius_offset(delta, theta_deg)?,
        theta_deg,
    })
}

/// Which deviation component becomes the correction `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum DeltaStrategy {
    /// Mean surface deviation over the selected parts.
    #[default]
    MeanDeviation,
    /// Drift component `b (n* - 1)` at the target part.
    DriftAtTarget { target_part: u32 },
    /// Residual systematic term clipped to `[-limit, limit]`.
    BoundedResidual { limit: f64 },
}

impl DeltaStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MeanDeviation => "mean-deviation",
            Self::DriftAtTarget { .. } => "drift-at-target",
            Self::BoundedResidual { .. } => "bounded-residual",
        }
    }

    /// Correction for one pair. Mean deviation only needs surface values;
    /// the other strategies need a drift fit.
    pub fn delta(&self, surface: &[f64], fit: Option<&DriftFit>) -> Result<f64, BladeError> {
        match *self {
            Self::MeanDeviation => super::stats::rb_compute_average(surface),
            Self::DriftAtTarget { target_part } => {
                let fit = fit.ok_or(BladeError::Empty)?;
                if target_part == 0 {
                    return Err(BladeError::InvalidTargetPart);
                }
                Ok(fit.b * (f64::from(target_part) - 1.0))
            }
            Self::BoundedResidual { limit } => {
                let fit = fit.ok_or(BladeError::Empty)?;
                Ok(fit.c.clamp(-limit.abs(), limit.abs()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_delta() {
        let v = rb_compute_pair_tool_comp(PairKey::new(2), 0.0, 25.0).unwrap();
        assert_eq!((v.t_r, v.t_l), (0.0, 0.0));
    }

    #[test]
    fn published_rows() {
        let sin25 = 25f64.to_radians().sin();
        for (key, trc, tlc) in [(2, 0.001164, 0.002497), (16, 0.001620, 0.003474)] {
            let v = rb_compute_pair_tool_comp(PairKey::new(key), trc / sin25, 25.0).unwrap();
            assert!((v.t_r - trc).abs() < 1e-12);
            assert!((v.t_l - tlc).abs() < 1e-6, "{} vs {tlc}", v.t_l);
        }
        // Deltas rounded to 6 decimals: rounding error (5e-7) plus the table's
        // own print rounding (5e-7) bounds the mismatch.
        let v = rb_compute_pair_tool_comp(PairKey::new(2), 0.002754, 25.0).unwrap();
        assert!((v.t_r - 0.001164).abs() < 1e-6 && (v.t_l - 0.002497).abs() < 1.5e-6);
        let v = rb_compute_pair_tool_comp(PairKey::new(16), 0.003834, 25.0).unwrap();
        assert!((v.t_r - 0.001620).abs() < 1e-6 && (v.t_l - 0.003474).abs() < 1.5e-6);
    }

    #[test]
    fn tilt_bounds() {
        for bad in [0.0, 90.0, -5.0, 120.0, f64::NAN] {
            assert!(rb_compute_pair_tool_comp(PairKey::new(2), 0.001, bad).is_err());
        }
        assert_eq!(TiltAngle::default().degrees(), 25.0);
    }

    #[test]
    fn strategies() {
        let series = crate::blade::PairSeries::new(
            PairKey::new(2),
            vec![(1, 0.002), (2, 0.003), (3, 0.004)],
        )
        .unwrap();
        let fit = crate::blade::rb_compute_wear_drift(&series).unwrap();
        let s = series.surface_values();
        assert!((DeltaStrategy::MeanDeviation.delta(&s, None).unwrap() - 0.003).abs() < 1e-15);
        let d = DeltaStrategy::DriftAtTarget { target_part: 5 }.delta(&s, Some(&fit)).unwrap();
        assert!((d - 0.004).abs() < 1e-15);
        let d = DeltaStrategy::BoundedResidual { limit: 0.0015 }.delta(&s, Some(&fit)).unwrap();
        assert_eq!(d, 0.0015);
        assert!(DeltaStrategy::BoundedResidual { limit: 1.0 }.delta(&s, None).is_err());
    }

    proptest! {
        #[test]
        fn ratio_is_cot_theta(delta in prop_oneof![-0.01f64..-1e-6, 1e-6f64..0.01], theta in 1.0f64..89.0) {
            let v = rb_compute_pair_tool_comp(PairKey::new(2), delta, theta).unwrap();
            let cot = 1.0 / theta.to_radians().tan();
            prop_assert!((v.t_l / v.t_r - cot).abs() <= 1e-9 * cot.max(1.0));
            prop_assert!((v.t_l - delta * theta.to_radians().cos()).abs() < 1e-12);
            prop_assert!((v.t_r - delta * theta.to_radians().sin()).abs() < 1e-12);
        }
    }
}
