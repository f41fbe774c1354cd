//! Epsilon-floored attribution of the predicted deviation to pathing,
//! residual-systematic and drift components.

use serde::{Deserialize, Serialize};

use super::drift::DriftFit;
use super::{BladeError, PairKey};

/// Default epsilon floor, inches.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub pair_key: PairKey,
    pub target_part: u32,
    pub phi_p: f64,
    pub phi_c: f64,
    pub phi_d: f64,
    /// Variability relative to the predicted deviation. `None` when the fit
    /// has no dispersion estimate (N < 3).
    pub psi_v: Option<f64>,
    /// Predicted surface deviation at `target_part`.
    pub s_hat: f64,
    pub s_bar: f64,
    pub epsilon: f64,
}

impl AttributionResult {
    pub fn phi_sum(&self) -> f64 {
        self.phi_p + self.phi_c + self.phi_d
    }
}

/// Component fractions from raw magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub phi_p: f64,
    pub phi_c: f64,
    pub phi_d: f64,
    /// Total magnitude `|p| + |c| + |b (n* - 1)| + eps`.
    pub total: f64,
    pub s_hat: f64,
}

pub fn fractions(p: f64, c: f64, b: f64, target_part: u32, eps: f64) -> Result<Fractions, BladeError> {
    if target_part == 0 {
        return Err(BladeError::InvalidTargetPart);
    }
    if !(eps > 0.0) {
        return Err(BladeError::NonPositiveEpsilon(eps));
    }
    let drift = b * (f64::from(target_part) - 1.0);
    let (pa, ca, wa) = (p.abs(), c.abs(), drift.abs());
    let total = pa + ca + wa + eps;
    Ok(Fractions {
        phi_p: pa / total,
        phi_c: ca / total,
        phi_d: wa / total,
        total,
        s_hat: p + c + drift,
    })
}

pub fn rb_compute_attribution_fractions(
    p_k: f64,
    fit: &DriftFit,
    target_part: u32,
    eps: f64,
) -> Result<AttributionResult, BladeError> {
    let f = fractions(p_k, fit.c, fit.b, target_part, eps)?;
    Ok(AttributionResult {
        pair_key: fit.pair_key,
        target_part,
        phi_p: f.phi_p,
        phi_c: f.phi_c,
        phi_d: f.phi_d,
        psi_v: fit.w_v.map(|w| w / (f.s_hat.abs() + eps)),
        s_hat: f.s_hat,
        s_bar: fit.s_bar,
        epsilon: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blade::{rb_compute_wear_drift, PairSeries};
    use proptest::prelude::*;

    #[test]
    fn quarter_quarter_half() {
        // b (n* - 1) = 0.002 with n* = 3.
        let f = fractions(0.001, 0.001, 0.001, 3, 1e-9).unwrap();
        assert!((f.phi_p - 0.25).abs() < 1e-6);
        assert!((f.phi_c - 0.25).abs() < 1e-6);
        assert!((f.phi_d - 0.50).abs() < 1e-6);
    }

    #[test]
    fn prediction_formula() {
        let f = fractions(0.001, 0.0005, 0.0001, 16, 1e-9).unwrap();
        assert!((f.s_hat - 0.003).abs() < 1e-15);
        // Drift term vanishes at the first part.
        let f1 = fractions(0.001, 0.0005, 0.0001, 1, 1e-9).unwrap();
        assert_eq!(f1.s_hat, 0.001 + 0.0005);
    }

    #[test]
    fn all_zero_components() {
        let series = PairSeries::new(PairKey::new(2), vec![(1, 0.0), (2, 0.0), (3, 0.0)]).unwrap();
        let fit = rb_compute_wear_drift(&series).unwrap();
        let r = rb_compute_attribution_fractions(0.0, &fit, 5, 1e-9).unwrap();
        assert_eq!((r.phi_p, r.phi_c, r.phi_d, r.s_hat), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.psi_v, Some(0.0));
        assert!(r.psi_v.unwrap().is_finite());
    }

    #[test]
    fn psi_uses_dispersion() {
        let series =
            PairSeries::new(PairKey::new(2), vec![(1, 0.0011), (2, 0.0018), (3, 0.0031)]).unwrap();
        let fit = rb_compute_wear_drift(&series).unwrap();
        let r = rb_compute_attribution_fractions(0.0004, &fit, 4, 1e-9).unwrap();
        let expected = fit.w_v.unwrap() / (r.s_hat.abs() + 1e-9);
        assert_eq!(r.psi_v, Some(expected));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(fractions(0.0, 0.0, 0.0, 0, 1e-9), Err(BladeError::InvalidTargetPart));
        assert!(matches!(fractions(0.0, 0.0, 0.0, 1, 0.0), Err(BladeError::NonPositiveEpsilon(_))));
    }

    proptest! {
        #[test]
        fn bounds(p in -0.01f64..0.01, c in -0.01f64..0.01, b in -0.001f64..0.001, n in 1u32..40) {
            let eps = 1e-9;
            let f = fractions(p, c, b, n, eps).unwrap();
            for phi in [f.phi_p, f.phi_c, f.phi_d] {
                prop_assert!((0.0..1.0).contains(&phi));
            }
            let sum = f.phi_p + f.phi_c + f.phi_d;
            prop_assert!(sum < 1.0);
            prop_assert!(sum >= 1.0 - eps / f.total - 1e-15);
        }
    }
}
