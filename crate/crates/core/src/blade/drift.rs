//! Per-pair affine drift fit over part index.
//!
//! `u_{k,n} = c_k + b_k (n - 1) + e_{k,n}` is fitted by closed-form least
//! squares. For the contiguous window `n = 1..N` the index mean is
//! `(N + 1) / 2`; for other windows the mean of the observed indices is used,
//! which is the same estimator written over absolute part numbers.

use serde::{Deserialize, Serialize};

use super::pairs::PairSeries;
use super::{BladeError, PairKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub pair_key: PairKey,
    /// Drift rate, inches per part.
    pub b: f64,
    /// Baseline systematic term at part 1, inches.
    pub c: f64,
    /// Drift magnitude at the last observed part, `b (N - 1)`.
    pub w_d: f64,
    /// Residual dispersion; `None` when N < 3.
    pub w_v: Option<f64>,
    pub residuals: Vec<f64>,
    pub parts: Vec<u32>,
    pub n_bar: f64,
    pub u_bar: f64,
    /// Pathing deviation that was removed before fitting.
    pub pathing: f64,
    /// Mean surface deviation over the fitted parts.
    pub s_bar: f64,
}

impl DriftFit {
    pub fn n(&self) -> usize {
        self.parts.len()
    }

    /// Fitted non-pathing deviation at part `n`.
    pub fn predict_u(&self, n: u32) -> f64 {
        self.c + self.b * (f64::from(n) - 1.0)
    }

    pub fn sum_sq_residuals(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }
}

pub fn rb_compute_wear_drift(series: &PairSeries) -> Result<DriftFit, BladeError> {
    let u = series.non_pathing();
    let n_obs = u.len();
    if n_obs < 2 {
        return Err(BladeError::InsufficientData { needed: 2, got: n_obs });
    }
    let nf = n_obs as f64;
    let n_bar = u.iter().map(|&(n, _)| f64::from(n)).sum::<f64>() / nf;
    let u_bar = u.iter().map(|&(_, v)| v).sum::<f64>() / nf;

    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(n, v) in &u {
        let dn = f64::from(n) - n_bar;
        sxy += dn * (v - u_bar);
        sxx += dn * dn;
    }
    let b = sxy / sxx;
    let c = u_bar - b * (n_bar - 1.0);
    let residuals: Vec<f64> = u
        .iter()
        .map(|&(n, v)| v - c - b * (f64::from(n) - 1.0))
        .collect();
    let w_v = (n_obs >= 3).then(|| dispersion(&residuals));
    let s_bar = series.parts.iter().map(|&(_, s)| s).sum::<f64>() / nf;

    Ok(DriftFit {
        pair_key: series.pair_key,
        b,
        c,
        w_d: b * (nf - 1.0),
        w_v,
        residuals,
        parts: u.iter().map(|&(n, _)| n).collect(),
        n_bar,
        u_bar,
        pathing: series.pathing.unwrap_or(0.0),
        s_bar,
    })
}

fn dispersion(residuals: &[f64]) -> f64 {
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    (ss / (residuals.len() as f64 - 2.0)).sqrt()
}

/// Residual dispersion `sqrt(sum(e^2) / (N - 2))`. Unavailable below N = 3.
pub fn rb_compute_process_variability(fit: &DriftFit) -> Result<f64, BladeError> {
    if fit.n() < 3 {
        return Err(BladeError::VariabilityUnavailable(fit.n()));
    }
    Ok(dispersion(&fit.residuals))
}

pub const RESIDUAL_SYSTEMATIC_NOTE: &str = "c_k is a residual systematic compliance term; it includes \
stiffness-related and other unmodeled systematic effects and is not uniquely identifiable as deflection alone.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSystematic {
    pub pair_key: PairKey,
    pub c: f64,
    pub note: &'static str,
}

pub fn rb_compute_residual_systematic(fit: &DriftFit) -> ResidualSystematic {
    ResidualSystematic { pair_key: fit.pair_key, c: fit.c, note: RESIDUAL_SYSTEMATIC_NOTE }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(u: &[f64]) -> PairSeries {
        let parts = u.iter().enumerate().map(|(i, &v)| (i as u32 + 1, v)).collect();
        PairSeries::new(PairKey::new(2), parts).unwrap()
    }

    /// Normal equations for the design matrix `[1, n - 1]`, solved by
    /// Cramer's rule on raw sums.
    fn normal_equations(points: &[(u32, f64)]) -> (f64, f64) {
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(n, y) in points {
            let x = f64::from(n) - 1.0;
            s0 += 1.0;
            s1 += x;
            s2 += x * x;
            t0 += y;
            t1 += x * y;
        }
        let det = s0 * s2 - s1 * s1;
        let c = (t0 * s2 - s1 * t1) / det;
        let b = (s0 * t1 - s1 * t0) / det;
        (b, c)
    }

    #[test]
    fn exact_affine_series() {
        let fit = rb_compute_wear_drift(&series(&[0.001, 0.002, 0.003])).unwrap();
        assert!((fit.b - 0.001).abs() < 1e-15);
        assert!((fit.c - 0.001).abs() < 1e-15);
        assert!((fit.w_d - 0.002).abs() < 1e-15);
        assert!(fit.w_v.unwrap() < 1e-15);
        assert_eq!(fit.n_bar, 2.0);
    }

    #[test]
    fn constant_series() {
        let fit = rb_compute_wear_drift(&series(&[0.005; 4])).unwrap();
        assert_eq!(fit.b, 0.0);
        assert!((fit.c - 0.005).abs() < 1e-15);
        assert_eq!(fit.w_d, 0.0);
        assert_eq!(rb_compute_residual_systematic(&fit).c, fit.c);
    }

    #[test]
    fn two_points_fit_without_variability() {
        let fit = rb_compute_wear_drift(&series(&[0.001, 0.004])).unwrap();
        assert!(fit.w_v.is_none());
        assert_eq!(
            rb_compute_process_variability(&fit),
            Err(BladeError::VariabilityUnavailable(2))
        );
        assert_eq!(
            rb_compute_wear_drift(&series(&[0.001])),
            Err(BladeError::InsufficientData { needed: 2, got: 1 })
        );
    }

    #[test]
    fn variability_hand_evaluation() {
        let e = 1e-4;
        let (c, b) = (0.002, 0.0003);
        let eps = [e, -2.0 * e, e];
        let u: Vec<f64> = (0..3).map(|i| c + b * i as f64 + eps[i]).collect();
        let fit = rb_compute_wear_drift(&series(&u)).unwrap();
        let wv = rb_compute_process_variability(&fit).unwrap();
        assert!((wv - e * 6f64.sqrt()).abs() < 1e-15, "{wv}");
        let flat = rb_compute_wear_drift(&series(&[0.1; 3])).unwrap();
        assert!(rb_compute_process_variability(&flat).unwrap() < 1e-15);
    }

    #[test]
    fn pathing_is_removed_before_fit() {
        let s = series(&[0.003, 0.004, 0.005]).with_pathing(0.001);
        let fit = rb_compute_wear_drift(&s).unwrap();
        assert!((fit.c - 0.002).abs() < 1e-15);
        assert!((fit.b - 0.001).abs() < 1e-15);
        assert!((fit.s_bar - 0.004).abs() < 1e-15);
    }

    #[test]
    fn non_contiguous_window_matches_oracle() {
        let pts = vec![(4, 0.0021), (5, 0.0019), (7, 0.0026), (11, 0.0030)];
        let fit = rb_compute_wear_drift(&PairSeries::new(PairKey::new(3), pts.clone()).unwrap()).unwrap();
        let (b, c) = normal_equations(&pts);
        assert!((fit.b - b).abs() < 1e-12 && (fit.c - c).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_normal_equations(u in prop::collection::vec(-0.01f64..0.01, 3..=16)) {
            let s = series(&u);
            let fit = rb_compute_wear_drift(&s).unwrap();
            let (b, c) = normal_equations(&s.parts);
            prop_assert!((fit.b - b).abs() < 1e-10);
            prop_assert!((fit.c - c).abs() < 1e-10);
            prop_assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-12);
            prop_assert_eq!(fit.w_d, fit.b * (u.len() as f64 - 1.0));
            prop_assert!(fit.w_v.unwrap() >= 0.0);
        }

        #[test]
        fn variability_matches_formula(u in prop::collection::vec(-0.01f64..0.01, 3..=16)) {
            let fit = rb_compute_wear_drift(&series(&u)).unwrap();
            let n = u.len();
            let direct: f64 = (0..n)
                .map(|i| u[i] - fit.c - fit.b * i as f64)
                .map(|e| e * e)
                .sum::<f64>();
            let direct = (direct / (n as f64 - 2.0)).sqrt();
            prop_assert!((rb_compute_process_variability(&fit).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn scale_equivariance(u in prop::collection::vec(-0.01f64..0.01, 3..=16), lambda in 0.1f64..10.0) {
            let fit = rb_compute_wear_drift(&series(&u)).unwrap();
            let scaled: Vec<f64> = u.iter().map(|v| v * lambda).collect();
            let sfit = rb_compute_wear_drift(&series(&scaled)).unwrap();
            prop_assert!((sfit.b - lambda * fit.b).abs() < 1e-12);
            prop_assert!((sfit.c - lambda * fit.c).abs() < 1e-12);
            prop_assert!((sfit.w_d - lambda * fit.w_d).abs() < 1e-12);
            prop_assert!((sfit.w_v.unwrap() - lambda * fit.w_v.unwrap()).abs() < 1e-12);
        }
    }
}
