//! Summary statistics over per-pair values.
//!
//! The standard deviation uses the sample divisor `N - 1`; the drift-fit
//! dispersion keeps its own `N - 2` divisor.

use super::BladeError;

pub fn rb_compute_values(values: &[f64]) -> Result<Vec<f64>, BladeError> {
    if values.is_empty() {
        return Err(BladeError::Empty);
    }
    Ok(values.to_vec())
}

pub fn rb_compute_average(values: &[f64]) -> Result<f64, BladeError> {
    if values.is_empty() {
        return Err(BladeError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn rb_compute_std_dev(values: &[f64]) -> Result<f64, BladeError> {
    if values.is_empty() {
        return Err(BladeError::Empty);
    }
    if values.len() < 2 {
        return Err(BladeError::InsufficientData { needed: 2, got: 1 });
    }
    let mean = rb_compute_average(values)?;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (values.len() as f64 - 1.0)).sqrt())
}
