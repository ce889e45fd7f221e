use crate::error::{Error, Result};

pub const BCE_EPSILON: f64 = 1e-12;

/// Mean binary cross-entropy over labels. Predictions are clamped to
/// `[ε, 1 − ε]`.
pub fn bce_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Shape {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / y.len() as f64)
}
