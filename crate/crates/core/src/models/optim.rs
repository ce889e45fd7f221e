//! AdamW with global-norm gradient clipping and a linear warmup / linear
//! decay learning-rate schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            peak_lr: 1e-5,
            warmup_fraction: 0.10,
            weight_decay: 0.01,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "warmup_fraction must lie in (0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidInput(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.peak_lr > 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidInput("peak_lr and batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_fraction * total_steps as f64).round() as usize
    }
}

/// Learning rate at `step` of `total_steps`.
///
/// Rises linearly from 0 to `peak_lr` over the first
/// `round(warmup_fraction · total)` steps, then falls linearly to 0 at
/// `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &OptimizerConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidInput("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidInput(format!("step {step} beyond total {total_steps}")));
    }
    let warmup = cfg.warmup_steps(total_steps);
    let peak = cfg.peak_lr;
    if warmup > 0 && step <= warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    if warmup >= total_steps {
        return Ok(peak);
    }
    Ok(peak * (total_steps - step) as f64 / (total_steps - warmup) as f64)
}

/// Per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Factor that brings a gradient of norm `norm` down to at most `clip_norm`.
pub fn clip_scale(norm: f64, clip_norm: f64) -> f64 {
    if norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

const CHUNK: usize = 1 << 14;

/// One AdamW update.
///
/// The gradient is first clipped to `cfg.clip_norm` in global L2 norm, then
/// the bias-corrected Adam step is applied, then decoupled weight decay
/// `p ← p − lr · weight_decay · p`.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient {} at parameter {i} (optimizer step {})",
            grads[i],
            state.step + 1
        )));
    }
    let scale = clip_scale(global_norm(grads), cfg.clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = lr * cfg.weight_decay;
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);

    params
        .par_chunks_mut(CHUNK)
        .zip(grads.par_chunks(CHUNK))
        .zip(state.m.par_chunks_mut(CHUNK))
        .zip(state.v.par_chunks_mut(CHUNK))
        .for_each(|(((p, g), m), v)| {
            for i in 0..p.len() {
                let g = g[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                p[i] -= decay * p[i];
            }
        });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(peak: f64) -> OptimizerConfig {
        OptimizerConfig {
            peak_lr: peak,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn schedule_landmarks() {
        let c = cfg(2e-3);
        assert_eq!(c.warmup_steps(100), 10);
        assert_eq!(lr_at(0, 100, &c).unwrap(), 0.0);
        assert!((lr_at(10, 100, &c).unwrap() - 2e-3).abs() < 1e-15);
        assert!((lr_at(5, 100, &c).unwrap() - 1e-3).abs() < 1e-15);
        assert!((lr_at(55, 100, &c).unwrap() - 1e-3).abs() < 1e-15);
        assert_eq!(lr_at(100, 100, &c).unwrap(), 0.0);
    }

    #[test]
    fn schedule_errors_and_tiny_totals() {
        let c = cfg(1.0);
        assert!(matches!(lr_at(0, 0, &c), Err(Error::InvalidInput(_))));
        assert!(lr_at(3, 2, &c).is_err());
        // round(0.1) = 0 warmup steps: pure decay.
        assert_eq!(lr_at(0, 1, &c).unwrap(), 1.0);
        assert_eq!(lr_at(1, 1, &c).unwrap(), 0.0);
    }

    #[test]
    fn schedule_is_piecewise_monotone() {
        let c = cfg(1.0);
        let total = 237;
        let w = c.warmup_steps(total);
        let lrs: Vec<f64> = (0..=total).map(|s| lr_at(s, total, &c).unwrap()).collect();
        assert!(lrs[..=w].windows(2).all(|p| p[0] <= p[1]));
        assert!(lrs[w..].windows(2).all(|p| p[0] >= p[1]));
        assert!(lrs.iter().all(|&l| (0.0..=1.0).contains(&l)));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        assert!(OptimizerConfig { warmup_fraction: 0.0, ..OptimizerConfig::default() }.validate().is_err());
        assert!(OptimizerConfig { clip_norm: 0.0, ..OptimizerConfig::default() }.validate().is_err());
    }

    #[test]
    fn zero_gradient_is_fixed_point_without_decay() {
        let c = OptimizerConfig { weight_decay: 0.0, ..cfg(0.1) };
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        let mut s = AdamState::new(3);
        adamw_step(&mut p, &[0.0; 3], &mut s, 0.1, &c).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn zero_gradient_decays() {
        let c = OptimizerConfig { weight_decay: 0.01, ..cfg(0.1) };
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        adamw_step(&mut p, &[0.0; 3], &mut s, 0.1, &c).unwrap();
        for (a, b) in p.iter().zip([1.0, -2.0, 3.5]) {
            assert!((a - b * 0.999).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_is_clipped_to_norm() {
        assert!((clip_scale(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(clip_scale(0.5, 1.0), 1.0);

        let c = OptimizerConfig { weight_decay: 0.0, ..cfg(0.1) };
        let g = [6.0, 8.0]; // norm 10
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        adamw_step(&mut p, &g, &mut s, 0.1, &c).unwrap();
        let m = s.first_moment();
        assert!((m[0] - 0.1 * 0.6).abs() < 1e-15);
        assert!((m[1] - 0.1 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
        let c = OptimizerConfig { weight_decay: 0.01, ..cfg(0.05) };
        let mut p = vec![0.3];
        let mut s = AdamState::new(1);
        adamw_step(&mut p, &[0.2], &mut s, 0.05, &c).unwrap();
        let after_adam = 0.3 - 0.05 * 0.2 / (0.2 + 1e-8);
        let expected = after_adam - 0.05 * 0.01 * after_adam;
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        let err = adamw_step(&mut p, &[1.0, f64::NAN], &mut s, 0.1, &cfg(0.1)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert_eq!(s.step(), 0);
    }
}
