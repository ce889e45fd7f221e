//! One-vs-rest L2-regularized logistic regression.
//!
//! Each head minimizes
//! `J(w, b) = (1/n) Σ [log(1 + e^z) − y·z] + (λ/2)·‖w‖²`, `z = w·x + b`,
//! by full-batch gradient descent with Armijo backtracking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::sigmoid;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const DEFAULT_MAX_ITER: usize = 100;
const GRADIENT_TOLERANCE: f64 = 1e-6;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// `M` binary heads over a shared input. Parameter layout: `M × input_dim`
/// weights (row per head), then `M` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticEnsemble {
    pub input_dim: usize,
    pub heads: usize,
    pub l2_strength: f64,
    #[serde(skip)]
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub iterations: usize,
    pub degenerate: bool,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticReport {
    pub heads: Vec<HeadReport>,
}

impl LogisticReport {
    pub fn degenerate_heads(&self) -> Vec<usize> {
        self.heads.iter().enumerate().filter(|(_, h)| h.degenerate).map(|(i, _)| i).collect()
    }
}

impl LogisticEnsemble {
    pub fn new(input_dim: usize, heads: usize, l2_strength: f64) -> Result<Self> {
        if input_dim == 0 || heads == 0 {
            return Err(Error::InvalidInput("logistic ensemble dimensions must be positive".into()));
        }
        if !(l2_strength >= 0.0 && l2_strength.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid l2 strength {l2_strength}")));
        }
        Ok(LogisticEnsemble {
            input_dim,
            heads,
            l2_strength,
            params: vec![0.0; heads * input_dim + heads],
        })
    }

    pub fn param_count(&self) -> usize {
        self.heads * self.input_dim + self.heads
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn head(&self, j: usize) -> (&[f64], f64) {
        let w = &self.params[j * self.input_dim..(j + 1) * self.input_dim];
        (w, self.params[self.heads * self.input_dim + j])
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: x.dim(),
            });
        }
        Ok((0..self.heads)
            .map(|j| {
                let (w, b) = self.head(j);
                sigmoid(x.dot(w) + b)
            })
            .collect())
    }
}

/// Per-example `log(1 + e^z) − y·z`, computed without overflow.
fn logistic_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}

fn objective(z: &[f64], y: &[f64], w_sq: f64, l2: f64) -> f64 {
    let n = z.len() as f64;
    z.iter().zip(y).map(|(&z, &y)| logistic_loss(z, y)).sum::<f64>() / n + 0.5 * l2 * w_sq
}

fn fit_head(features: &[FeatureVector], y: &[f64], dim: usize, l2: f64, max_iter: usize) -> (Vec<f64>, f64, HeadReport) {
    let n = features.len();
    let positives = y.iter().filter(|&&t| t > 0.5).count();
    if positives == 0 || positives == n {
        let prior = (positives as f64 + 1.0) / (n as f64 + 2.0);
        let report = HeadReport {
            iterations: 0,
            degenerate: true,
            losses: Vec::new(),
        };
        return (vec![0.0; dim], (prior / (1.0 - prior)).ln(), report);
    }

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let mut w_sq = 0.0;
    let mut loss = objective(&z, y, w_sq, l2);
    let mut losses = vec![loss];
    let mut step = 1.0;
    let mut iterations = 0;

    while iterations < max_iter {
        let mut gw: Vec<f64> = w.iter().map(|wi| l2 * wi).collect();
        let mut gb = 0.0;
        for (x, (&zi, &yi)) in features.iter().zip(z.iter().zip(y)) {
            let r = (sigmoid(zi) - yi) / n as f64;
            gb += r;
            x.for_each_nonzero(|j, v| gw[j] += r * v);
        }
        let g_sq = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if g_sq.sqrt() < GRADIENT_TOLERANCE {
            break;
        }

        // z moves linearly along the search direction.
        let dz: Vec<f64> = features.iter().map(|x| x.dot(&gw) + gb).collect();
        let w_dot_g: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
        let g_w_sq = g_sq - gb * gb;

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial_z: Vec<f64> = z.iter().zip(&dz).map(|(zi, d)| zi - step * d).collect();
            let trial_w_sq = w_sq - 2.0 * step * w_dot_g + step * step * g_w_sq;
            let trial = objective(&trial_z, y, trial_w_sq.max(0.0), l2);
            if trial <= loss - ARMIJO_C * step * g_sq {
                accepted = Some((trial_z, trial));
                break;
            }
            step *= 0.5;
        }
        let Some((new_z, new_loss)) = accepted else { break };

        w.iter_mut().zip(&gw).for_each(|(wi, gi)| *wi -= step * gi);
        b -= step * gb;
        w_sq = w.iter().map(|v| v * v).sum();
        z = new_z;
        loss = new_loss;
        losses.push(loss);
        iterations += 1;
        step *= 2.0;
    }

    let report = HeadReport {
        iterations,
        degenerate: false,
        losses,
    };
    (w, b, report)
}

/// Fits every head independently. `labels[i][j]` is 1 when example `i` is
/// relevant to head `j`. Heads with a single class become constant
/// predictors of the Laplace-smoothed prior `(pos + 1) / (n + 2)`.
pub fn train_logistic(
    ensemble: &mut LogisticEnsemble,
    features: &[FeatureVector],
    labels: &[Vec<u8>],
    max_iter: usize,
) -> Result<LogisticReport> {
    if features.len() != labels.len() {
        return Err(Error::Shape {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    if let Some(x) = features.iter().find(|x| x.dim() != ensemble.input_dim) {
        return Err(Error::Shape {
            expected: ensemble.input_dim,
            actual: x.dim(),
        });
    }
    if let Some(row) = labels.iter().find(|r| r.len() != ensemble.heads) {
        return Err(Error::Shape {
            expected: ensemble.heads,
            actual: row.len(),
        });
    }

    let dim = ensemble.input_dim;
    let l2 = ensemble.l2_strength;
    let fitted: Vec<(Vec<f64>, f64, HeadReport)> = (0..ensemble.heads)
        .into_par_iter()
        .map(|j| {
            let y: Vec<f64> = labels.iter().map(|r| f64::from(r[j])).collect();
            fit_head(features, &y, dim, l2, max_iter)
        })
        .collect();

    let mut params = vec![0.0; ensemble.param_count()];
    let mut heads = Vec::with_capacity(fitted.len());
    for (j, (w, b, report)) in fitted.into_iter().enumerate() {
        params[j * dim..(j + 1) * dim].copy_from_slice(&w);
        params[ensemble.heads * dim + j] = b;
        heads.push(report);
    }
    ensemble.params = params;
    Ok(LogisticReport { heads })
}
