//! Multi-label MLP head: `sigmoid(W2 · dropout(relu(W1 · x + b1)) + b2)`,
//! or a single sigmoid layer when no hidden layer is configured.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Parameters live in one flat buffer so the optimizer can treat them as
/// a single vector. Layout with a hidden layer of size `h`:
///
/// ```text
/// w1: input_dim × h   (row j holds the weights leaving input j)
/// b1: h
/// w2: output_dim × h
/// b2: output_dim
/// ```
///
/// Without a hidden layer: `w: input_dim × output_dim`, then `b: output_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    pub input_dim: usize,
    pub hidden_dim: Option<usize>,
    pub output_dim: usize,
    pub dropout_p: f64,
    #[serde(skip)]
    params: Vec<f64>,
}

/// Intermediate values kept for backpropagation.
struct Trace {
    hidden_pre: Vec<f64>,
    hidden_out: Vec<f64>,
    mask: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpClassifier {
    /// Kaiming-uniform hidden weights, `U(±1/√fan_in)` output weights, zero biases.
    pub fn new(
        input_dim: usize,
        hidden_dim: Option<usize>,
        output_dim: usize,
        dropout_p: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dim == Some(0) {
            return Err(Error::InvalidInput("MLP dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidInput(format!("dropout must lie in [0, 1), got {dropout_p}")));
        }
        let mut model = MlpClassifier {
            input_dim,
            hidden_dim,
            output_dim,
            dropout_p,
            params: Vec::new(),
        };
        model.params = vec![0.0; model.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match hidden_dim {
            Some(h) => {
                let bound = (6.0 / input_dim as f64).sqrt();
                let (w1, rest) = model.params.split_at_mut(input_dim * h);
                w1.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
                let bound = 1.0 / (h as f64).sqrt();
                rest[h..h + output_dim * h]
                    .iter_mut()
                    .for_each(|w| *w = rng.gen_range(-bound..bound));
            }
            None => {
                let bound = 1.0 / (input_dim as f64).sqrt();
                model.params[..input_dim * output_dim]
                    .iter_mut()
                    .for_each(|w| *w = rng.gen_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        match self.hidden_dim {
            Some(h) => self.input_dim * h + h + self.output_dim * h + self.output_dim,
            None => self.input_dim * self.output_dim + self.output_dim,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Installs parameters read from a checkpoint.
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

    fn check_input(&self, x: &FeatureVector) -> Result<()> {
        if x.dim() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    fn dropout_mask(&self, h: usize, rng: Option<&mut dyn rand::RngCore>) -> Vec<f64> {
        match rng {
            Some(rng) if self.dropout_p > 0.0 => {
                let keep = 1.0 / (1.0 - self.dropout_p);
                (0..h)
                    .map(|_| if rng.gen::<f64>() < self.dropout_p { 0.0 } else { keep })
                    .collect()
            }
            _ => vec![1.0; h],
        }
    }

    fn trace(&self, x: &FeatureVector, rng: Option<&mut dyn rand::RngCore>) -> Trace {
        let m = self.output_dim;
        match self.hidden_dim {
            Some(h) => {
                let (w1, rest) = self.params.split_at(self.input_dim * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(m * h);
                let mut pre = b1.to_vec();
                x.for_each_nonzero(|j, v| {
                    let row = &w1[j * h..(j + 1) * h];
                    pre.iter_mut().zip(row).for_each(|(p, w)| *p += v * w);
                });
                let mask = self.dropout_mask(h, rng);
                let out: Vec<f64> = pre.iter().zip(&mask).map(|(&p, &k)| p.max(0.0) * k).collect();
                let probs = (0..m)
                    .map(|k| {
                        let row = &w2[k * h..(k + 1) * h];
                        sigmoid(b2[k] + row.iter().zip(&out).map(|(w, a)| w * a).sum::<f64>())
                    })
                    .collect();
                Trace {
                    hidden_pre: pre,
                    hidden_out: out,
                    mask,
                    probs,
                }
            }
            None => {
                let (w, b) = self.params.split_at(self.input_dim * m);
                let mut z = b.to_vec();
                x.for_each_nonzero(|j, v| {
                    let row = &w[j * m..(j + 1) * m];
                    z.iter_mut().zip(row).for_each(|(p, w)| *p += v * w);
                });
                Trace {
                    hidden_pre: Vec::new(),
                    hidden_out: Vec::new(),
                    mask: Vec::new(),
                    probs: z.into_iter().map(sigmoid).collect(),
                }
            }
        }
    }

    /// Relevance probabilities for one input. Dropout is applied only when
    /// `train_mode` is set, as inverted dropout scaled by `1/(1-p)`.
    pub fn forward<R: Rng>(&self, x: &FeatureVector, train_mode: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let rng: Option<&mut dyn rand::RngCore> = if train_mode { Some(rng) } else { None };
        Ok(self.trace(x, rng).probs)
    }

    /// Eval-mode forward pass.
    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x, None).probs)
    }

    /// Adds the gradient of the mean-over-labels BCE for one example,
    /// multiplied by `weight`, into `grads`. Returns the example's loss.
    pub fn accumulate_gradient(
        &self,
        x: &FeatureVector,
        target: &[f64],
        weight: f64,
        rng: Option<&mut dyn rand::RngCore>,
        grads: &mut [f64],
    ) -> Result<f64> {
        self.check_input(x)?;
        if target.len() != self.output_dim {
            return Err(Error::Shape {
                expected: self.output_dim,
                actual: target.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let m = self.output_dim;
        let trace = self.trace(x, rng);
        let loss = super::bce_loss(&trace.probs, target)?;
        let dz: Vec<f64> = trace
            .probs
            .iter()
            .zip(target)
            .map(|(p, t)| weight * (p - t) / m as f64)
            .collect();

        match self.hidden_dim {
            Some(h) => {
                let w2_off = self.input_dim * h + h;
                let b2_off = w2_off + m * h;
                let w2 = &self.params[w2_off..b2_off];
                let mut d_hidden = vec![0.0; h];
                for k in 0..m {
                    let g = dz[k];
                    grads[b2_off + k] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let row = &w2[k * h..(k + 1) * h];
                    let grow = &mut grads[w2_off + k * h..w2_off + (k + 1) * h];
                    for i in 0..h {
                        grow[i] += g * trace.hidden_out[i];
                        d_hidden[i] += g * row[i];
                    }
                }
                for i in 0..h {
                    d_hidden[i] *= if trace.hidden_pre[i] > 0.0 { trace.mask[i] } else { 0.0 };
                }
                let b1_off = self.input_dim * h;
                grads[b1_off..b1_off + h]
                    .iter_mut()
                    .zip(&d_hidden)
                    .for_each(|(g, d)| *g += d);
                x.for_each_nonzero(|j, v| {
                    grads[j * h..(j + 1) * h]
                        .iter_mut()
                        .zip(&d_hidden)
                        .for_each(|(g, d)| *g += v * d);
                });
            }
            None => {
                let b_off = self.input_dim * m;
                grads[b_off..b_off + m].iter_mut().zip(&dz).for_each(|(g, d)| *g += d);
                x.for_each_nonzero(|j, v| {
                    grads[j * m..(j + 1) * m]
                        .iter_mut()
                        .zip(&dz)
                        .for_each(|(g, d)| *g += v * d);
                });
            }
        }
        Ok(loss)
    }
}
