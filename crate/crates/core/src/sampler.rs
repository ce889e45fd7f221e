//! Weighted random sampling with replacement for relevant/irrelevant
//! class rebalancing.
//!
//! Each segment's weight is the normalized inverse frequency of its class,
//! so both classes contribute equal total mass and half of all draws are
//! expected to be relevant segments.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub weights: Vec<f64>,
    pub pos_fraction: f64,
}

impl SampleWeights {
    /// Weight of a relevant segment divided by the weight of an irrelevant one.
    pub fn class_ratio(&self) -> f64 {
        (1.0 - self.pos_fraction) / self.pos_fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub enabled: bool,
    pub seed: Option<u64>,
}

/// Class weight `(1/f_c) / Σ_c' (1/f_c')`, assigned to every member of `c`.
///
/// `labels[i]` is true when segment `i` is linked to at least one requirement.
pub fn compute_weights(labels: &[bool]) -> Result<SampleWeights> {
    let n = labels.len();
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateClass(format!(
            "{positives} of {n} training segments are relevant; both classes are required"
        )));
    }
    let f_pos = positives as f64 / n as f64;
    let f_neg = (n - positives) as f64 / n as f64;
    let inv_sum = 1.0 / f_pos + 1.0 / f_neg;
    let w_pos = (1.0 / f_pos) / inv_sum;
    let w_neg = (1.0 / f_neg) / inv_sum;
    Ok(SampleWeights {
        weights: labels.iter().map(|&l| if l { w_pos } else { w_neg }).collect(),
        pos_fraction: f_pos,
    })
}

/// `epoch_size` i.i.d. draws with replacement, `P(i) ∝ weights[i]`.
pub fn sample_epoch(weights: &SampleWeights, epoch_size: usize, seed: u64) -> Result<Vec<usize>> {
    if epoch_size == 0 {
        return Err(Error::InvalidInput("epoch size must be at least 1".into()));
    }
    let dist = WeightedIndex::new(&weights.weights)
        .map_err(|e| Error::InvalidInput(format!("invalid sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..epoch_size).map(|_| dist.sample(&mut rng)).collect())
}
