//! Relevance classifiers and their optimization.

mod logistic;
mod loss;
mod mlp;
mod optim;

use serde::{Deserialize, Serialize};

pub use logistic::{train_logistic, HeadReport, LogisticEnsemble, LogisticReport, DEFAULT_MAX_ITER};
pub use loss::{bce_loss, BCE_EPSILON};
pub use mlp::MlpClassifier;
pub use optim::{adamw_step, clip_scale, global_norm, lr_at, AdamState, OptimizerConfig};

use crate::error::Result;
use crate::features::FeatureVector;

/// A fitted multi-label classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Classifier {
    Mlp(MlpClassifier),
    Logistic(LogisticEnsemble),
}

impl Classifier {
    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        match self {
            Classifier::Mlp(m) => m.predict(x),
            Classifier::Logistic(l) => l.predict(x),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Mlp(m) => m.input_dim,
            Classifier::Logistic(l) => l.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Classifier::Mlp(m) => m.output_dim,
            Classifier::Logistic(l) => l.heads,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Classifier::Mlp(m) => m.params(),
            Classifier::Logistic(l) => l.params(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Classifier::Mlp(m) => m.param_count(),
            Classifier::Logistic(l) => l.param_count(),
        }
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        match self {
            Classifier::Mlp(m) => m.set_params(params),
            Classifier::Logistic(l) => l.set_params(params),
        }
    }

    pub fn architecture(&self) -> String {
        match self {
            Classifier::Mlp(m) => match m.hidden_dim {
                Some(h) => format!("mlp(hidden={h}, dropout={})", m.dropout_p),
                None => format!("mlp(linear, dropout={})", m.dropout_p),
            },
            Classifier::Logistic(l) => format!("logistic_ovr(l2={})", l.l2_strength),
        }
    }
}
