//! Fully connected rectifier network over assembled screening inputs.

mod calibrate;
mod io;
mod mlp;
mod train;

pub use calibrate::{calibrate, mean_nll};
pub use mlp::{argmax_masked, masked_softmax, Dense, Gradients, MlpModel};
pub use train::{held_out, loss_and_gradient, smoothed_targets, train, Example, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ClassifierInput, FeatureSchema};

/// A classifier decision over `k` candidate slots plus New Vessel (index `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub slot: usize,
    pub is_new: bool,
    pub probabilities: Vec<f32>,
}

/// A trained network together with the feature schema it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub model: MlpModel,
    pub schema: FeatureSchema,
}

impl Classifier {
    pub fn new(model: MlpModel, schema: FeatureSchema) -> Result<Self> {
        if model.fingerprint != schema.fingerprint() {
            return Err(Error::Config("model and feature schema fingerprints differ".into()));
        }
        if model.input_width() != schema.input_width() || model.output_width() != schema.k + 1 {
            return Err(Error::Config("model widths do not match the feature schema".into()));
        }
        Ok(Self { model, schema })
    }

    pub fn k(&self) -> usize {
        self.schema.k
    }

    /// Argmax over unmasked slots of the raw logits; probabilities use the
    /// calibrated temperature.
    pub fn classify(&self, input: &ClassifierInput) -> Result<Assignment> {
        let logits = self.model.forward(&input.values)?;
        let slot = argmax_masked(&logits, &input.mask);
        let probabilities = masked_softmax(&logits, &input.mask, self.model.temperature);
        Ok(Assignment { slot, is_new: slot == self.k(), probabilities })
    }
}
