//! Reference segmentation model: logistic regression over fixed multiscale
//! per-voxel features, with dropout at stochastic inference.
//!
//! Any model that maps a [`ModelInput`] to a foreground probability map can
//! stand behind [`SegmentationModel`]; [`ReferenceModel`] is the one shipped
//! here because its gradients are closed-form and checkable.

mod checkpoint;
mod features;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use features::{
    assemble, featurize, gaussian_kernel, image_features, smooth, Features, ImageFeatures, FEATURE_COUNT,
    FEATURE_SCALES,
};
pub use train::{
    gradient_check, interactive_dice, loss_and_gradient, mean_interactive_dice, train, train_with_progress, Adam, EpochProgress, GuidanceSchedule,
    TrainConfig, TrainMode, TrainReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{compose_input, encode_clicks, ModelInput, DEFAULT_SIGMA};
use crate::volume::{ClickSet, ProbabilityMap, Volume};

/// Contract shared by the inference paths of the server.
pub trait SegmentationModel: Send + Sync {
    fn predict_input(&self, input: &ModelInput, stochastic: bool, seed: u64) -> ProbabilityMap;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    /// `FEATURE_COUNT` feature weights followed by the bias.
    pub weights: Vec<f64>,
    pub dropout_rate: f64,
}

impl Default for ReferenceModel {
    fn default() -> Self {
        Self::zeros(0.2)
    }
}

impl ReferenceModel {
    pub fn zeros(dropout_rate: f64) -> Self {
        Self {
            weights: vec![0.0; FEATURE_COUNT + 1],
            dropout_rate,
        }
    }

    /// Uniform weights in `[-scale, scale]`.
    pub fn random(seed: u64, scale: f64, dropout_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: (0..=FEATURE_COUNT).map(|_| rng.gen_range(-scale..=scale)).collect(),
            dropout_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != FEATURE_COUNT + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} weights, got {}",
                FEATURE_COUNT + 1,
                self.weights.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter(format!("dropout rate {}", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn bias(&self) -> f64 {
        self.weights[FEATURE_COUNT]
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.weights).map(|(f, w)| f * w).sum::<f64>() + self.bias()
    }

    /// Foreground probabilities for precomputed features. With `stochastic`,
    /// every feature of every voxel is multiplied by an independent
    /// `Bernoulli(1 - rate) / (1 - rate)` draw from `seed`.
    pub fn predict_features(&self, f: &Features, stochastic: bool, seed: u64) -> ProbabilityMap {
        let data = if stochastic && self.dropout_rate > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keep = 1.0 - self.dropout_rate;
            let mut masked = [0.0; FEATURE_COUNT];
            f.rows()
                .map(|row| {
                    for (m, &x) in masked.iter_mut().zip(row) {
                        *m = if rng.gen_bool(keep) { x / keep } else { 0.0 };
                    }
                    sigmoid(self.logit(&masked))
                })
                .collect()
        } else {
            f.rows().map(|row| sigmoid(self.logit(row))).collect()
        };
        ProbabilityMap { dims: f.dims, data }
    }

    /// Predicts on a raw volume; `None` clicks means zero guidance.
    pub fn predict(&self, v: &Volume, clicks: Option<&ClickSet>, stochastic: bool, seed: u64) -> Result<ProbabilityMap> {
        let input = match clicks {
            Some(c) if !c.is_empty() => {
                let g = encode_clicks(c, v.dims(), DEFAULT_SIGMA)?;
                compose_input(v, Some(&g))?
            }
            _ => compose_input(v, None)?,
        };
        Ok(self.predict_input(&input, stochastic, seed))
    }
}

impl SegmentationModel for ReferenceModel {
    fn predict_input(&self, input: &ModelInput, stochastic: bool, seed: u64) -> ProbabilityMap {
        self.predict_features(&featurize(input), stochastic, seed)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
