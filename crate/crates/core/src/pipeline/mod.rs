//! End-to-end reconstruction: parity split and merge, normalization, the
//! three training stages, inference, and scoring.

mod baseline;
mod eval;
mod model;
mod norm;
mod parity;

pub use baseline::{otsu_mask, otsu_threshold, spline_baseline, NaturalSpline};
pub use eval::{evaluate, sam, score_image, EvalItem, EvalReport, ImageScore};
pub use model::{infer, preimage, train_all, ModelBundle, Sample, TrainedPipeline, CHECKPOINT_FILES, NORM_FILE};
pub use norm::{from_signed, normalize_reflectance, to_signed, Direction, MapStats, NormStats, MIN_STD};
pub use parity::{
    even_bands, label_to_band, merge_stacks, odd_bands, parity_merge, parity_split, split_stack, LABELS, PARITY_BANDS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::CubeError;
use crate::networks::NetError;
use crate::optim::{Loss, Parity, Stage, TrainConfig, TrainError, DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE};
use crate::scattering::ScatterError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: TrainError,
    },
    #[error("missing model: {0}")]
    MissingModel(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("normalization: {0}")]
    Normalization(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// True when training stopped on a NaN or infinite loss.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PipelineError::Stage {
                source: TrainError::NonFinite { .. },
                ..
            }
        )
    }
}

/// Every knob of the reconstruction recipe. The defaults are the reference
/// recipe; [`PipelineConfig::bench`] narrows the inverse networks for
/// single-machine runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Scattering scales; the inverse networks upsample by `2^2`.
    pub j: usize,
    /// Scattering orientations.
    pub l: usize,
    pub matching_hidden: usize,
    pub misr_hidden: usize,
    pub inverse_widths: [usize; 2],
    pub kernel: usize,
    pub matching_epochs: usize,
    pub inverse_epochs: usize,
    pub misr_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Skin spectra per MISR training sample.
    pub misr_chunk: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            j: 2,
            l: 4,
            matching_hidden: 512,
            misr_hidden: 256,
            inverse_widths: [256, 128],
            kernel: 3,
            matching_epochs: 100,
            inverse_epochs: 150,
            misr_epochs: 60,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            misr_chunk: 256,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn bench() -> Self {
        Self {
            inverse_widths: [32, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.j != 2 {
            return bad("j must be 2: the inverse networks upsample by exactly 4");
        }
        if self.l == 0 {
            return bad("l must be positive");
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel must be odd");
        }
        if [
            self.matching_hidden,
            self.misr_hidden,
            self.inverse_widths[0],
            self.inverse_widths[1],
        ]
        .contains(&0)
        {
            return bad("layer widths must be positive");
        }
        if self.batch_size == 0 || self.misr_chunk == 0 {
            return bad("batch_size and misr_chunk must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    /// Training settings of one network.
    pub fn stage(&self, stage: Stage, parity: Parity) -> TrainConfig {
        let mut c = match stage {
            Stage::Matching => TrainConfig::matching(parity),
            Stage::Inverse => TrainConfig::inverse(parity),
            Stage::Misr => TrainConfig::misr(self.misr_epochs),
        };
        c.epochs = match stage {
            Stage::Matching => self.matching_epochs,
            Stage::Inverse => self.inverse_epochs,
            Stage::Misr => self.misr_epochs,
        };
        c.batch_size = self.batch_size;
        c.learning_rate = self.learning_rate;
        c.seed = derive_seed(self.seed, stage, parity);
        c
    }

    pub fn loss(stage: Stage) -> Loss {
        match stage {
            Stage::Inverse => Loss::L1,
            Stage::Matching | Stage::Misr => Loss::L2,
        }
    }
}

/// Distinct, reproducible seed per network.
pub fn derive_seed(seed: u64, stage: Stage, parity: Parity) -> u64 {
    let s = match stage {
        Stage::Matching => 1,
        Stage::Inverse => 2,
        Stage::Misr => 3,
    };
    let p = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
        Parity::None => 2,
    };
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(s * 16 + p)
}
