//! Model zoo: discriminative triple scorers (dual/triple encoder and
//! tridirectional attention flow) and generative seq2seq decoders (with
//! optional bidirectional attention flow), plus their losses, negative
//! sampling, training loop, and checkpoint format.

mod checkpoint;
mod dataset;
mod discriminative;
mod generative;
mod lm;
mod losses;
mod negatives;
mod trainer;

pub use checkpoint::{load_checkpoint, rebuild_model, save_checkpoint, AnyModel, CheckpointMeta, ModelKind};
pub use dataset::{load_dataset, read_records, write_records, Dataset, Instance};
pub use discriminative::DiscriminativeModel;
pub use generative::{GenerativeModel, StepAttention};
pub use lm::LanguageModel;
pub use losses::{classification_loss, generative_max_margin, joint_loss, max_margin_loss, LOG_FLOOR};
pub use negatives::{sample_eval_candidates, sample_train_negatives, CandidateSet, NegativeSet};
pub use trainer::{train_discriminative, train_generative, train_lm, NegativeMode, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{EncoderError, FinalStateMode};
use crate::numerics::NumericsError;

/// Discriminative architecture choice; mirrors the model table rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscVariant {
    /// Chat + response encoders only.
    DualChat,
    /// Video + response encoders only.
    DualVideo,
    /// Video + chat + response encoders.
    Triple,
    /// Triple encoder with pairwise attention flow and self-attention.
    Tridaf,
}

impl DiscVariant {
    pub fn uses_video(self) -> bool {
        !matches!(self, DiscVariant::DualChat)
    }
    pub fn uses_chat(self) -> bool {
        !matches!(self, DiscVariant::DualVideo)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscLoss {
    MaxMargin,
    Classification,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminativeConfig {
    pub variant: DiscVariant,
    pub margin: f64,
    pub loss: DiscLoss,
}

impl Default for DiscriminativeConfig {
    fn default() -> Self {
        DiscriminativeConfig {
            variant: DiscVariant::Tridaf,
            margin: 0.1,
            loss: DiscLoss::MaxMargin,
        }
    }
}

impl DiscriminativeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.margin > 0.0 {
            Ok(())
        } else {
            Err(ModelError::BadConfig("margin must be positive"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenVariant {
    Seq2seqChat,
    Seq2seqVideo,
    Seq2seqBoth,
    Bidaf,
}

impl GenVariant {
    pub fn uses_video(self) -> bool {
        !matches!(self, GenVariant::Seq2seqChat)
    }
    pub fn uses_chat(self) -> bool {
        !matches!(self, GenVariant::Seq2seqVideo)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerativeConfig {
    pub variant: GenVariant,
    /// Weight of the max-margin term in the joint loss.
    pub lambda: f64,
    pub margin: f64,
    pub max_decode_len: usize,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        GenerativeConfig {
            variant: GenVariant::Bidaf,
            lambda: 1.0,
            margin: 0.1,
            max_decode_len: 10,
        }
    }
}

impl GenerativeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lambda < 0.0 {
            return Err(ModelError::BadConfig("lambda must be non-negative"));
        }
        if self.margin <= 0.0 {
            return Err(ModelError::BadConfig("margin must be positive"));
        }
        Ok(())
    }
}

/// Shared dimensioning for encoders and models.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub hidden: usize,
    pub d_emb: usize,
    /// Raw frame-feature width before down-projection.
    pub d_raw: usize,
    pub video_cap: usize,
    pub chat_cap: usize,
    pub response_cap: usize,
    pub disc_layers: usize,
    pub disc_bidirectional: bool,
    pub gen_layers: usize,
    pub final_state: FinalStateMode,
    /// Share one flow weight vector across the three modality pairs.
    pub share_flow_weights: bool,
    pub init_scale: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            hidden: 256,
            d_emb: 100,
            d_raw: 2048,
            video_cap: 60,
            chat_cap: 70,
            response_cap: 10,
            disc_layers: 1,
            disc_bidirectional: true,
            gen_layers: 2,
            final_state: FinalStateMode::ConcatFinals,
            share_flow_weights: false,
            init_scale: 0.08,
        }
    }
}

impl ModelDims {
    /// Toy dimensions for tests and gradient checks.
    pub fn toy() -> Self {
        ModelDims {
            hidden: 4,
            d_emb: 3,
            d_raw: 3,
            video_cap: 4,
            chat_cap: 8,
            response_cap: 4,
            ..Default::default()
        }
    }

    pub fn disc_state_dim(&self) -> usize {
        if self.disc_bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(&'static str),
    #[error("variant requires the {0} modality but it is empty")]
    MissingModality(&'static str),
    #[error("negative sampling needs at least two distinct videos")]
    SingleVideoDataset,
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("checkpoint '{path}': {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
