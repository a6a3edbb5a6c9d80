//! Corpus pipeline: timestamped chat logs plus frame features in,
//! filtered (video, chat context, response) triples out.
//!
//! Videos are tiled into non-overlapping context/response window pairs,
//! responses are selected by cross-speaker BLEU-4 agreement with frequent
//! utterances suppressed, and everything is anonymized before emission.

mod bleu;
mod build;
mod chat;
mod features;
mod stats;
mod window;

pub use bleu::{compute_bleu4, BleuSmoothing};
pub use build::{
    build_triples, filter_speaker_refs, select_response, top_frequent_utterances, BuiltTriple,
    SelectionReason, TripleRecord, UtteranceRecord,
};
pub use chat::{anonymize, parse_chat_log, tokenize, ChatLog, USER_TAG};
pub use features::{read_vfea, write_vfea, VideoFeatures, VFEA_MAGIC};
pub use stats::{corpus_stats, StatsReport};
pub use window::segment_windows;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Tensor;

/// One timestamped chat message from one speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub speaker: String,
    pub time: f64,
    pub tokens: Vec<String>,
}

/// Frame features for one context window.
#[derive(Clone, Debug)]
pub struct VideoSegment {
    /// m x d matrix of frame feature vectors.
    pub frames: Tensor,
    pub start: f64,
    pub end: f64,
}

/// The training/eval unit: video context, chat context, response.
#[derive(Clone, Debug)]
pub struct DialogueTriple {
    pub video: VideoSegment,
    pub chat: Vec<Utterance>,
    pub response: Vec<String>,
    pub selection_reason: SelectionReason,
    pub window_index: u32,
}

/// Knobs for the extraction pipeline; defaults follow the dataset recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub context_secs: f64,
    pub response_secs: f64,
    pub bleu_threshold: f64,
    pub n_frequent: usize,
    pub min_context_utts: usize,
    pub fps: f64,
    pub bleu_smoothing: BleuSmoothing,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            context_secs: 20.0,
            response_secs: 10.0,
            bleu_threshold: 0.5,
            n_frequent: 20,
            min_context_utts: 4,
            fps: 3.0,
            bleu_smoothing: BleuSmoothing::AddOne,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let ok = self.context_secs > 0.0
            && self.response_secs > 0.0
            && self.response_secs <= self.context_secs
            && self.bleu_threshold > 0.0
            && self.fps > 0.0
            && self.min_context_utts > 0;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::BadConfig(
                "pipeline config values must be positive and response_secs <= context_secs",
            ))
        }
    }

    /// Maximum frames per video segment (fps * context seconds).
    pub fn max_video_steps(&self) -> usize {
        (self.fps * self.context_secs).round() as usize
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("chat log line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("missing features for video '{video_id}' interval [{start}, {end})")]
    MissingFeatures {
        video_id: String,
        start: f64,
        end: f64,
    },
    #[error("feature file '{path}': {msg}")]
    Features { path: String, msg: String },
    #[error("feature dim {got}, expected {expected}")]
    FeatureDim { got: usize, expected: usize },
    #[error("invalid config: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
