//! Video-context many-speaker dialogue toolkit.
//!
//! Builds (video, chat context, response) training triples from timestamped
//! chat logs plus precomputed frame features, trains discriminative and
//! generative response models on them, and evaluates with a 10-way
//! retrieval recall@k protocol and phrase-matching metrics.
//!
//! The narrative guide lives under `book/` and is mirrored here as the
//! [`guide`] module so its snippets run as doc-tests.

pub mod attention;
pub mod corpus;
pub mod encoders;
pub mod models;
pub mod numerics;
