//! Token embedding, frame down-projection, and LSTM sequence encoders
//! shared by every model.

mod lstm;
mod vocab;

pub use lstm::{split_rows, BoundLstm, EncodedSequence, FinalStateMode, LstmCell, SequenceEncoder};
pub use vocab::{
    build_vocab, concat_chat_context, EmbeddingTable, Vocab, VocabOptions, BOS, EOS, PAD,
    RESERVED, SEP, UNK, USER,
};

use thiserror::Error;

use crate::numerics::{Graph, NumericsError, ParameterStore, Tensor, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty sequence after truncation")]
    EmptySequence,
    #[error("embedding file row has {got} values, expected {expected}")]
    EmbeddingDim { got: usize, expected: usize },
    #[error("embedding file line {line}: unparsable value")]
    BadEmbeddingLine { line: usize },
    #[error("frame features have dim {got}, expected {expected}")]
    FrameDim { got: usize, expected: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Embed tokens (keeping the LAST `cap`) and run them through `encoder`.
/// `embedding` is the |V| x d_emb parameter var for this graph.
pub fn encode_tokens(
    g: &Graph,
    store: &ParameterStore,
    encoder: &SequenceEncoder,
    embedding: Var,
    vocab: &Vocab,
    tokens: &[String],
    cap: usize,
    mode: FinalStateMode,
) -> Result<EncodedSequence, EncoderError> {
    let kept = if tokens.len() > cap {
        &tokens[tokens.len() - cap..]
    } else {
        tokens
    };
    if kept.is_empty() {
        return Err(EncoderError::EmptySequence);
    }
    let ids = vocab.lookup_all(kept);
    let rows = g.rows(embedding, &ids)?;
    let steps = split_rows(g, rows)?;
    encoder.encode(g, store, &steps, mode)
}

/// Linearly project frame features (keeping the LAST `cap` frames) and
/// encode them. `proj_w` is d_raw x d_in, `proj_b` a 1 x d_in bias row.
pub fn encode_frames(
    g: &Graph,
    store: &ParameterStore,
    encoder: &SequenceEncoder,
    proj_w: Var,
    proj_b: Var,
    frames: &Tensor,
    cap: usize,
    mode: FinalStateMode,
) -> Result<EncodedSequence, EncoderError> {
    let (m, d) = frames.dims2();
    let expected = g.shape_of(proj_w)[0];
    if d != expected {
        return Err(EncoderError::FrameDim {
            got: d,
            expected,
        });
    }
    if m == 0 {
        return Err(EncoderError::EmptySequence);
    }
    let kept = if m > cap {
        frames.slice_rows(m - cap, m)
    } else {
        frames.clone()
    };
    let leaf = g.leaf(kept);
    let projected = g.matmul(leaf, proj_w)?;
    let projected = g.add(projected, proj_b)?;
    let steps = split_rows(g, projected)?;
    encoder.encode(g, store, &steps, mode)
}
