//! Attention mechanisms: trilinear-similarity bidirectional attention
//! flow between modality encoders, self-attention pooling, and the
//! bilinear attention used by the response decoder.

use std::fmt::Write as _;

use crate::numerics::{Graph, NormAxis, NumericsError, Tensor, Var};

/// A normalized attention distribution captured from a forward pass.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub weights: Tensor,
    /// Which index was normalized: `Row` means each row sums to one.
    pub axis: NormAxis,
}

impl AttentionMap {
    /// Max deviation of any normalized slice's sum from 1.
    pub fn normalization_error(&self) -> f64 {
        let (r, c) = self.weights.dims2();
        let mut worst = 0.0f64;
        match self.axis {
            NormAxis::Row => {
                for i in 0..r {
                    let s: f64 = (0..c).map(|j| self.weights.get2(i, j)).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
            NormAxis::Col => {
                for j in 0..c {
                    let s: f64 = (0..r).map(|i| self.weights.get2(i, j)).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }

    /// Render as `row<TAB>col<TAB>weight` lines for the visualization CLI.
    pub fn to_tsv(&self, row_labels: &[String], col_labels: &[String]) -> String {
        let (r, c) = self.weights.dims2();
        let mut out = String::new();
        for i in 0..r {
            for j in 0..c {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    row_labels.get(i).map(String::as_str).unwrap_or(""),
                    col_labels.get(j).map(String::as_str).unwrap_or(""),
                    self.weights.get2(i, j)
                );
            }
        }
        out
    }
}

/// Result of one bidirectional attention flow between sequences A and B.
pub struct Flow {
    /// For each row of A, the attention-weighted summary of B (m x d).
    pub ctx_a_from_b: Var,
    /// For each row of B, the attention-weighted summary of A (n x d).
    pub ctx_b_from_a: Var,
    /// Row-normalized A-to-B attention (m x n).
    pub alpha: Var,
    /// Column-normalized B-to-A attention (m x n, each column sums to 1).
    pub beta: Var,
}

/// S[i,j] = w_s . [A_i ; B_j ; A_i ⊙ B_j] for all row pairs.
/// `w_s` is a 3d x 1 column; A is m x d and B is n x d.
pub fn trilinear_similarity(g: &Graph, a: Var, b: Var, w_s: Var) -> Result<Var, NumericsError> {
    let d = g.shape_of(a)[1];
    let (m, n) = (g.shape_of(a)[0], g.shape_of(b)[0]);
    let w_shape = g.shape_of(w_s);
    if g.shape_of(b)[1] != d || w_shape[0] != 3 * d {
        return Err(NumericsError::ShapeMismatch {
            op: "trilinear_similarity",
            lhs: g.shape_of(a),
            rhs: w_shape,
        });
    }
    let idx = |lo: usize| (lo..lo + d).collect::<Vec<usize>>();
    let w1 = g.rows(w_s, &idx(0))?;
    let w2 = g.rows(w_s, &idx(d))?;
    let w3 = g.rows(w_s, &idx(2 * d))?;

    let s1 = g.matmul(a, w1)?; // m x 1
    let ones_row = g.leaf(Tensor::new(vec![1, n], vec![1.0; n]).expect("shape"));
    let t1 = g.matmul(s1, ones_row)?; // m x n

    let w3_row = g.transpose(w3)?; // 1 x d
    let aw3 = g.mul(a, w3_row)?; // m x d, scaled columns
    let bt = g.transpose(b)?;
    let t3 = g.matmul(aw3, bt)?; // m x n

    let s2 = g.matmul(b, w2)?; // n x 1
    let s2_row = g.transpose(s2)?; // 1 x n, broadcast over rows

    let partial = g.add(t1, t3)?;
    g.add(partial, s2_row)
}

/// Bidirectional attention flow: alpha rows weight B for each A step,
/// beta columns weight A for each B step.
pub fn bidaf_flow(g: &Graph, a: Var, b: Var, w_s: Var) -> Result<Flow, NumericsError> {
    let s = trilinear_similarity(g, a, b, w_s)?;
    let alpha = g.softmax(s, NormAxis::Row)?;
    let ctx_a_from_b = g.matmul(alpha, b)?;
    let beta = g.softmax(s, NormAxis::Col)?;
    let beta_t = g.transpose(beta)?;
    let ctx_b_from_a = g.matmul(beta_t, a)?;
    Ok(Flow {
        ctx_a_from_b,
        ctx_b_from_a,
        alpha,
        beta,
    })
}

/// Per-pair flow weights for the three modality pairs.
pub struct TriFlowWeights {
    pub video_chat: Var,
    pub video_response: Var,
    pub chat_response: Var,
}

pub struct TriAugmented {
    /// m x 3d video states with both incoming context vectors attached.
    pub video: Var,
    pub chat: Var,
    pub response: Var,
    /// The six attention distributions, for invariant checks and export.
    pub maps: Vec<(Var, NormAxis)>,
}

/// Run all three pairwise flows and concatenate each modality's states
/// with its two incoming context vectors.
pub fn augment_states_tridaf(
    g: &Graph,
    h_video: Var,
    h_chat: Var,
    h_response: Var,
    weights: &TriFlowWeights,
) -> Result<TriAugmented, NumericsError> {
    let vu = bidaf_flow(g, h_video, h_chat, weights.video_chat)?;
    let vr = bidaf_flow(g, h_video, h_response, weights.video_response)?;
    let ur = bidaf_flow(g, h_chat, h_response, weights.chat_response)?;

    let video = g.concat(&[h_video, vu.ctx_a_from_b, vr.ctx_a_from_b], 1)?;
    let chat = g.concat(&[h_chat, vu.ctx_b_from_a, ur.ctx_a_from_b], 1)?;
    let response = g.concat(&[h_response, vr.ctx_b_from_a, ur.ctx_b_from_a], 1)?;
    Ok(TriAugmented {
        video,
        chat,
        response,
        maps: vec![
            (vu.alpha, NormAxis::Row),
            (vu.beta, NormAxis::Col),
            (vr.alpha, NormAxis::Row),
            (vr.beta, NormAxis::Col),
            (ur.alpha, NormAxis::Row),
            (ur.beta, NormAxis::Col),
        ],
    })
}

/// Learned pooling parameters: e_i = v_a . tanh(W_a h_i + b_a).
pub struct SelfAttnParams {
    /// d' x d'
    pub w_a: Var,
    /// 1 x d'
    pub b_a: Var,
    /// d' x 1
    pub v_a: Var,
}

/// Pool a T x d' state matrix into one d'-vector by learned weights.
/// Returns the summary (1 x d') and the weight row (1 x T).
pub fn self_attend(
    g: &Graph,
    states: Var,
    params: &SelfAttnParams,
) -> Result<(Var, Var), NumericsError> {
    let lin = g.matmul(states, params.w_a)?;
    let lin = g.add(lin, params.b_a)?;
    let act = g.tanh(lin);
    let scores = g.matmul(act, params.v_a)?; // T x 1
    let scores_row = g.transpose(scores)?; // 1 x T
    let weights = g.softmax(scores_row, NormAxis::Row)?;
    let pooled = g.matmul(weights, states)?;
    Ok((pooled, weights))
}

/// Bilinear attention of a 1 x d_q query over T x d_k keys with
/// d_q x d_k weight. Returns (context 1 x d_k, weights 1 x T).
pub fn bilinear_attention(
    g: &Graph,
    query: Var,
    keys: Var,
    w_a: Var,
) -> Result<(Var, Var), NumericsError> {
    let qw = g.matmul(query, w_a)?; // 1 x d_k
    let kt = g.transpose(keys)?;
    let scores = g.matmul(qw, kt)?; // 1 x T
    let weights = g.softmax(scores, NormAxis::Row)?;
    let context = g.matmul(weights, keys)?;
    Ok((context, weights))
}
