use super::{DiscVariant, DiscriminativeConfig, ModelDims, ModelError};
use crate::attention::{augment_states_tridaf, self_attend, SelfAttnParams, TriFlowWeights};
use crate::encoders::{
    concat_chat_context, encode_frames, encode_tokens, EmbeddingTable, SequenceEncoder, Vocab,
};
use crate::numerics::{Graph, NormAxis, ParameterStore, Tensor, Var};

/// Probability of a triple plus every attention distribution produced on
/// the way (empty for the non-attention variants).
pub struct ScoreOutput {
    pub probability: Var,
    pub maps: Vec<(Var, NormAxis)>,
}

/// Discriminative scorer: p(v, u, r) = sigmoid(context^T W response + b),
/// where the context is built per variant (chat, video, both, or the
/// self-attended TriDAF summaries).
#[derive(Clone, Debug)]
pub struct DiscriminativeModel {
    pub cfg: DiscriminativeConfig,
    pub dims: ModelDims,
    pub vocab: Vocab,
    video_encoder: Option<SequenceEncoder>,
    chat_encoder: Option<SequenceEncoder>,
    response_encoder: SequenceEncoder,
}

impl DiscriminativeModel {
    pub fn new(cfg: DiscriminativeConfig, dims: ModelDims, vocab: Vocab) -> Result<Self, ModelError> {
        cfg.validate()?;
        let h = dims.hidden;
        let video_encoder = cfg.variant.uses_video().then(|| {
            SequenceEncoder::new("venc", h, h, dims.disc_layers, dims.disc_bidirectional)
        });
        let chat_encoder = cfg.variant.uses_chat().then(|| {
            SequenceEncoder::new("uenc", dims.d_emb, h, dims.disc_layers, dims.disc_bidirectional)
        });
        let response_encoder =
            SequenceEncoder::new("renc", dims.d_emb, h, dims.disc_layers, dims.disc_bidirectional);
        Ok(DiscriminativeModel {
            cfg,
            dims,
            vocab,
            video_encoder,
            chat_encoder,
            response_encoder,
        })
    }

    /// Width of the per-modality representation fed to the bilinear scorer.
    fn summary_dim(&self) -> usize {
        let state = self.dims.disc_state_dim();
        match self.cfg.variant {
            DiscVariant::Tridaf => 3 * state,
            _ => state,
        }
    }

    fn context_dim(&self) -> usize {
        match self.cfg.variant {
            DiscVariant::DualChat | DiscVariant::DualVideo => self.summary_dim(),
            DiscVariant::Triple | DiscVariant::Tridaf => 2 * self.summary_dim(),
        }
    }

    fn flow_weight_name(&self, pair: &str) -> String {
        if self.dims.share_flow_weights {
            "flow.shared.w".to_string()
        } else {
            format!("flow.{pair}.w")
        }
    }

    /// Create all parameters. The embedding matrix comes in from vocab
    /// building; everything else is uniform(-init_scale, init_scale).
    pub fn register_params(&self, store: &mut ParameterStore, embedding: &Tensor) {
        let scale = self.dims.init_scale;
        store.insert_tensor("embed", embedding.clone());
        if let Some(enc) = &self.video_encoder {
            store.insert_uniform("vproj.w", &[self.dims.d_raw, self.dims.hidden], scale);
            store.insert_uniform("vproj.b", &[1, self.dims.hidden], scale);
            enc.register(store, scale);
        }
        if let Some(enc) = &self.chat_encoder {
            enc.register(store, scale);
        }
        self.response_encoder.register(store, scale);

        if self.cfg.variant == DiscVariant::Tridaf {
            let state = self.dims.disc_state_dim();
            let d_aug = 3 * state;
            for pair in ["vu", "vr", "ur"] {
                let name = self.flow_weight_name(pair);
                if !store.contains(&name) {
                    store.insert_uniform(&name, &[3 * state, 1], scale);
                }
            }
            for modality in ["v", "u", "r"] {
                store.insert_uniform(&format!("sattn.{modality}.w_a"), &[d_aug, d_aug], scale);
                store.insert_uniform(&format!("sattn.{modality}.b_a"), &[1, d_aug], scale);
                store.insert_uniform(&format!("sattn.{modality}.v_a"), &[d_aug, 1], scale);
            }
        }
        store.insert_uniform("score.w", &[self.context_dim(), self.summary_dim()], scale);
        store.insert_uniform("score.b", &[1, 1], scale);
    }

    pub fn init(
        cfg: DiscriminativeConfig,
        dims: ModelDims,
        table: &EmbeddingTable,
        seed: u64,
    ) -> Result<(Self, ParameterStore), ModelError> {
        let model = DiscriminativeModel::new(cfg, dims, table.vocab.clone())?;
        let mut store = ParameterStore::new(seed);
        model.register_params(&mut store, &table.matrix);
        Ok((model, store))
    }

    fn self_attn_params(
        &self,
        g: &Graph,
        store: &ParameterStore,
        modality: &str,
    ) -> Result<SelfAttnParams, ModelError> {
        Ok(SelfAttnParams {
            w_a: g.param(store, &format!("sattn.{modality}.w_a"))?,
            b_a: g.param(store, &format!("sattn.{modality}.b_a"))?,
            v_a: g.param(store, &format!("sattn.{modality}.v_a"))?,
        })
    }

    /// Score an assembled triple. `video` may come from a different
    /// instance than `chat`/`response` (negative sampling mixes them).
    pub fn score_parts(
        &self,
        g: &Graph,
        store: &ParameterStore,
        video: &Tensor,
        chat: &[Vec<String>],
        response: &[String],
    ) -> Result<ScoreOutput, ModelError> {
        let embed = g.param(store, "embed")?;
        let mode = self.dims.final_state;

        let video_enc = match &self.video_encoder {
            Some(enc) => {
                if video.dims2().0 == 0 || video.numel() == 0 {
                    return Err(ModelError::MissingModality("video"));
                }
                let w = g.param(store, "vproj.w")?;
                let b = g.param(store, "vproj.b")?;
                Some(encode_frames(g, store, enc, w, b, video, self.dims.video_cap, mode)?)
            }
            None => None,
        };
        let chat_enc = match &self.chat_encoder {
            Some(enc) => {
                if chat.is_empty() {
                    return Err(ModelError::MissingModality("chat"));
                }
                let tokens = concat_chat_context(chat, self.dims.chat_cap);
                Some(encode_tokens(
                    g, store, enc, embed, &self.vocab, &tokens, self.dims.chat_cap, mode,
                )?)
            }
            None => None,
        };
        let response_enc = encode_tokens(
            g,
            store,
            &self.response_encoder,
            embed,
            &self.vocab,
            response,
            self.dims.response_cap,
            mode,
        )?;

        let mut maps: Vec<(Var, NormAxis)> = Vec::new();
        let (context, response_vec) = match self.cfg.variant {
            DiscVariant::DualChat => (
                chat_enc.as_ref().expect("chat encoder").final_state,
                response_enc.final_state,
            ),
            DiscVariant::DualVideo => (
                video_enc.as_ref().expect("video encoder").final_state,
                response_enc.final_state,
            ),
            DiscVariant::Triple => {
                let v = video_enc.as_ref().expect("video encoder").final_state;
                let u = chat_enc.as_ref().expect("chat encoder").final_state;
                (g.concat(&[v, u], 1)?, response_enc.final_state)
            }
            DiscVariant::Tridaf => {
                let weights = TriFlowWeights {
                    video_chat: g.param(store, &self.flow_weight_name("vu"))?,
                    video_response: g.param(store, &self.flow_weight_name("vr"))?,
                    chat_response: g.param(store, &self.flow_weight_name("ur"))?,
                };
                let aug = augment_states_tridaf(
                    g,
                    video_enc.as_ref().expect("video encoder").states,
                    chat_enc.as_ref().expect("chat encoder").states,
                    response_enc.states,
                    &weights,
                )?;
                maps.extend(aug.maps);
                let (cv, wv) = self_attend(g, aug.video, &self.self_attn_params(g, store, "v")?)?;
                let (cu, wu) = self_attend(g, aug.chat, &self.self_attn_params(g, store, "u")?)?;
                let (cr, wr) =
                    self_attend(g, aug.response, &self.self_attn_params(g, store, "r")?)?;
                maps.push((wv, NormAxis::Row));
                maps.push((wu, NormAxis::Row));
                maps.push((wr, NormAxis::Row));
                (g.concat(&[cv, cu], 1)?, cr)
            }
        };

        let w = g.param(store, "score.w")?;
        let b = g.param(store, "score.b")?;
        let projected = g.matmul(context, w)?;
        let rt = g.transpose(response_vec)?;
        let logit = g.matmul(projected, rt)?;
        let logit = g.add(logit, b)?;
        Ok(ScoreOutput {
            probability: g.sigmoid(logit),
            maps,
        })
    }

    /// Plain-f64 score for evaluation: build a fresh graph and read out p.
    pub fn score_candidate(
        &self,
        store: &ParameterStore,
        video: &Tensor,
        chat: &[Vec<String>],
        candidate: &[String],
    ) -> Result<f64, ModelError> {
        let g = Graph::new();
        let out = self.score_parts(&g, store, video, chat, candidate)?;
        Ok(g.item(out.probability))
    }
}
