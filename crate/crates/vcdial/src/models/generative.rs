use super::{GenVariant, GenerativeConfig, ModelDims, ModelError};
use crate::attention::{bidaf_flow, bilinear_attention};
use crate::encoders::{
    concat_chat_context, encode_frames, encode_tokens, split_rows, BoundLstm, EmbeddingTable,
    LstmCell, SequenceEncoder, Vocab, BOS, EOS,
};
use crate::numerics::{Graph, NormAxis, ParameterStore, Tensor, Var};

/// Attention read out at one generated token, for visualization.
#[derive(Clone, Debug)]
pub struct StepAttention {
    pub token: String,
    pub video_weights: Option<Tensor>,
    pub chat_weights: Option<Tensor>,
}

/// Teacher-forced loss with everything needed for invariant checks.
pub struct XeOutput {
    pub loss: Var,
    pub steps: usize,
    pub maps: Vec<(Var, NormAxis)>,
}

/// Seq2seq decoder over video/chat encoders with bilinear attention;
/// the bidaf variant first runs bidirectional attention flow between the
/// two encoders and attends over the augmented states.
#[derive(Clone, Debug)]
pub struct GenerativeModel {
    pub cfg: GenerativeConfig,
    pub dims: ModelDims,
    pub vocab: Vocab,
    video_encoder: Option<SequenceEncoder>,
    chat_encoder: Option<SequenceEncoder>,
    decoder_cells: Vec<LstmCell>,
}

struct Bound {
    embed: Var,
    cells: Vec<BoundLstm>,
    att_v: Option<Var>,
    att_u: Option<Var>,
    fuse: Var,
    out_w: Var,
    out_b: Var,
}

struct Contexts {
    v_keys: Option<Var>,
    u_keys: Option<Var>,
    /// Per decoder layer (h0, c0).
    init: Vec<(Var, Var)>,
    flow_maps: Vec<(Var, NormAxis)>,
}

impl GenerativeModel {
    pub fn new(cfg: GenerativeConfig, dims: ModelDims, vocab: Vocab) -> Result<Self, ModelError> {
        cfg.validate()?;
        if cfg.variant == GenVariant::Bidaf && !(cfg.variant.uses_video() && cfg.variant.uses_chat())
        {
            return Err(ModelError::BadConfig("bidaf needs both modalities"));
        }
        let h = dims.hidden;
        let video_encoder = cfg
            .variant
            .uses_video()
            .then(|| SequenceEncoder::new("gvenc", h, h, dims.gen_layers, false));
        let chat_encoder = cfg
            .variant
            .uses_chat()
            .then(|| SequenceEncoder::new("guenc", dims.d_emb, h, dims.gen_layers, false));
        let mut decoder_cells = Vec::with_capacity(dims.gen_layers);
        for l in 0..dims.gen_layers {
            let input = if l == 0 { dims.d_emb } else { h };
            decoder_cells.push(LstmCell::new(&format!("dec.l{l}"), input, h));
        }
        Ok(GenerativeModel {
            cfg,
            dims,
            vocab,
            video_encoder,
            chat_encoder,
            decoder_cells,
        })
    }

    fn key_dim(&self) -> usize {
        if self.cfg.variant == GenVariant::Bidaf {
            2 * self.dims.hidden
        } else {
            self.dims.hidden
        }
    }

    fn comb_dim(&self) -> usize {
        let mut d = 0;
        if self.video_encoder.is_some() {
            d += self.dims.hidden;
        }
        if self.chat_encoder.is_some() {
            d += self.dims.hidden;
        }
        d
    }

    fn fuse_in_dim(&self) -> usize {
        let mut d = self.dims.hidden;
        if self.video_encoder.is_some() {
            d += self.key_dim();
        }
        if self.chat_encoder.is_some() {
            d += self.key_dim();
        }
        d
    }

    pub fn register_params(&self, store: &mut ParameterStore, embedding: &Tensor) {
        let scale = self.dims.init_scale;
        let h = self.dims.hidden;
        store.insert_tensor("embed", embedding.clone());
        if let Some(enc) = &self.video_encoder {
            store.insert_uniform("vproj.w", &[self.dims.d_raw, h], scale);
            store.insert_uniform("vproj.b", &[1, h], scale);
            enc.register(store, scale);
        }
        if let Some(enc) = &self.chat_encoder {
            enc.register(store, scale);
        }
        if self.cfg.variant == GenVariant::Bidaf {
            store.insert_uniform("flow.vu.w", &[3 * h, 1], scale);
        }
        for l in 0..self.dims.gen_layers {
            store.insert_uniform(&format!("init.h.l{l}.w"), &[self.comb_dim(), h], scale);
            store.insert_uniform(&format!("init.h.l{l}.b"), &[1, h], scale);
            store.insert_uniform(&format!("init.c.l{l}.w"), &[self.comb_dim(), h], scale);
            store.insert_uniform(&format!("init.c.l{l}.b"), &[1, h], scale);
        }
        for cell in &self.decoder_cells {
            cell.register(store, scale);
        }
        if self.video_encoder.is_some() {
            store.insert_uniform("att.v.w", &[h, self.key_dim()], scale);
        }
        if self.chat_encoder.is_some() {
            store.insert_uniform("att.u.w", &[h, self.key_dim()], scale);
        }
        store.insert_uniform("fuse.w", &[self.fuse_in_dim(), h], scale);
        store.insert_uniform("out.w", &[h, self.vocab.len()], scale);
        store.insert_uniform("out.b", &[1, self.vocab.len()], scale);
    }

    pub fn init(
        cfg: GenerativeConfig,
        dims: ModelDims,
        table: &EmbeddingTable,
        seed: u64,
    ) -> Result<(Self, ParameterStore), ModelError> {
        let model = GenerativeModel::new(cfg, dims, table.vocab.clone())?;
        let mut store = ParameterStore::new(seed);
        model.register_params(&mut store, &table.matrix);
        Ok((model, store))
    }

    fn bind(&self, g: &Graph, store: &ParameterStore) -> Result<Bound, ModelError> {
        let cells = self
            .decoder_cells
            .iter()
            .map(|c| c.bind(g, store))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Bound {
            embed: g.param(store, "embed")?,
            cells,
            att_v: self
                .video_encoder
                .as_ref()
                .map(|_| g.param(store, "att.v.w"))
                .transpose()?,
            att_u: self
                .chat_encoder
                .as_ref()
                .map(|_| g.param(store, "att.u.w"))
                .transpose()?,
            fuse: g.param(store, "fuse.w")?,
            out_w: g.param(store, "out.w")?,
            out_b: g.param(store, "out.b")?,
        })
    }

    fn encode_contexts(
        &self,
        g: &Graph,
        store: &ParameterStore,
        video: &Tensor,
        chat: &[Vec<String>],
    ) -> Result<Contexts, ModelError> {
        let mode = crate::encoders::FinalStateMode::LastStep;
        let mut finals: Vec<Var> = Vec::new();
        let mut v_states = None;
        let mut u_states = None;

        if let Some(enc) = &self.video_encoder {
            if video.dims2().0 == 0 || video.numel() == 0 {
                return Err(ModelError::MissingModality("video"));
            }
            let w = g.param(store, "vproj.w")?;
            let b = g.param(store, "vproj.b")?;
            let out = encode_frames(g, store, enc, w, b, video, self.dims.video_cap, mode)?;
            finals.push(out.final_state);
            v_states = Some(out.states);
        }
        if let Some(enc) = &self.chat_encoder {
            if chat.is_empty() {
                return Err(ModelError::MissingModality("chat"));
            }
            let embed = g.param(store, "embed")?;
            let tokens = concat_chat_context(chat, self.dims.chat_cap);
            let out = encode_tokens(g, store, enc, embed, &self.vocab, &tokens, self.dims.chat_cap, mode)?;
            finals.push(out.final_state);
            u_states = Some(out.states);
        }

        let mut flow_maps = Vec::new();
        let (v_keys, u_keys) = if self.cfg.variant == GenVariant::Bidaf {
            let w = g.param(store, "flow.vu.w")?;
            let v = v_states.expect("video states");
            let u = u_states.expect("chat states");
            let flow = bidaf_flow(g, v, u, w)?;
            flow_maps.push((flow.alpha, NormAxis::Row));
            flow_maps.push((flow.beta, NormAxis::Col));
            (
                Some(g.concat(&[v, flow.ctx_a_from_b], 1)?),
                Some(g.concat(&[u, flow.ctx_b_from_a], 1)?),
            )
        } else {
            (v_states, u_states)
        };

        let comb = if finals.len() == 1 {
            finals[0]
        } else {
            g.concat(&finals, 1)?
        };
        let mut init = Vec::with_capacity(self.dims.gen_layers);
        for l in 0..self.dims.gen_layers {
            let hw = g.param(store, &format!("init.h.l{l}.w"))?;
            let hb = g.param(store, &format!("init.h.l{l}.b"))?;
            let cw = g.param(store, &format!("init.c.l{l}.w"))?;
            let cb = g.param(store, &format!("init.c.l{l}.b"))?;
            let h0 = g.add(g.matmul(comb, hw)?, hb)?;
            let c0 = g.add(g.matmul(comb, cw)?, cb)?;
            init.push((h0, c0));
        }
        Ok(Contexts {
            v_keys,
            u_keys,
            init,
            flow_maps,
        })
    }

    /// One decode step. Returns the log-vocabulary distribution (1 x |V|)
    /// and the per-modality attention weight rows.
    fn step(
        &self,
        g: &Graph,
        bound: &Bound,
        ctxs: &Contexts,
        token_id: usize,
        state: &mut Vec<(Var, Var)>,
    ) -> Result<(Var, Option<Var>, Option<Var>), ModelError> {
        let mut x = g.rows(bound.embed, &[token_id])?;
        for (l, cell) in bound.cells.iter().enumerate() {
            let (h, c) = state[l];
            let (nh, nc) = cell.step(g, x, h, c)?;
            state[l] = (nh, nc);
            x = nh;
        }
        let h_top = x;

        let mut fused_parts = Vec::new();
        let mut wv = None;
        let mut wu = None;
        if let (Some(keys), Some(att)) = (ctxs.v_keys, bound.att_v) {
            let (ctx, weights) = bilinear_attention(g, h_top, keys, att)?;
            fused_parts.push(ctx);
            wv = Some(weights);
        }
        if let (Some(keys), Some(att)) = (ctxs.u_keys, bound.att_u) {
            let (ctx, weights) = bilinear_attention(g, h_top, keys, att)?;
            fused_parts.push(ctx);
            wu = Some(weights);
        }
        fused_parts.push(h_top);
        let fused_in = g.concat(&fused_parts, 1)?;
        let h_hat = g.tanh(g.matmul(fused_in, bound.fuse)?);
        let logits = g.add(g.matmul(h_hat, bound.out_w)?, bound.out_b)?;
        let logp = g.log_softmax(logits, NormAxis::Row)?;
        Ok((logp, wv, wu))
    }

    /// Teacher-forcing targets: the response truncated to the decoder's
    /// unroll cap, with `<EOS>` appended.
    fn targets(&self, response: &[String]) -> Vec<usize> {
        let cap = self.dims.response_cap.min(response.len());
        let mut ids = self.vocab.lookup_all(&response[..cap]);
        ids.push(EOS);
        ids
    }

    /// Sum of per-step cross-entropies for one (video, chat, response).
    pub fn xe_loss(
        &self,
        g: &Graph,
        store: &ParameterStore,
        video: &Tensor,
        chat: &[Vec<String>],
        response: &[String],
    ) -> Result<XeOutput, ModelError> {
        let bound = self.bind(g, store)?;
        let ctxs = self.encode_contexts(g, store, video, chat)?;
        let mut state = ctxs.init.clone();
        let targets = self.targets(response);
        let mut inputs = vec![BOS];
        inputs.extend(&targets[..targets.len() - 1]);

        let mut maps = ctxs.flow_maps.clone();
        let mut terms = Vec::with_capacity(targets.len());
        for (inp, tgt) in inputs.iter().zip(&targets) {
            let (logp, wv, wu) = self.step(g, &bound, &ctxs, *inp, &mut state)?;
            if let Some(w) = wv {
                maps.push((w, NormAxis::Row));
            }
            if let Some(w) = wu {
                maps.push((w, NormAxis::Row));
            }
            let picked = g.at(logp, *tgt)?;
            terms.push(g.neg(picked));
        }
        Ok(XeOutput {
            loss: g.add_n(&terms)?,
            steps: targets.len(),
            maps,
        })
    }

    /// Summed token log-likelihood of a candidate response (the reranking
    /// score). `mean_per_token` divides by the step count.
    pub fn candidate_logprob(
        &self,
        store: &ParameterStore,
        video: &Tensor,
        chat: &[Vec<String>],
        candidate: &[String],
        mean_per_token: bool,
    ) -> Result<f64, ModelError> {
        let g = Graph::new();
        let out = self.xe_loss(&g, store, video, chat, candidate)?;
        let sum = -g.item(out.loss);
        Ok(if mean_per_token {
            sum / out.steps as f64
        } else {
            sum
        })
    }

    /// Greedy argmax decoding from `<BOS>` until `<EOS>` or `max_len`.
    pub fn generate(
        &self,
        store: &ParameterStore,
        video: &Tensor,
        chat: &[Vec<String>],
        max_len: usize,
    ) -> Result<(Vec<String>, Vec<StepAttention>), ModelError> {
        let g = Graph::new();
        let bound = self.bind(&g, store)?;
        let ctxs = self.encode_contexts(&g, store, video, chat)?;
        let mut state = ctxs.init.clone();

        let mut tokens = Vec::new();
        let mut attention = Vec::new();
        let mut prev = BOS;
        for _ in 0..max_len {
            let (logp, wv, wu) = self.step(&g, &bound, &ctxs, prev, &mut state)?;
            let row = g.value(logp);
            let mut best = 0usize;
            for (i, v) in row.data().iter().enumerate() {
                if *v > row.data()[best] {
                    best = i;
                }
            }
            if best == EOS {
                break;
            }
            let token = self.vocab.token(best).to_string();
            attention.push(StepAttention {
                token: token.clone(),
                video_weights: wv.map(|w| g.value(w)),
                chat_weights: wu.map(|w| g.value(w)),
            });
            tokens.push(token);
            prev = best;
        }
        Ok((tokens, attention))
    }
}
