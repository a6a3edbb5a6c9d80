use super::{ModelDims, ModelError};
use crate::encoders::{EmbeddingTable, SequenceEncoder, Vocab, BOS, EOS};
use crate::numerics::{Graph, NormAxis, ParameterStore, Tensor, Var};

/// Single-layer LSTM language model over chat text. Doubles as the
/// sentence representer for the simple baselines: `represent` returns the
/// final hidden state after reading a token sequence.
#[derive(Clone, Debug)]
pub struct LanguageModel {
    pub dims: ModelDims,
    pub vocab: Vocab,
    encoder: SequenceEncoder,
}

impl LanguageModel {
    pub fn new(dims: ModelDims, vocab: Vocab) -> Self {
        let encoder = SequenceEncoder::new("lm", dims.d_emb, dims.hidden, 1, false);
        LanguageModel {
            dims,
            vocab,
            encoder,
        }
    }

    pub fn register_params(&self, store: &mut ParameterStore, embedding: &Tensor) {
        let scale = self.dims.init_scale;
        store.insert_tensor("embed", embedding.clone());
        self.encoder.register(store, scale);
        store.insert_uniform("out.w", &[self.dims.hidden, self.vocab.len()], scale);
        store.insert_uniform("out.b", &[1, self.vocab.len()], scale);
    }

    pub fn init(
        dims: ModelDims,
        table: &EmbeddingTable,
        seed: u64,
    ) -> (Self, ParameterStore) {
        let model = LanguageModel::new(dims, table.vocab.clone());
        let mut store = ParameterStore::new(seed);
        model.register_params(&mut store, &table.matrix);
        (model, store)
    }

    /// Next-token cross-entropy over one sequence: inputs are
    /// `<BOS> t_0 .. t_{n-1}`, targets `t_0 .. t_{n-1} <EOS>`.
    pub fn xe_loss(
        &self,
        g: &Graph,
        store: &ParameterStore,
        tokens: &[String],
    ) -> Result<(Var, usize), ModelError> {
        let cap = self.dims.chat_cap.min(tokens.len());
        let mut targets = self.vocab.lookup_all(&tokens[..cap]);
        targets.push(EOS);
        let mut inputs = vec![BOS];
        inputs.extend(&targets[..targets.len() - 1]);

        let embed = g.param(store, "embed")?;
        let out_w = g.param(store, "out.w")?;
        let out_b = g.param(store, "out.b")?;
        let cell = crate::encoders::LstmCell::new("lm.l0.fwd", self.dims.d_emb, self.dims.hidden)
            .bind(g, store)?;
        let (mut h, mut c) = cell.zero_state(g);
        let mut terms = Vec::with_capacity(targets.len());
        for (inp, tgt) in inputs.iter().zip(&targets) {
            let x = g.rows(embed, &[*inp])?;
            let (nh, nc) = cell.step(g, x, h, c)?;
            h = nh;
            c = nc;
            let logits = g.add(g.matmul(h, out_w)?, out_b)?;
            let logp = g.log_softmax(logits, NormAxis::Row)?;
            terms.push(g.neg(g.at(logp, *tgt)?));
        }
        Ok((g.add_n(&terms)?, targets.len()))
    }

    /// Final hidden state after reading `tokens` (last `chat_cap` kept).
    /// Empty input maps to the zero vector.
    pub fn represent(&self, store: &ParameterStore, tokens: &[String]) -> Result<Vec<f64>, ModelError> {
        if tokens.is_empty() {
            return Ok(vec![0.0; self.dims.hidden]);
        }
        let g = Graph::new();
        let embed = g.param(store, "embed")?;
        let out = crate::encoders::encode_tokens(
            &g,
            store,
            &self.encoder,
            embed,
            &self.vocab,
            tokens,
            self.dims.chat_cap,
            crate::encoders::FinalStateMode::LastStep,
        )?;
        Ok(g.value(out.final_state).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{build_vocab, VocabOptions};

    fn table() -> EmbeddingTable {
        let data: Vec<Vec<String>> =
            vec!["goal save nice".split_whitespace().map(str::to_string).collect()];
        build_vocab(
            data.iter().map(|v| v.as_slice()),
            &VocabOptions {
                d_emb: 3,
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn representation_is_deterministic_and_sized() {
        let dims = ModelDims::toy();
        let (lm, store) = LanguageModel::init(dims, &table(), 6);
        let toks = vec!["goal".to_string(), "save".to_string()];
        let a = lm.represent(&store, &toks).unwrap();
        let b = lm.represent(&store, &toks).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().any(|v| *v != 0.0));
        assert_eq!(lm.represent(&store, &[]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn xe_counts_eos_step() {
        let dims = ModelDims::toy();
        let (lm, store) = LanguageModel::init(dims, &table(), 6);
        let g = Graph::new();
        let (loss, steps) = lm
            .xe_loss(&g, &store, &["goal".to_string(), "nice".to_string()])
            .unwrap();
        assert_eq!(steps, 3);
        assert!(g.item(loss) > 0.0);
    }
}
