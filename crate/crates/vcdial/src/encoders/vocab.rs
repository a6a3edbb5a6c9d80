use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::EncoderError;
use crate::numerics::rng::rng_for;
use crate::numerics::Tensor;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const USER: usize = 4;
pub const SEP: usize = 5;

/// Reserved tokens, fixed at the first six indices.
pub const RESERVED: [&str; 6] = ["<PAD>", "<UNK>", "<BOS>", "<EOS>", "<USER>", "<SEP>"];

/// Token-to-index map with reserved control tokens.
#[derive(Clone, Debug)]
pub struct Vocab {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    /// Build from the non-reserved tokens in rank order.
    pub fn from_ranked(ranked: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in ranked {
            if !RESERVED.contains(&t.as_str()) {
                tokens.push(t);
            }
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { index, tokens }
    }

    /// Index of a token; unknown tokens map to `<UNK>`.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn lookup_all(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Vocabulary plus its initial embedding matrix (|V| x d_emb).
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub vocab: Vocab,
    pub matrix: Tensor,
}

#[derive(Clone, Debug)]
pub struct VocabOptions {
    pub max_size: usize,
    pub d_emb: usize,
    pub seed: u64,
    pub embedding_file: Option<std::path::PathBuf>,
}

impl Default for VocabOptions {
    fn default() -> Self {
        VocabOptions {
            max_size: 27_000,
            d_emb: 100,
            seed: 0,
            embedding_file: None,
        }
    }
}

/// Count tokens over the training split, keep the most frequent (ties
/// lexicographic), and initialize embeddings uniformly on (-0.08, 0.08).
/// Rows for tokens present in an optional text embedding file are
/// overwritten from it.
pub fn build_vocab<'a, I>(token_lists: I, opts: &VocabOptions) -> Result<EmbeddingTable, EncoderError>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for list in token_lists {
        for t in list {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    for r in RESERVED {
        counts.remove(r);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(opts.max_size.saturating_sub(RESERVED.len()));
    let vocab = Vocab::from_ranked(ranked.into_iter().map(|(t, _)| t));

    // per-token seeding keeps rows stable under vocab changes
    let mut data = Vec::with_capacity(vocab.len() * opts.d_emb);
    for token in vocab.tokens() {
        let mut rng = rng_for(opts.seed, &format!("embed/{token}"), 0);
        for _ in 0..opts.d_emb {
            data.push(rng.gen_range(-0.08..0.08));
        }
    }
    let mut matrix = Tensor::new(vec![vocab.len(), opts.d_emb], data).expect("shape");

    if let Some(path) = &opts.embedding_file {
        matrix = overlay_pretrained(matrix, &vocab, path, opts.d_emb)?;
    }
    Ok(EmbeddingTable { vocab, matrix })
}

fn overlay_pretrained(
    matrix: Tensor,
    vocab: &Vocab,
    path: &Path,
    d_emb: usize,
) -> Result<Tensor, EncoderError> {
    let text = fs::read_to_string(path)?;
    let mut data = matrix.data().to_vec();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or("");
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|_| EncoderError::BadEmbeddingLine { line: i + 1 })?;
        if values.len() != d_emb {
            return Err(EncoderError::EmbeddingDim {
                got: values.len(),
                expected: d_emb,
            });
        }
        let id = vocab.lookup(token);
        if id == UNK && token != RESERVED[UNK] {
            continue; // token not in vocab
        }
        data[id * d_emb..(id + 1) * d_emb].copy_from_slice(&values);
    }
    Ok(Tensor::new(vec![vocab.len(), d_emb], data).expect("shape"))
}

/// Join utterances in time order with `<SEP>` between them, keeping the
/// last `cap` tokens.
pub fn concat_chat_context(utterances: &[Vec<String>], cap: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (i, u) in utterances.iter().enumerate() {
        if i > 0 {
            out.push(RESERVED[SEP].to_string());
        }
        out.extend(u.iter().cloned());
    }
    if out.len() > cap {
        out.split_off(out.len() - cap)
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn lists(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn keeps_most_frequent_token() {
        let data = lists(&[&["a", "a", "a", "b"]]);
        let table = build_vocab(
            data.iter().map(|v| v.as_slice()),
            &VocabOptions {
                max_size: RESERVED.len() + 1,
                d_emb: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(table.vocab.len(), 7);
        assert_ne!(table.vocab.lookup("a"), UNK);
        assert_eq!(table.vocab.lookup("b"), UNK);
    }

    #[test]
    fn unknown_token_maps_to_unk_row() {
        let data = lists(&[&["goal"]]);
        let table = build_vocab(
            data.iter().map(|v| v.as_slice()),
            &VocabOptions {
                d_emb: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(table.vocab.lookup("never-seen"), UNK);
    }

    #[test]
    fn embedding_file_overwrites_rows() {
        let data = lists(&[&["goal", "pass"]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "goal 1.0 2.0 3.0").unwrap();
        writeln!(f, "unseen-token 9.0 9.0 9.0").unwrap();
        drop(f);
        let table = build_vocab(
            data.iter().map(|v| v.as_slice()),
            &VocabOptions {
                d_emb: 3,
                embedding_file: Some(path),
                ..Default::default()
            },
        )
        .unwrap();
        let id = table.vocab.lookup("goal");
        let row = &table.matrix.data()[id * 3..(id + 1) * 3];
        assert_eq!(row, &[1.0, 2.0, 3.0]);
        // the other rows keep their seeded init scale
        let pass_id = table.vocab.lookup("pass");
        assert!(table.matrix.data()[pass_id * 3..(pass_id + 1) * 3]
            .iter()
            .all(|v| v.abs() < 0.08));
    }

    #[test]
    fn embedding_dim_mismatch_is_config_error() {
        let data = lists(&[&["goal"]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        std::fs::write(&path, "goal 1.0 2.0").unwrap();
        let err = build_vocab(
            data.iter().map(|v| v.as_slice()),
            &VocabOptions {
                d_emb: 3,
                embedding_file: Some(path),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, EncoderError::EmbeddingDim { got: 2, expected: 3 }));
    }

    #[test]
    fn chat_context_joins_with_sep_and_truncates() {
        let utts = lists(&[&["hi"], &["goal"]]);
        assert_eq!(concat_chat_context(&utts, 70), ["hi", "<SEP>", "goal"]);

        let single = lists(&[&["hi", "there"]]);
        assert_eq!(concat_chat_context(&single, 70), ["hi", "there"]);

        let many: Vec<Vec<String>> = (0..50)
            .map(|i| vec![format!("t{i}"), format!("u{i}")])
            .collect();
        let flat = concat_chat_context(&many, 70);
        assert_eq!(flat.len(), 70);
        // keeps the most recent tokens
        assert_eq!(flat.last().unwrap(), "u49");
    }
}
