use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DiscriminativeConfig, DiscriminativeModel, GenerativeConfig, GenerativeModel, LanguageModel,
    ModelDims, ModelError,
};
use crate::encoders::{Vocab, RESERVED};
use crate::numerics::{ParameterStore, Tensor};

const MAGIC: &[u8; 4] = b"VDCK";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Discriminative,
    Generative,
    Lm,
}

/// Everything needed to rebuild a model around a parameter payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminative: Option<DiscriminativeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generative: Option<GenerativeConfig>,
    pub dims: ModelDims,
    /// Full token list in index order (reserved tokens first).
    pub vocab: Vec<String>,
    pub seed: u64,
}

pub enum AnyModel {
    Discriminative(DiscriminativeModel),
    Generative(GenerativeModel),
    Lm(LanguageModel),
}

/// Named-parameter manifest: a JSON header followed by, per parameter,
/// its name, shape, and little-endian f64 payload.
pub fn save_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    store: &ParameterStore,
) -> Result<(), ModelError> {
    let json = serde_json::to_vec(meta).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, param) in store.iter() {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        let shape = param.value.shape();
        buf.push(shape.len() as u8);
        for d in shape {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in param.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, ParameterStore), ModelError> {
    let err = |msg: &str| ModelError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8], ModelError> {
        if *off + n > bytes.len() {
            return Err(ModelError::Checkpoint {
                path: path.display().to_string(),
                msg: "truncated".into(),
            });
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 4)? != MAGIC {
        return Err(err("bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(err("unsupported version"));
    }
    let json_len = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(&mut off, json_len)?)
        .map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    let n_params = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let mut store = ParameterStore::new(meta.seed);
    for _ in 0..n_params {
        let name_len = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| err("bad parameter name"))?;
        let ndim = take(&mut off, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut off, numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Tensor::new(shape, data).map_err(|_| err("bad parameter shape"))?;
        store.insert_tensor(&name, value);
    }
    Ok((meta, store))
}

/// Rebuild the architecture described by checkpoint metadata.
pub fn rebuild_model(meta: &CheckpointMeta) -> Result<AnyModel, ModelError> {
    if meta.vocab.len() < RESERVED.len()
        || meta.vocab[..RESERVED.len()]
            .iter()
            .zip(RESERVED)
            .any(|(a, b)| a != b)
    {
        return Err(ModelError::BadConfig("checkpoint vocab lacks reserved tokens"));
    }
    let vocab = Vocab::from_ranked(meta.vocab[RESERVED.len()..].iter().cloned());
    match meta.kind {
        ModelKind::Discriminative => {
            let cfg = meta
                .discriminative
                .clone()
                .ok_or(ModelError::BadConfig("missing discriminative config"))?;
            Ok(AnyModel::Discriminative(DiscriminativeModel::new(
                cfg,
                meta.dims.clone(),
                vocab,
            )?))
        }
        ModelKind::Generative => {
            let cfg = meta
                .generative
                .clone()
                .ok_or(ModelError::BadConfig("missing generative config"))?;
            Ok(AnyModel::Generative(GenerativeModel::new(
                cfg,
                meta.dims.clone(),
                vocab,
            )?))
        }
        ModelKind::Lm => Ok(AnyModel::Lm(LanguageModel::new(meta.dims.clone(), vocab))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{build_vocab, VocabOptions};

    #[test]
    fn checkpoint_roundtrip_preserves_everything() {
        let data: Vec<Vec<String>> =
            vec!["goal save pass".split_whitespace().map(str::to_string).collect()];
        let table = build_vocab(
            data.iter().map(|v| v.as_slice()),
            &VocabOptions {
                d_emb: 3,
                seed: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let (model, store) = DiscriminativeModel::init(
            DiscriminativeConfig::default(),
            ModelDims::toy(),
            &table,
            21,
        )
        .unwrap();
        let meta = CheckpointMeta {
            kind: ModelKind::Discriminative,
            discriminative: Some(model.cfg.clone()),
            generative: None,
            dims: model.dims.clone(),
            vocab: model.vocab.tokens().to_vec(),
            seed: 21,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &meta, &store).unwrap();
        let (meta2, store2) = load_checkpoint(&path).unwrap();
        assert_eq!(meta2.vocab, meta.vocab);
        assert_eq!(store2.pack_values(), store.pack_values());
        let rebuilt = rebuild_model(&meta2).unwrap();
        match rebuilt {
            AnyModel::Discriminative(m) => {
                // the reloaded model scores identically
                let video = Tensor::from_fn(2, 3, |i, j| (i + j) as f64 * 0.1);
                let chat = vec![vec!["goal".to_string()]];
                let resp = vec!["save".to_string()];
                let a = model.score_candidate(&store, &video, &chat, &resp).unwrap();
                let b = m.score_candidate(&store2, &video, &chat, &resp).unwrap();
                assert_eq!(a, b);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"NOT A CHECKPOINT").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::Checkpoint { .. })
        ));
    }
}
