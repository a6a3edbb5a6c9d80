use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::ModelError;
use crate::corpus::{read_vfea, TripleRecord};
use crate::numerics::Tensor;

/// One training/eval example with its frame features resolved in memory.
#[derive(Clone, Debug)]
pub struct Instance {
    pub video_id: String,
    pub window_index: u32,
    /// m x d_raw frame features for the context window.
    pub video: Tensor,
    /// Context utterances as token lists, in time order.
    pub chat: Vec<Vec<String>>,
    pub response: Vec<String>,
    /// All response-window utterances; references for phrase metrics.
    pub references: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn distinct_videos(&self) -> usize {
        let mut ids: Vec<&str> = self.instances.iter().map(|i| i.video_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// All chat-context and response token lists; vocabulary source.
    pub fn token_lists(&self) -> Vec<&[String]> {
        let mut out = Vec::new();
        for inst in &self.instances {
            for u in &inst.chat {
                out.push(u.as_slice());
            }
            out.push(inst.response.as_slice());
        }
        out
    }
}

pub fn write_records(path: &Path, records: &[TripleRecord]) -> Result<(), ModelError> {
    let mut f = fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| ModelError::Dataset(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TripleRecord>, ModelError> {
    let f = fs::File::open(path).map_err(|e| {
        ModelError::Dataset(format!("cannot open '{}': {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripleRecord = serde_json::from_str(&line)
            .map_err(|e| ModelError::Dataset(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Load a triples JSONL file, resolving each record's frame-feature rows
/// from its referenced VFEA file. Feature files are read once each.
pub fn load_dataset(path: &Path) -> Result<Dataset, ModelError> {
    let records = read_records(path)?;
    let mut cache: HashMap<String, Tensor> = HashMap::new();
    let mut instances = Vec::with_capacity(records.len());
    for rec in records {
        let frames = match cache.get(&rec.features_path) {
            Some(t) => t.clone(),
            None => {
                let t = read_vfea(Path::new(&rec.features_path))
                    .map_err(|e| ModelError::Dataset(e.to_string()))?;
                cache.insert(rec.features_path.clone(), t.clone());
                t
            }
        };
        let (rows, _) = frames.dims2();
        let (lo, hi) = (rec.feature_rows[0] as usize, rec.feature_rows[1] as usize);
        if lo >= hi || hi > rows {
            return Err(ModelError::Dataset(format!(
                "record {}#{} feature rows [{lo}, {hi}) out of range for {} rows",
                rec.video_id, rec.window_index, rows
            )));
        }
        let references = if rec.response_window.is_empty() {
            vec![rec.response_tokens.clone()]
        } else {
            rec.response_window.clone()
        };
        instances.push(Instance {
            video_id: rec.video_id,
            window_index: rec.window_index,
            video: frames.slice_rows(lo, hi),
            chat: rec.chat.into_iter().map(|u| u.tokens).collect(),
            response: rec.response_tokens,
            references,
        });
    }
    Ok(Dataset { instances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_vfea, SelectionReason, UtteranceRecord};

    #[test]
    fn roundtrip_records_and_resolve_features() {
        let dir = tempfile::tempdir().unwrap();
        let vfea = dir.path().join("vid.vfea");
        write_vfea(&vfea, &Tensor::from_fn(6, 3, |i, j| (i * 3 + j) as f64)).unwrap();
        let rec = TripleRecord {
            video_id: "vid".into(),
            window_index: 0,
            context_interval: [0.0, 20.0],
            response_interval: [20.0, 30.0],
            chat: vec![UtteranceRecord {
                speaker: "s".into(),
                time: 1.0,
                tokens: vec!["hello".into()],
            }],
            response_tokens: vec!["goal".into()],
            selection_reason: SelectionReason::BleuMatch,
            features_path: vfea.display().to_string(),
            feature_rows: [2, 5],
            response_window: vec![vec!["goal".into()], vec!["other".into()]],
        };
        let jsonl = dir.path().join("triples.jsonl");
        write_records(&jsonl, &[rec]).unwrap();
        let ds = load_dataset(&jsonl).unwrap();
        assert_eq!(ds.len(), 1);
        let inst = &ds.instances[0];
        assert_eq!(inst.video.dims2(), (3, 3));
        assert_eq!(inst.video.data()[0], 6.0);
        assert_eq!(inst.references.len(), 2);
    }

    #[test]
    fn bad_row_range_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let vfea = dir.path().join("vid.vfea");
        write_vfea(&vfea, &Tensor::from_fn(4, 2, |_, _| 0.0)).unwrap();
        let rec = TripleRecord {
            video_id: "vid".into(),
            window_index: 0,
            context_interval: [0.0, 20.0],
            response_interval: [20.0, 30.0],
            chat: vec![],
            response_tokens: vec!["x".into()],
            selection_reason: SelectionReason::FallbackFirst,
            features_path: vfea.display().to_string(),
            feature_rows: [2, 9],
            response_window: vec![],
        };
        let jsonl = dir.path().join("triples.jsonl");
        write_records(&jsonl, &[rec]).unwrap();
        assert!(load_dataset(&jsonl).is_err());
    }
}
