use rand::Rng;

use super::{Dataset, ModelError};
use crate::numerics::rng::rng_for;

/// Indices of the three corrupted-modality training negatives for one
/// positive instance. Every source comes from a different video.
#[derive(Clone, Copy, Debug)]
pub struct NegativeSet {
    pub wrong_video: usize,
    pub wrong_chat: usize,
    pub wrong_response: usize,
}

/// A 10-way evaluation list: nine responses drawn from other videos plus
/// the positive, shuffled into a seeded position.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub candidates: Vec<Vec<String>>,
    pub positive_index: usize,
    /// Dataset index each candidate came from (None for the positive).
    pub sources: Vec<Option<usize>>,
    pub seed: u64,
}

pub const EVAL_LIST_SIZE: usize = 10;

fn other_video_pool(dataset: &Dataset, positive: usize) -> Result<Vec<usize>, ModelError> {
    let pos_video = &dataset.instances[positive].video_id;
    let pool: Vec<usize> = dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| &inst.video_id != pos_video)
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return Err(ModelError::SingleVideoDataset);
    }
    Ok(pool)
}

/// Three independent draws from other-video instances, seeded per
/// (seed, positive index).
pub fn sample_train_negatives(
    dataset: &Dataset,
    positive: usize,
    seed: u64,
) -> Result<NegativeSet, ModelError> {
    let pool = other_video_pool(dataset, positive)?;
    let mut rng = rng_for(seed, "neg-train", positive as u64);
    let mut draw = || pool[rng.gen_range(0..pool.len())];
    Ok(NegativeSet {
        wrong_video: draw(),
        wrong_chat: draw(),
        wrong_response: draw(),
    })
}

/// Build the 10-candidate retrieval list for one instance. Negatives are
/// drawn without replacement when the other-video pool allows it.
pub fn sample_eval_candidates(
    dataset: &Dataset,
    positive: usize,
    seed: u64,
) -> Result<CandidateSet, ModelError> {
    let pool = other_video_pool(dataset, positive)?;
    let mut rng = rng_for(seed, "neg-eval", positive as u64);
    let need = EVAL_LIST_SIZE - 1;
    let picks: Vec<usize> = if pool.len() >= need {
        // partial Fisher-Yates over a copy
        let mut pool = pool;
        for i in 0..need {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(need);
        pool
    } else {
        (0..need).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    };

    let positive_index = rng.gen_range(0..EVAL_LIST_SIZE);
    let mut candidates = Vec::with_capacity(EVAL_LIST_SIZE);
    let mut sources = Vec::with_capacity(EVAL_LIST_SIZE);
    let mut negs = picks.into_iter();
    for slot in 0..EVAL_LIST_SIZE {
        if slot == positive_index {
            candidates.push(dataset.instances[positive].response.clone());
            sources.push(None);
        } else {
            let idx = negs.next().expect("nine negatives");
            candidates.push(dataset.instances[idx].response.clone());
            sources.push(Some(idx));
        }
    }
    Ok(CandidateSet {
        candidates,
        positive_index,
        sources,
        seed,
    })
}
