use serde::{Deserialize, Serialize};

use super::losses::{classification_loss, generative_max_margin, joint_loss, max_margin_loss};
use super::negatives::sample_train_negatives;
use super::{Dataset, DiscLoss, DiscriminativeModel, GenerativeModel, LanguageModel, ModelError};
use crate::numerics::rng::{rng_for, substream_seed};
use crate::numerics::{clip_global_norm, Adam, Graph, ParameterStore, Var};

/// How many corrupted-modality negatives each positive trains against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Wrong video, wrong chat, and wrong response.
    Three,
    /// Just a wrong response.
    ResponseOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    pub negatives: NegativeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0001,
            batch: 32,
            clip_norm: 2.0,
            epochs: 5,
            seed: 42,
            negatives: NegativeMode::Three,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lr <= 0.0 || self.clip_norm <= 0.0 || self.batch == 0 {
            return Err(ModelError::BadConfig(
                "lr, clip_norm, and batch must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
}

/// Callback run after each epoch with (epoch, params, mean epoch loss).
/// Returning a metric enables model selection: the highest-metric epoch's
/// parameters are restored into the store when training ends.
pub type EpochHook<'a> = dyn FnMut(usize, &ParameterStore, f64) -> Result<Option<f64>, ModelError> + 'a;

fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    use rand::Rng;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, "shuffle", epoch as u64);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn run_batches<F>(
    store: &mut ParameterStore,
    dataset_len: usize,
    cfg: &TrainConfig,
    mut example_loss: F,
    mut on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport, ModelError>
where
    F: FnMut(&Graph, &ParameterStore, usize, u64) -> Result<Var, ModelError>,
{
    cfg.validate()?;
    if dataset_len == 0 {
        return Err(ModelError::BadConfig("empty dataset"));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, usize, ParameterStore)> = None;

    for epoch in 0..cfg.epochs {
        let order = shuffled_indices(dataset_len, cfg.seed, epoch);
        let neg_seed = substream_seed(cfg.seed, "epoch-negatives", epoch as u64);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let g = Graph::new();
            let mut terms = Vec::with_capacity(chunk.len());
            for &i in chunk {
                terms.push(example_loss(&g, store, i, neg_seed)?);
            }
            let total = g.add_n(&terms)?;
            let batch_loss = g.scale(total, 1.0 / terms.len() as f64);
            let value = g.item(batch_loss);
            if !value.is_finite() {
                return Err(ModelError::NumericFailure(format!(
                    "batch loss is {value} at epoch {epoch}"
                )));
            }
            g.backward(batch_loss)?;
            g.grads_into(store)?;
            clip_global_norm(store, cfg.clip_norm);
            adam.step(store);
            loss_sum += value;
            batches += 1;
        }
        let epoch_loss = loss_sum / batches as f64;
        report.epoch_losses.push(epoch_loss);
        if let Some(hook) = on_epoch.as_deref_mut() {
            if let Some(metric) = hook(epoch, store, epoch_loss)? {
                let better = best.as_ref().map(|(m, _, _)| metric > *m).unwrap_or(true);
                if better {
                    best = Some((metric, epoch, store.clone()));
                }
            }
        }
    }
    if let Some((metric, epoch, params)) = best {
        *store = params;
        report.best_epoch = Some(epoch);
        report.best_metric = Some(metric);
    }
    Ok(report)
}

/// Mini-batch training of a discriminative scorer with max-margin or
/// classification loss over sampled negatives.
pub fn train_discriminative(
    model: &DiscriminativeModel,
    store: &mut ParameterStore,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport, ModelError> {
    let margin = model.cfg.margin;
    let loss_kind = model.cfg.loss;
    let negatives = cfg.negatives;
    run_batches(
        store,
        dataset.len(),
        cfg,
        |g, store, i, neg_seed| {
            let inst = &dataset.instances[i];
            let negs = sample_train_negatives(dataset, i, neg_seed)?;
            let p_pos = model
                .score_parts(g, store, &inst.video, &inst.chat, &inst.response)?
                .probability;
            let mut p_negs = Vec::with_capacity(3);
            match negatives {
                NegativeMode::Three => {
                    let nv = &dataset.instances[negs.wrong_video];
                    let nu = &dataset.instances[negs.wrong_chat];
                    let nr = &dataset.instances[negs.wrong_response];
                    p_negs.push(
                        model
                            .score_parts(g, store, &nv.video, &inst.chat, &inst.response)?
                            .probability,
                    );
                    p_negs.push(
                        model
                            .score_parts(g, store, &inst.video, &nu.chat, &inst.response)?
                            .probability,
                    );
                    p_negs.push(
                        model
                            .score_parts(g, store, &inst.video, &inst.chat, &nr.response)?
                            .probability,
                    );
                }
                NegativeMode::ResponseOnly => {
                    let nr = &dataset.instances[negs.wrong_response];
                    p_negs.push(
                        model
                            .score_parts(g, store, &inst.video, &inst.chat, &nr.response)?
                            .probability,
                    );
                }
            }
            let loss = match loss_kind {
                DiscLoss::MaxMargin => max_margin_loss(g, p_pos, &p_negs, margin)?,
                DiscLoss::Classification => classification_loss(g, p_pos, &p_negs)?,
            };
            Ok(loss)
        },
        on_epoch.take(),
    )
}

/// Mini-batch training of a generative decoder: cross-entropy plus the
/// weighted max-margin term over decoder likelihoods when lambda > 0.
pub fn train_generative(
    model: &GenerativeModel,
    store: &mut ParameterStore,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport, ModelError> {
    let lambda = model.cfg.lambda;
    let margin = model.cfg.margin;
    run_batches(
        store,
        dataset.len(),
        cfg,
        |g, store, i, neg_seed| {
            let inst = &dataset.instances[i];
            let xe = model
                .xe_loss(g, store, &inst.video, &inst.chat, &inst.response)?
                .loss;
            if lambda == 0.0 {
                return Ok(xe);
            }
            let negs = sample_train_negatives(dataset, i, neg_seed)?;
            let nv = &dataset.instances[negs.wrong_video];
            let nu = &dataset.instances[negs.wrong_chat];
            let nr = &dataset.instances[negs.wrong_response];
            let logp_pos = g.neg(xe);
            let lp_wrong_video = g.neg(
                model
                    .xe_loss(g, store, &nv.video, &inst.chat, &inst.response)?
                    .loss,
            );
            let lp_wrong_chat = g.neg(
                model
                    .xe_loss(g, store, &inst.video, &nu.chat, &inst.response)?
                    .loss,
            );
            let lp_wrong_response = g.neg(
                model
                    .xe_loss(g, store, &inst.video, &inst.chat, &nr.response)?
                    .loss,
            );
            let mm = generative_max_margin(
                g,
                logp_pos,
                &[lp_wrong_video, lp_wrong_chat, lp_wrong_response],
                margin,
            )?;
            Ok(joint_loss(g, xe, mm, lambda)?)
        },
        on_epoch.take(),
    )
}

/// Next-token training of the baseline language model over raw sequences.
pub fn train_lm(
    model: &LanguageModel,
    store: &mut ParameterStore,
    sequences: &[Vec<String>],
    cfg: &TrainConfig,
    mut on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport, ModelError> {
    run_batches(
        store,
        sequences.len(),
        cfg,
        |g, store, i, _| {
            let (loss, _) = model.xe_loss(g, store, &sequences[i])?;
            Ok(loss)
        },
        on_epoch.take(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{build_vocab, VocabOptions};
    use crate::models::{
        DiscVariant, DiscriminativeConfig, GenVariant, GenerativeConfig, Instance, ModelDims,
    };
    use crate::numerics::Tensor;

    fn toy_dataset() -> Dataset {
        let words = ["goal", "save", "pass", "shot", "kick", "run"];
        let instances = (0..6)
            .map(|i| Instance {
                video_id: format!("v{i}"),
                window_index: 0,
                video: Tensor::from_fn(2, 3, |r, c| ((i + r + c) as f64) * 0.1 - 0.3),
                chat: vec![
                    vec![words[i].to_string(), "now".to_string()],
                    vec![words[(i + 1) % 6].to_string()],
                ],
                response: vec![words[i].to_string(), words[i].to_string()],
                references: vec![vec![words[i].to_string()]],
            })
            .collect();
        Dataset { instances }
    }

    fn table(ds: &Dataset) -> crate::encoders::EmbeddingTable {
        let lists = ds.token_lists();
        build_vocab(
            lists.iter().copied(),
            &VocabOptions {
                d_emb: 3,
                seed: 11,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_leave_parameters_unchanged() {
        let ds = toy_dataset();
        let (model, mut store) = DiscriminativeModel::init(
            DiscriminativeConfig::default(),
            ModelDims::toy(),
            &table(&ds),
            17,
        )
        .unwrap();
        let before = store.pack_values();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let report = train_discriminative(&model, &mut store, &ds, &cfg, None).unwrap();
        assert!(report.epoch_losses.is_empty());
        assert_eq!(store.pack_values(), before);
    }

    #[test]
    fn discriminative_loss_drops_with_training() {
        let ds = toy_dataset();
        let (model, mut store) = DiscriminativeModel::init(
            DiscriminativeConfig {
                variant: DiscVariant::Triple,
                ..Default::default()
            },
            ModelDims::toy(),
            &table(&ds),
            17,
        )
        .unwrap();
        let cfg = TrainConfig {
            lr: 0.01,
            batch: 3,
            epochs: 12,
            seed: 5,
            ..Default::default()
        };
        let report = train_discriminative(&model, &mut store, &ds, &cfg, None).unwrap();
        let first = report.epoch_losses[0];
        let last = *report.epoch_losses.last().unwrap();
        assert!(last < first, "loss did not drop: {first} -> {last}");
    }

    #[test]
    fn generative_loss_strictly_decreases_on_one_example() {
        let ds = Dataset {
            instances: vec![toy_dataset().instances[0].clone(), toy_dataset().instances[1].clone()],
        };
        let (model, mut store) = GenerativeModel::init(
            GenerativeConfig {
                variant: GenVariant::Seq2seqBoth,
                lambda: 0.0,
                ..Default::default()
            },
            ModelDims::toy(),
            &table(&ds),
            19,
        )
        .unwrap();
        // one example per batch step over 50 steps
        let single = Dataset {
            instances: vec![ds.instances[0].clone()],
        };
        let cfg = TrainConfig {
            lr: 0.005,
            batch: 1,
            epochs: 50,
            seed: 3,
            ..Default::default()
        };
        let report = train_generative(&model, &mut store, &single, &cfg, None).unwrap();
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] < w[0], "not strictly decreasing: {w:?}");
        }
    }

    #[test]
    fn epoch_hook_selects_best_parameters() {
        let ds = toy_dataset();
        let (model, mut store) = DiscriminativeModel::init(
            DiscriminativeConfig::default(),
            ModelDims::toy(),
            &table(&ds),
            17,
        )
        .unwrap();
        let cfg = TrainConfig {
            lr: 0.01,
            batch: 3,
            epochs: 4,
            seed: 5,
            ..Default::default()
        };
        let mut snapshots: Vec<Vec<f64>> = Vec::new();
        let metrics = [0.1, 0.9, 0.3, 0.2];
        let mut hook = |epoch: usize, params: &ParameterStore, _loss: f64| {
            snapshots.push(params.pack_values());
            Ok(Some(metrics[epoch]))
        };
        let report =
            train_discriminative(&model, &mut store, &ds, &cfg, Some(&mut hook)).unwrap();
        assert_eq!(report.best_epoch, Some(1));
        assert_eq!(store.pack_values(), snapshots[1]);
    }

    #[test]
    fn nan_in_loss_aborts_with_numeric_error() {
        let ds = toy_dataset();
        let (model, mut store) = DiscriminativeModel::init(
            DiscriminativeConfig::default(),
            ModelDims::toy(),
            &table(&ds),
            17,
        )
        .unwrap();
        // poison a parameter
        store
            .set_value("score.b", Tensor::new(vec![1, 1], vec![f64::NAN]).unwrap())
            .unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let err = train_discriminative(&model, &mut store, &ds, &cfg, None);
        assert!(matches!(err, Err(ModelError::NumericFailure(_))), "{err:?}");
    }
}
