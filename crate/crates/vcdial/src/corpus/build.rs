use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::chat::{anonymize, USER_TAG};
use super::features::VideoFeatures;
use super::window::segment_windows;
use super::{compute_bleu4, CorpusError, DialogueTriple, PipelineConfig, Utterance, VideoSegment};

/// How a response was chosen for its window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    /// Earliest utterance that agreed with another one in the window.
    BleuMatch,
    /// Nothing met the similarity bar; first utterance taken as-is.
    FallbackFirst,
}

/// Most frequent normalized utterance strings in a (training) log.
/// Ties at the cutoff keep the lexicographically smaller string.
pub fn top_frequent_utterances(utterances: &[Utterance], n: usize) -> BTreeSet<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for u in utterances {
        *counts.entry(u.tokens.join(" ")).or_insert(0) += 1;
    }
    let mut pairs: Vec<(String, usize)> = counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs.into_iter().take(n).map(|(s, _)| s).collect()
}

/// Drop response-window utterances that mention a user id outside the
/// context window's speakers.
pub fn filter_speaker_refs(
    utterances: &[Utterance],
    context_speakers: &HashSet<String>,
    all_user_ids: &HashSet<String>,
) -> Vec<Utterance> {
    utterances
        .iter()
        .filter(|u| {
            !u.tokens.iter().any(|t| {
                let bare = t.strip_prefix('@').unwrap_or(t);
                all_user_ids.contains(bare) && !context_speakers.contains(bare)
            })
        })
        .cloned()
        .collect()
}

/// Pick the response for a (time-sorted, already speaker-filtered) response
/// window. Two passes: first the earliest non-frequent utterance whose
/// BLEU-4 against any other utterance in the window clears the threshold,
/// then the same scan allowing frequent utterances. If neither pass finds
/// agreement, the window's first utterance is used.
pub fn select_response(
    window: &[Utterance],
    frequent: &BTreeSet<String>,
    cfg: &PipelineConfig,
) -> Option<(Vec<String>, SelectionReason)> {
    if window.is_empty() {
        return None;
    }
    let agrees_with_any_other = |i: usize| {
        window.iter().enumerate().any(|(j, other)| {
            j != i
                && compute_bleu4(&window[i].tokens, &other.tokens, cfg.bleu_smoothing)
                    .map(|b| b >= cfg.bleu_threshold)
                    .unwrap_or(false)
        })
    };
    let is_frequent = |u: &Utterance| frequent.contains(&u.tokens.join(" "));

    for (i, u) in window.iter().enumerate() {
        if !is_frequent(u) && agrees_with_any_other(i) {
            return Some((u.tokens.clone(), SelectionReason::BleuMatch));
        }
    }
    for (i, u) in window.iter().enumerate() {
        if is_frequent(u) && agrees_with_any_other(i) {
            return Some((u.tokens.clone(), SelectionReason::BleuMatch));
        }
    }
    Some((window[0].tokens.clone(), SelectionReason::FallbackFirst))
}

/// One triple as written to the dataset JSONL.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripleRecord {
    pub video_id: String,
    pub window_index: u32,
    pub context_interval: [f64; 2],
    pub response_interval: [f64; 2],
    pub chat: Vec<UtteranceRecord>,
    pub response_tokens: Vec<String>,
    pub selection_reason: SelectionReason,
    pub features_path: String,
    pub feature_rows: [u32; 2],
    /// Every (filtered, anonymized) utterance in the response window;
    /// these act as the reference set for phrase-matching metrics.
    pub response_window: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub speaker: String,
    pub time: f64,
    pub tokens: Vec<String>,
}

/// A triple in memory plus its serialized record.
#[derive(Clone, Debug)]
pub struct BuiltTriple {
    pub triple: DialogueTriple,
    pub record: TripleRecord,
}

/// Run the full extraction for one video: tile windows, filter contexts,
/// select responses, anonymize, and attach frame features.
pub fn build_triples(
    video_id: &str,
    log: &[Utterance],
    features: &VideoFeatures,
    cfg: &PipelineConfig,
    frequent: &BTreeSet<String>,
) -> Result<Vec<BuiltTriple>, CorpusError> {
    cfg.validate()?;
    let all_ids: HashSet<String> = log.iter().map(|u| u.speaker.clone()).collect();
    let duration = features.duration(cfg.fps);
    let mut out = Vec::new();

    for (w, (ctx_iv, resp_iv)) in segment_windows(duration, cfg).into_iter().enumerate() {
        let context: Vec<&Utterance> = log
            .iter()
            .filter(|u| u.time >= ctx_iv.0 && u.time < ctx_iv.1)
            .collect();
        if context.len() < cfg.min_context_utts {
            continue;
        }
        let context_speakers: HashSet<String> =
            context.iter().map(|u| u.speaker.clone()).collect();

        let response_window_raw: Vec<Utterance> = log
            .iter()
            .filter(|u| u.time >= resp_iv.0 && u.time < resp_iv.1)
            .cloned()
            .collect();
        let response_window = filter_speaker_refs(&response_window_raw, &context_speakers, &all_ids);
        let Some((response_raw, selection_reason)) = select_response(&response_window, frequent, cfg)
        else {
            continue;
        };

        let (frames, rows) = features
            .slice(ctx_iv.0, ctx_iv.1, cfg.fps, cfg.max_video_steps())
            .ok_or_else(|| CorpusError::MissingFeatures {
                video_id: video_id.to_string(),
                start: ctx_iv.0,
                end: ctx_iv.1,
            })?;

        let chat: Vec<Utterance> = context
            .iter()
            .map(|u| anonymize(u, &context_speakers))
            .collect();
        let response = anonymize_tokens(&response_raw, &context_speakers);
        let references: Vec<Vec<String>> = response_window
            .iter()
            .map(|u| anonymize(u, &context_speakers).tokens)
            .collect();

        let record = TripleRecord {
            video_id: video_id.to_string(),
            window_index: w as u32,
            context_interval: [ctx_iv.0, ctx_iv.1],
            response_interval: [resp_iv.0, resp_iv.1],
            chat: chat
                .iter()
                .map(|u| UtteranceRecord {
                    speaker: u.speaker.clone(),
                    time: u.time,
                    tokens: u.tokens.clone(),
                })
                .collect(),
            response_tokens: response.clone(),
            selection_reason,
            features_path: features.path.display().to_string(),
            feature_rows: [rows.0, rows.1],
            response_window: references,
        };
        out.push(BuiltTriple {
            triple: DialogueTriple {
                video: VideoSegment {
                    frames,
                    start: ctx_iv.0,
                    end: ctx_iv.1,
                },
                chat,
                response,
                selection_reason,
                window_index: w as u32,
            },
            record,
        });
    }
    Ok(out)
}

fn anonymize_tokens(tokens: &[String], known: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let bare = t.strip_prefix('@').unwrap_or(t);
            if known.contains(bare) {
                USER_TAG.to_string()
            } else {
                t.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_vfea;
    use crate::numerics::Tensor;

    fn utt(speaker: &str, time: f64, text: &str) -> Utterance {
        Utterance {
            speaker: speaker.into(),
            time,
            tokens: text.split_whitespace().map(str::to_string).collect(),
        }
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn earliest_agreeing_response_wins() {
        let window = vec![
            utt("x", 21.0, "goal goal goal"),
            utt("y", 22.0, "nice"),
            utt("z", 23.0, "goal goal goal"),
        ];
        let (tokens, reason) = select_response(&window, &BTreeSet::new(), &cfg()).unwrap();
        assert_eq!(tokens, ["goal", "goal", "goal"]);
        assert_eq!(reason, SelectionReason::BleuMatch);
    }

    #[test]
    fn no_agreement_falls_back_to_first() {
        let window = vec![
            utt("x", 21.0, "completely different words"),
            utt("y", 22.0, "nothing shared here"),
        ];
        let (tokens, reason) = select_response(&window, &BTreeSet::new(), &cfg()).unwrap();
        assert_eq!(tokens, ["completely", "different", "words"]);
        assert_eq!(reason, SelectionReason::FallbackFirst);
    }

    #[test]
    fn empty_window_selects_nothing() {
        assert!(select_response(&[], &BTreeSet::new(), &cfg()).is_none());
    }

    #[test]
    fn frequent_utterance_only_matches_in_second_pass() {
        let frequent: BTreeSet<String> = ["kappa".to_string()].into_iter().collect();
        // only the frequent utterance has a match; pass 2 picks it
        let window = vec![
            utt("a", 21.0, "kappa"),
            utt("b", 22.0, "unmatched words here"),
            utt("c", 23.0, "kappa"),
        ];
        let (tokens, reason) = select_response(&window, &frequent, &cfg()).unwrap();
        assert_eq!(tokens, ["kappa"]);
        assert_eq!(reason, SelectionReason::BleuMatch);

        // a non-frequent match outranks an earlier frequent one
        let window = vec![
            utt("a", 21.0, "kappa"),
            utt("b", 22.0, "what a goal"),
            utt("c", 23.0, "kappa"),
            utt("d", 24.0, "what a goal"),
        ];
        let (tokens, _) = select_response(&window, &frequent, &cfg()).unwrap();
        assert_eq!(tokens, ["what", "a", "goal"]);
    }

    #[test]
    fn frequent_set_ranks_by_count_then_lexicographic() {
        let utts = vec![
            utt("a", 0.0, "goal"),
            utt("b", 1.0, "goal"),
            utt("c", 2.0, "kappa"),
            utt("d", 3.0, "zz top"),
        ];
        let top = top_frequent_utterances(&utts, 2);
        assert!(top.contains("goal"));
        // kappa and "zz top" tie at 1; lexicographically smaller kept
        assert!(top.contains("kappa"));
        assert!(!top.contains("zz top"));

        let all = top_frequent_utterances(&utts, 20);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn speaker_ref_filter_drops_out_of_context_mentions() {
        let all: HashSet<String> = ["alice", "bob", "carol"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ctx: HashSet<String> = ["alice".to_string()].into_iter().collect();
        let utts = vec![
            utt("alice", 21.0, "nice one @bob"), // bob not in context → dropped
            utt("alice", 22.0, "nice one alice"), // alice in context → kept
            utt("alice", 23.0, "carol wins"),    // bare mention, out of context → dropped
            utt("alice", 24.0, "plain message"),
        ];
        let kept = filter_speaker_refs(&utts, &ctx, &all);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].tokens, ["nice", "one", "alice"]);
        assert_eq!(kept[1].tokens, ["plain", "message"]);
    }

    fn sixty_second_fixture() -> (Vec<Utterance>, VideoFeatures, tempfile::TempDir) {
        let mut log = Vec::new();
        // context window 0: [0, 20) with 4 utterances
        log.push(utt("u1", 1.0, "hello there"));
        log.push(utt("u2", 5.0, "big match today"));
        log.push(utt("u3", 9.0, "who scores first"));
        log.push(utt("u4", 15.0, "watch this"));
        // response window 0: [20, 30), with agreement
        log.push(utt("u5", 21.0, "what a goal"));
        log.push(utt("u6", 25.0, "what a goal"));
        // context window 1: [30, 50)
        log.push(utt("u1", 31.0, "second half now"));
        log.push(utt("u2", 35.0, "defense looks shaky"));
        log.push(utt("u3", 41.0, "they need a sub"));
        log.push(utt("u4", 47.0, "keeper is great"));
        // response window 1: [50, 60)
        log.push(utt("u5", 51.0, "goal again"));
        log.push(utt("u6", 57.0, "goal again"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("match01.vfea");
        let frames = Tensor::from_fn(180, 4, |i, j| (i + j) as f64 * 0.01);
        write_vfea(&path, &frames).unwrap();
        let features = VideoFeatures::load(&path).unwrap();
        (log, features, dir)
    }

    #[test]
    fn sixty_second_log_yields_two_triples() {
        let (log, features, _dir) = sixty_second_fixture();
        let built = build_triples("match01", &log, &features, &cfg(), &BTreeSet::new()).unwrap();
        assert_eq!(built.len(), 2);
        assert_eq!(built[0].record.context_interval, [0.0, 20.0]);
        assert_eq!(built[0].record.response_interval, [20.0, 30.0]);
        assert_eq!(built[1].record.context_interval, [30.0, 50.0]);
        assert_eq!(built[1].record.response_interval, [50.0, 60.0]);
        assert_eq!(built[0].triple.response, ["what", "a", "goal"]);
        assert_eq!(built[0].record.feature_rows, [0, 60]);
        assert_eq!(built[1].record.feature_rows, [90, 150]);
        // responses never overlap the next context window
        assert!(built[0].record.response_interval[1] <= built[1].record.context_interval[0]);
    }

    #[test]
    fn small_context_window_is_excluded() {
        let (mut log, features, _dir) = sixty_second_fixture();
        // drop one utterance from context 0, leaving 3 < 4
        log.remove(0);
        let built = build_triples("match01", &log, &features, &cfg(), &BTreeSet::new()).unwrap();
        assert_eq!(built.len(), 1);
        assert_eq!(built[0].record.window_index, 1);
    }

    #[test]
    fn empty_response_window_is_excluded() {
        let (log, features, _dir) = sixty_second_fixture();
        let log: Vec<Utterance> = log
            .into_iter()
            .filter(|u| !(u.time >= 50.0 && u.time < 60.0))
            .collect();
        let built = build_triples("match01", &log, &features, &cfg(), &BTreeSet::new()).unwrap();
        assert_eq!(built.len(), 1);
        assert_eq!(built[0].record.window_index, 0);
    }

    #[test]
    fn mentions_are_anonymized_in_output() {
        let (mut log, features, _dir) = sixty_second_fixture();
        log.push(utt("u2", 16.0, "nice pass @u1"));
        let built = build_triples("match01", &log, &features, &cfg(), &BTreeSet::new()).unwrap();
        let chat = &built[0].triple.chat;
        let mentioned: Vec<&Vec<String>> = chat
            .iter()
            .filter(|u| u.tokens.contains(&USER_TAG.to_string()))
            .map(|u| &u.tokens)
            .collect();
        assert_eq!(mentioned.len(), 1);
        assert_eq!(mentioned[0], &["nice", "pass", USER_TAG]);
    }
}
